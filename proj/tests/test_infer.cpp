#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <vector>

#include "seqpred/eventlog.hpp"
#include "seqpred/infer.hpp"
#include "seqpred/nn.hpp"

using namespace seqpred;

namespace {

std::vector<std::vector<double>> random_prefix(Rng& rng, int m, int length) {
  std::vector<std::vector<double>> prefix;
  for (int i = 0; i < length; ++i) {
    std::vector<double> weights(static_cast<std::size_t>(m), 1.0);
    prefix.push_back(encode_event(rng.weighted_index(weights), rng.uniform01(), m));
  }
  return prefix;
}

void zero_parameters(Generator& g) {
  for (Tensor* p : g.parameters())
    for (double& v : p->data) v = 0.0;
}

// Zeroed LSTM weights keep the cell state at zero, so the activity head bias
// alone fixes one distribution used at every step.
Generator fixed_distribution_model(const std::vector<double>& logits, double duration) {
  Rng rng(1);
  Generator g = init_generator(static_cast<int>(logits.size()), 4, 1, rng);
  zero_parameters(g);
  for (std::size_t i = 0; i < logits.size(); ++i) g.b_act.data[i] = logits[i];
  g.b_time.data[0] = duration;
  return g;
}

// Saturated gates make the decoder hidden state a function of the last
// consumed activity only, so per-context next-activity distributions can be
// dialed in exactly: pi(a | last = u) = softmax over a of col[u][a].
Generator markov_model(const std::vector<std::vector<double>>& col_logits) {
  const int m = static_cast<int>(col_logits.size());
  const int h = m;
  Rng rng(1);
  Generator g = init_generator(m, h, 1, rng);
  zero_parameters(g);
  LstmLayer& cell = g.decoder.layers[0];
  const int in_h = m + 1 + h;
  for (int u = 0; u < h; ++u) {
    cell.b.data[static_cast<std::size_t>(0 * h + u)] = 40.0;  // input gate open
    cell.b.data[static_cast<std::size_t>(1 * h + u)] = -40.0; // forget gate shut
    cell.b.data[static_cast<std::size_t>(3 * h + u)] = 40.0;  // output gate open
    // candidate row: unit u saturates when activity u was just consumed
    cell.w.data[static_cast<std::size_t>((2 * h + u) * in_h + u)] = 40.0;
  }
  const double unit = std::tanh(1.0); // hidden activation of the saturated unit
  for (int u = 0; u < m; ++u)
    for (int a = 0; a < m; ++a)
      g.w_act.data[static_cast<std::size_t>(a * h + u)] = col_logits[static_cast<std::size_t>(u)][static_cast<std::size_t>(a)] / unit;
  return g;
}

struct BruteResult {
  std::vector<int> activities;
  std::vector<double> durations;
  double score = 0.0;
  bool truncated = false;
};

// every decode trajectory (non-end activities, then an optional end token)
// up to the cap, scored along the same raw path the search uses
void enumerate_trajectories(const Generator& g, const RawState& state,
                            const std::vector<double>& input, std::vector<int> acts,
                            std::vector<double> durs, double score, int cap,
                            std::vector<BruteResult>& out) {
  if (cap == 0) {
    out.push_back({acts, durs, score, true});
    return;
  }
  std::vector<double> pi;
  double t = 0.0;
  RawState stepped = state;
  raw_decoder_step(g, input, stepped, pi, t);
  for (int a = Vocabulary::kEos; a < g.vocab_size; ++a) {
    std::vector<int> acts2 = acts;
    acts2.push_back(a);
    std::vector<double> durs2 = durs;
    durs2.push_back(t);
    const double score2 = score + std::log(pi[static_cast<std::size_t>(a)]);
    if (a == Vocabulary::kEos) {
      out.push_back({acts2, durs2, score2, false});
    } else {
      enumerate_trajectories(g, stepped, encode_event(a, t, g.vocab_size), acts2, durs2, score2,
                             cap - 1, out);
    }
  }
}

std::vector<BruteResult> brute_force(const Generator& g,
                                     const std::vector<std::vector<double>>& prefix, int cap) {
  std::vector<BruteResult> out;
  enumerate_trajectories(g, raw_encode_prefix(g, prefix), encoded_sos(g.vocab_size), {}, {}, 0.0,
                         cap, out);
  return out;
}

bool same_prediction(const Prediction& a, const Prediction& b) {
  return a.activities == b.activities && a.durations == b.durations && a.score == b.score &&
         a.truncated == b.truncated;
}

} // namespace

TEST_CASE("decode arguments are validated") {
  Rng rng(2);
  Generator g = init_generator(4, 4, 1, rng);
  std::vector<std::vector<double>> prefix = random_prefix(rng, 4, 2);
  CHECK_THROWS_AS(greedy_decode(g, {}, 3), std::invalid_argument);
  CHECK_THROWS_AS(greedy_decode(g, prefix, 0), std::invalid_argument);
  CHECK_THROWS_AS(beam_search(g, prefix, {0, 3}), std::invalid_argument);
  CHECK_THROWS_AS(beam_search(g, prefix, {1, 0}), std::invalid_argument);
}

TEST_CASE("a model that always emits the end token stops greedy decode at one step") {
  Generator g = fixed_distribution_model({-40.0, 40.0, -40.0, -40.0}, 0.25);
  std::vector<std::vector<double>> prefix = {encode_event(2, 0.0, 4)};
  Prediction p = greedy_decode(g, prefix, 5);
  CHECK(p.activities == std::vector<int>{Vocabulary::kEos});
  CHECK(p.durations.size() == 1);
  CHECK(p.durations[0] == 0.25);
  CHECK_FALSE(p.truncated);
  CHECK(p.score == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("the step cap flags a hypothesis that never finishes as truncated") {
  // activity index 2 dominates every step
  Generator g = fixed_distribution_model({-40.0, -40.0, 40.0, -40.0}, 0.0);
  std::vector<std::vector<double>> prefix = {encode_event(2, 0.0, 4)};
  Prediction p = greedy_decode(g, prefix, 3);
  CHECK(p.activities == std::vector<int>{2, 2, 2});
  CHECK(p.truncated);
}

TEST_CASE("beam width one reproduces greedy decode bit for bit") {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const int m = 3 + static_cast<int>(rng.next_u64() % 4);
    const int layers = 1 + static_cast<int>(rng.next_u64() % 2);
    Generator g = init_generator(m, 6, layers, rng);
    std::vector<std::vector<double>> prefix = random_prefix(rng, m, 1 + trial % 3);
    Prediction greedy = greedy_decode(g, prefix, 6);
    std::vector<Prediction> beam = beam_search(g, prefix, {1, 6});
    REQUIRE(beam.size() == 1);
    CHECK(same_prediction(greedy, beam[0]));
  }
}

TEST_CASE("no prediction contains the start token and end tokens only close suffixes") {
  Rng rng(6);
  for (int trial = 0; trial < 30; ++trial) {
    const int m = 3 + static_cast<int>(rng.next_u64() % 4);
    Generator g = init_generator(m, 5, 1, rng);
    std::vector<std::vector<double>> prefix = random_prefix(rng, m, 2);
    for (const Prediction& p : beam_search(g, prefix, {4, 5})) {
      REQUIRE_FALSE(p.activities.empty());
      for (std::size_t i = 0; i < p.activities.size(); ++i) {
        CHECK(p.activities[i] != Vocabulary::kSos);
        const bool is_last = i + 1 == p.activities.size();
        if (!is_last) CHECK(p.activities[i] != Vocabulary::kEos);
      }
      if (p.truncated)
        CHECK(p.activities.back() != Vocabulary::kEos);
      else
        CHECK(p.activities.back() == Vocabulary::kEos);
      CHECK(p.durations.size() == p.activities.size());
      for (double d : p.durations) CHECK(d >= 0.0);
    }
  }
}

TEST_CASE("a saturating beam equals brute-force enumeration on a random model") {
  Rng rng(7);
  Generator g = init_generator(4, 5, 1, rng);
  std::vector<std::vector<double>> prefix = random_prefix(rng, 4, 2);

  std::vector<BruteResult> brute = brute_force(g, prefix, 3);
  // rank exactly as the search returns: completed first, scores descending
  std::stable_sort(brute.begin(), brute.end(), [](const BruteResult& a, const BruteResult& b) {
    if (a.truncated != b.truncated) return !a.truncated;
    return a.score > b.score;
  });

  std::vector<Prediction> beam = beam_search(g, prefix, {27, 3});
  REQUIRE(beam.size() == brute.size());
  for (std::size_t i = 0; i < beam.size(); ++i) {
    CHECK(beam[i].activities == brute[i].activities);
    CHECK(beam[i].durations == brute[i].durations);
    CHECK(beam[i].score == brute[i].score);
    CHECK(beam[i].truncated == brute[i].truncated);
  }
}

TEST_CASE("a saturating beam matches brute force on a fixed per-step distribution") {
  // pi is (about) 0.5 end token, 0.3 activity 2, 0.2 activity 3 at every step
  Generator g =
      fixed_distribution_model({-40.0, std::log(0.5), std::log(0.3), std::log(0.2)}, 0.1);
  std::vector<std::vector<double>> prefix = {encode_event(2, 0.0, 4)};

  std::vector<BruteResult> brute = brute_force(g, prefix, 3);
  std::vector<Prediction> beam = beam_search(g, prefix, {27, 3});
  REQUIRE(beam.size() == brute.size());
  REQUIRE(beam.size() == 15); // 7 completed, 8 truncated

  // scores tie here, so compare segment shapes and the score multiset
  for (std::size_t i = 0; i < 7; ++i) CHECK_FALSE(beam[i].truncated);
  for (std::size_t i = 7; i < 15; ++i) CHECK(beam[i].truncated);
  for (std::size_t i = 1; i < 7; ++i) CHECK(beam[i].score <= beam[i - 1].score);
  for (std::size_t i = 8; i < 15; ++i) CHECK(beam[i].score <= beam[i - 1].score);

  std::multimap<double, std::vector<int>> expected;
  for (const BruteResult& b : brute) expected.insert({b.score, b.activities});
  for (const Prediction& p : beam) {
    auto [lo, hi] = expected.equal_range(p.score);
    bool found = false;
    for (auto it = lo; it != hi; ++it) {
      if (it->second == p.activities) {
        expected.erase(it);
        found = true;
        break;
      }
    }
    CHECK(found);
  }
  CHECK(expected.empty());

  // the best hypothesis is the immediate end token at probability one half
  CHECK(beam[0].activities == std::vector<int>{Vocabulary::kEos});
  CHECK(beam[0].score == doctest::Approx(std::log(0.5)).epsilon(1e-9));
}

TEST_CASE("beam search redeems a weaker first step that pays off later") {
  // activity 2 looks best first (0.6 vs 0.4) but stalls at 0.3/0.35/0.35,
  // while activity 3 finishes at probability 0.9
  std::vector<std::vector<double>> cols(4, std::vector<double>(4, -40.0));
  cols[0] = {-40.0, -40.0, std::log(0.6), std::log(0.4)};          // after start
  cols[2] = {-40.0, std::log(0.3), std::log(0.35), std::log(0.35)}; // after activity 2
  cols[3] = {-40.0, std::log(0.9), std::log(0.05), std::log(0.05)}; // after activity 3
  Generator g = markov_model(cols);
  std::vector<std::vector<double>> prefix = {encode_event(2, 0.0, 4)};

  Prediction greedy = greedy_decode(g, prefix, 3);
  CHECK(greedy.activities == std::vector<int>{2, 2, 2}); // ties resolve to the lower index
  CHECK(greedy.truncated);
  CHECK(greedy.score == doctest::Approx(std::log(0.6 * 0.35 * 0.35)).epsilon(1e-6));

  std::vector<Prediction> beam = beam_search(g, prefix, {2, 3});
  REQUIRE_FALSE(beam.empty());
  CHECK(beam[0].activities == std::vector<int>{3, Vocabulary::kEos});
  CHECK_FALSE(beam[0].truncated);
  CHECK(beam[0].score == doctest::Approx(std::log(0.4 * 0.9)).epsilon(1e-6));
  CHECK(beam[0].score > greedy.score);

  // width one still matches greedy on the garden path
  std::vector<Prediction> narrow = beam_search(g, prefix, {1, 3});
  REQUIRE(narrow.size() == 1);
  CHECK(same_prediction(narrow[0], greedy));
}

TEST_CASE("completed hypotheses rank before truncated ones regardless of score") {
  std::vector<std::vector<double>> cols(4, std::vector<double>(4, -40.0));
  cols[0] = {-40.0, -40.0, std::log(0.6), std::log(0.4)};
  cols[2] = {-40.0, std::log(0.3), std::log(0.35), std::log(0.35)};
  cols[3] = {-40.0, std::log(0.9), std::log(0.05), std::log(0.05)};
  Generator g = markov_model(cols);
  std::vector<std::vector<double>> prefix = {encode_event(2, 0.0, 4)};

  std::vector<Prediction> beam = beam_search(g, prefix, {3, 3});
  bool seen_truncated = false;
  for (const Prediction& p : beam) {
    if (p.truncated) seen_truncated = true;
    if (seen_truncated) CHECK(p.truncated);
  }
  // the near-impossible immediate end token completes and still outranks
  // every truncated hypothesis
  REQUIRE(beam.size() == 3);
  CHECK(beam[0].activities == std::vector<int>{3, Vocabulary::kEos});
  CHECK(beam[1].activities == std::vector<int>{Vocabulary::kEos});
  CHECK(beam[1].score < -30.0);
  CHECK(beam[2].truncated);
  CHECK(beam[2].score > beam[1].score);
}

TEST_CASE("wider beams never return a worse best hypothesis on random models") {
  Rng rng(9);
  const std::vector<int> widths = {1, 2, 3, 5, 8};
  for (int trial = 0; trial < 40; ++trial) {
    const int m = 3 + static_cast<int>(rng.next_u64() % 4);
    Generator g = init_generator(m, 5, 1, rng);
    std::vector<std::vector<double>> prefix = random_prefix(rng, m, 2);
    double prev_best = -std::numeric_limits<double>::infinity();
    for (int width : widths) {
      std::vector<Prediction> beam = beam_search(g, prefix, {width, 4});
      REQUIRE_FALSE(beam.empty());
      double best = -std::numeric_limits<double>::infinity();
      for (const Prediction& p : beam) best = std::max(best, p.score);
      CHECK(best >= prev_best);
      prev_best = best;
    }
  }
}

TEST_CASE("decoding is deterministic for a fixed model and prefix") {
  Rng rng(10);
  Generator g = init_generator(5, 6, 2, rng);
  std::vector<std::vector<double>> prefix = random_prefix(rng, 5, 3);
  std::vector<Prediction> a = beam_search(g, prefix, {4, 5});
  std::vector<Prediction> b = beam_search(g, prefix, {4, 5});
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(same_prediction(a[i], b[i]));
}
