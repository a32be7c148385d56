#include "seqpred/infer.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <utility>

#include "seqpred/eventlog.hpp"

namespace seqpred {

namespace {

void check_decode_args(const std::vector<std::vector<double>>& prefix, int max_steps) {
  if (prefix.empty()) throw std::invalid_argument("decode: prefix is empty");
  if (max_steps < 1) throw std::invalid_argument("decode: max_steps must be at least 1");
}

struct Hypothesis {
  RawState state;            // decoder state before consuming `input`
  std::vector<double> input; // next decoder input event
  std::vector<int> activities;
  std::vector<double> durations;
  double score = 0.0;
};

} // namespace

Prediction greedy_decode(const Generator& g, const std::vector<std::vector<double>>& prefix,
                         int max_steps) {
  check_decode_args(prefix, max_steps);
  const int m = g.vocab_size;
  RawState state = raw_encode_prefix(g, prefix);
  std::vector<double> input = encoded_sos(m);
  std::vector<double> pi;
  double t = 0.0;

  Prediction out;
  out.truncated = true;
  for (int step = 0; step < max_steps; ++step) {
    raw_decoder_step(g, input, state, pi, t);
    int best = Vocabulary::kEos; // lowest index the decoder may emit
    for (int a = best + 1; a < m; ++a)
      if (pi[a] > pi[best]) best = a;
    out.activities.push_back(best);
    out.durations.push_back(t);
    out.score += std::log(pi[best]);
    if (best == Vocabulary::kEos) {
      out.truncated = false;
      break;
    }
    input = encode_event(best, t, m);
  }
  return out;
}

std::vector<Prediction> beam_search(const Generator& g,
                                    const std::vector<std::vector<double>>& prefix,
                                    const BeamConfig& cfg) {
  check_decode_args(prefix, cfg.max_steps);
  if (cfg.width < 1) throw std::invalid_argument("beam_search: width must be at least 1");
  const int m = g.vocab_size;

  std::vector<Hypothesis> live;
  live.push_back({raw_encode_prefix(g, prefix), encoded_sos(m), {}, {}, 0.0});
  std::vector<Prediction> completed;

  struct Candidate {
    int parent = 0;
    int activity = 0;
    double duration = 0.0;
    double score = 0.0;
  };

  for (int step = 0; step < cfg.max_steps && !live.empty(); ++step) {
    std::vector<RawState> advanced(live.size());
    std::vector<Candidate> candidates;
    candidates.reserve(live.size() * static_cast<std::size_t>(m - 1));
    std::vector<double> pi;
    double t = 0.0;
    for (std::size_t h = 0; h < live.size(); ++h) {
      advanced[h] = live[h].state;
      raw_decoder_step(g, live[h].input, advanced[h], pi, t);
      for (int a = Vocabulary::kEos; a < m; ++a)
        candidates.push_back({static_cast<int>(h), a, t, live[h].score + std::log(pi[a])});
    }
    std::sort(candidates.begin(), candidates.end(), [](const Candidate& x, const Candidate& y) {
      if (x.score != y.score) return x.score > y.score;
      if (x.activity != y.activity) return x.activity < y.activity;
      return x.parent < y.parent;
    });

    const int capacity = cfg.width - static_cast<int>(completed.size());
    const int take = std::min(capacity, static_cast<int>(candidates.size()));
    std::vector<Hypothesis> next;
    next.reserve(static_cast<std::size_t>(take));
    for (int i = 0; i < take; ++i) {
      const Candidate& c = candidates[static_cast<std::size_t>(i)];
      const Hypothesis& parent = live[static_cast<std::size_t>(c.parent)];
      if (c.activity == Vocabulary::kEos) {
        Prediction done;
        done.activities = parent.activities;
        done.activities.push_back(c.activity);
        done.durations = parent.durations;
        done.durations.push_back(c.duration);
        done.score = c.score;
        completed.push_back(std::move(done));
      } else {
        Hypothesis h;
        h.state = advanced[static_cast<std::size_t>(c.parent)];
        h.input = encode_event(c.activity, c.duration, m);
        h.activities = parent.activities;
        h.activities.push_back(c.activity);
        h.durations = parent.durations;
        h.durations.push_back(c.duration);
        h.score = c.score;
        next.push_back(std::move(h));
      }
    }
    live = std::move(next);
  }

  auto by_score = [](const Prediction& a, const Prediction& b) { return a.score > b.score; };
  std::stable_sort(completed.begin(), completed.end(), by_score);

  std::vector<Prediction> truncated;
  truncated.reserve(live.size());
  for (Hypothesis& h : live) {
    Prediction p;
    p.activities = std::move(h.activities);
    p.durations = std::move(h.durations);
    p.score = h.score;
    p.truncated = true;
    truncated.push_back(std::move(p));
  }
  std::stable_sort(truncated.begin(), truncated.end(), by_score);

  std::vector<Prediction> ranked = std::move(completed);
  for (Prediction& p : truncated) ranked.push_back(std::move(p));
  return ranked;
}

} // namespace seqpred
