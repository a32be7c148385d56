#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <json.hpp>

#include "seqpred/checkpoint.hpp"
#include "seqpred/infer.hpp"
#include "seqpred/rng.hpp"

using namespace seqpred;

namespace {

std::filesystem::path temp_dir() {
  static const std::filesystem::path dir = [] {
    const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
    std::filesystem::path p =
        std::filesystem::temp_directory_path() / ("seqpred_ckpt_" + std::to_string(stamp));
    std::filesystem::create_directories(p);
    return p;
  }();
  return dir;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << content;
}

Vocabulary vocab_of(const std::vector<std::string>& activities) {
  Vocabulary v;
  v.labels = {Vocabulary::kSosLabel, Vocabulary::kEosLabel};
  v.labels.insert(v.labels.end(), activities.begin(), activities.end());
  for (std::size_t i = 0; i < v.labels.size(); ++i)
    v.index[v.labels[i]] = static_cast<int>(i);
  return v;
}

CheckpointMeta sample_meta() {
  CheckpointMeta meta;
  meta.vocabulary = vocab_of({"pack", "ship", "bill"});
  meta.scaler = TimeScaler{3.5};
  meta.config.mode = TrainConfig::Mode::Mlmme;
  meta.config.iterations = 42;
  meta.config.patience = 7;
  meta.config.learning_rate = 1e-3;
  meta.config.teacher_forcing_ratio = 0.25;
  meta.config.seed = 99;
  meta.seed = 99;
  meta.summary.iterations_run = 42;
  meta.summary.best_iteration = 17;
  meta.summary.best_validation = 0.123456789012345678;
  meta.summary.d_updates_total = 84;
  meta.summary.g_updates_total = 168;
  meta.summary.total_seconds = 12.5; // must not leak into the artifact
  return meta;
}

} // namespace

TEST_CASE("the payload hash matches published fnv1a reference values") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a64("foobar") == 0x85944171f73967e8ULL);
  CHECK(fnv1a64("hello") == 0xa430d84680aabd0bULL);
}

TEST_CASE("base64 reproduces the rfc test vectors both ways") {
  const std::pair<std::string, std::string> vectors[] = {
      {"", ""},           {"f", "Zg=="},       {"fo", "Zm8="},      {"foo", "Zm9v"},
      {"foob", "Zm9vYg=="}, {"fooba", "Zm9vYmE="}, {"foobar", "Zm9vYmFy"},
  };
  for (const auto& [plain, encoded] : vectors) {
    const std::vector<unsigned char> bytes(plain.begin(), plain.end());
    CHECK(base64_encode(bytes) == encoded);
    CHECK(base64_decode(encoded) == bytes);
  }
  CHECK_THROWS_AS(base64_decode("abc"), std::runtime_error);     // bad length
  CHECK_THROWS_AS(base64_decode("a=bc"), std::runtime_error);    // padding inside
  CHECK_THROWS_AS(base64_decode("ab!c"), std::runtime_error);    // bad character
  CHECK_THROWS_AS(base64_decode("===="), std::runtime_error);    // all padding
}

TEST_CASE("double packing is little-endian and bit-exact") {
  CHECK(base64_encode(pack_doubles({1.0})) == "AAAAAAAA8D8=");
  CHECK(base64_encode(pack_doubles({0.5, -0.0})) == "AAAAAAAA4D8AAAAAAAAAgA==");

  std::vector<double> values = {0.0,   -0.0, 1.0, -1.0, 0.1, 1e-300, 5e-324,
                                1e308, std::nan("")};
  Rng rng(7);
  for (int i = 0; i < 100; ++i) values.push_back(rng.uniform(-1e6, 1e6));
  const std::vector<double> back = unpack_doubles(pack_doubles(values));
  REQUIRE(back.size() == values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto a = std::bit_cast<std::uint64_t>(values[i]);
    const auto b = std::bit_cast<std::uint64_t>(back[i]);
    CHECK(a == b);
  }
  CHECK_THROWS_AS(unpack_doubles(std::vector<unsigned char>(7, 0)), std::runtime_error);
}

TEST_CASE("save and load round-trip every field and every parameter bit") {
  Rng rng(11);
  Generator model = init_generator(5, 6, 2, rng);
  const CheckpointMeta meta = sample_meta();
  const auto path = (temp_dir() / "roundtrip.ckpt").string();
  save_checkpoint(model, meta, path);

  const Checkpoint loaded = load_checkpoint(path);
  CHECK(loaded.version == 1);
  CHECK(loaded.meta.vocabulary.labels == meta.vocabulary.labels);
  CHECK(loaded.meta.vocabulary.id_of("ship") == 3);
  CHECK(loaded.meta.scaler.max_duration_days == meta.scaler.max_duration_days);
  CHECK(loaded.meta.seed == meta.seed);
  CHECK(loaded.meta.config.mode == TrainConfig::Mode::Mlmme);
  CHECK(loaded.meta.config.iterations == 42);
  CHECK(loaded.meta.config.patience == 7);
  CHECK(loaded.meta.config.learning_rate == 1e-3);
  CHECK(loaded.meta.config.teacher_forcing_ratio == 0.25);
  CHECK(loaded.meta.config.seed == 99);
  CHECK(loaded.meta.summary.iterations_run == 42);
  CHECK(loaded.meta.summary.best_iteration == 17);
  CHECK(loaded.meta.summary.best_validation == meta.summary.best_validation);
  CHECK(loaded.meta.summary.d_updates_total == 84);
  CHECK(loaded.meta.summary.g_updates_total == 168);
  CHECK(loaded.meta.summary.total_seconds == 0.0);

  const auto expected = model.parameters();
  const auto actual = loaded.model.parameters();
  REQUIRE(expected.size() == actual.size());
  for (std::size_t i = 0; i < expected.size(); ++i) {
    CHECK(expected[i]->shape == actual[i]->shape);
    REQUIRE(expected[i]->data.size() == actual[i]->data.size());
    for (std::size_t j = 0; j < expected[i]->data.size(); ++j) {
      const auto a = std::bit_cast<std::uint64_t>(expected[i]->data[j]);
      const auto b = std::bit_cast<std::uint64_t>(actual[i]->data[j]);
      CHECK(a == b);
    }
  }
}

TEST_CASE("decoding after a reload matches decoding before the save") {
  Rng rng(19);
  Generator model = init_generator(4, 8, 1, rng);
  CheckpointMeta meta = sample_meta();
  meta.vocabulary = vocab_of({"a", "b"});
  const auto path = (temp_dir() / "decode.ckpt").string();

  const std::vector<std::vector<double>> prefix = {encode_event(2, 0.0, 4),
                                                   encode_event(3, 0.4, 4)};
  const Prediction before = greedy_decode(model, prefix, 8);
  save_checkpoint(model, meta, path);
  const Checkpoint loaded = load_checkpoint(path);
  const Prediction after = greedy_decode(loaded.model, prefix, 8);

  CHECK(before.activities == after.activities);
  REQUIRE(before.durations.size() == after.durations.size());
  for (std::size_t i = 0; i < before.durations.size(); ++i)
    CHECK(before.durations[i] == after.durations[i]);
  CHECK(before.score == after.score);
  CHECK(before.truncated == after.truncated);
}

TEST_CASE("saving the same model twice produces byte-identical files") {
  Rng rng(23);
  Generator model = init_generator(4, 5, 1, rng);
  CheckpointMeta meta = sample_meta();
  meta.vocabulary = vocab_of({"a", "b"});
  const auto first = (temp_dir() / "twin_a.ckpt").string();
  const auto second = (temp_dir() / "twin_b.ckpt").string();
  save_checkpoint(model, meta, first);
  save_checkpoint(model, meta, second);
  CHECK(read_file(first) == read_file(second));
}

TEST_CASE("only generator parameters are persisted, under stable names") {
  Rng rng(29);
  Generator model = init_generator(4, 5, 2, rng);
  CheckpointMeta meta = sample_meta();
  meta.vocabulary = vocab_of({"a", "b"});
  const auto path = (temp_dir() / "names.ckpt").string();
  save_checkpoint(model, meta, path);

  const std::string content = read_file(path);
  const std::string payload = content.substr(content.find('\n') + 1);
  const nlohmann::json body = nlohmann::json::parse(payload);
  const auto& params = body.at("model").at("parameters");
  CHECK(params.size() == 12); // 4 per layer stack pair + 4 head arrays
  for (const char* name : {"encoder.0.w", "encoder.1.b", "decoder.0.w", "decoder.1.b",
                           "w_act", "b_act", "w_time", "b_time"})
    CHECK(params.contains(name));
  CHECK(content.find("discriminator") == std::string::npos);
}

TEST_CASE("corruption, truncation, and version skew are rejected") {
  Rng rng(31);
  Generator model = init_generator(4, 4, 1, rng);
  CheckpointMeta meta = sample_meta();
  meta.vocabulary = vocab_of({"a", "b"});
  const auto path = (temp_dir() / "tamper.ckpt").string();
  save_checkpoint(model, meta, path);
  const std::string good = read_file(path);

  std::string flipped = good;
  const std::size_t mid = good.find('\n') + good.size() / 2;
  flipped[mid] = flipped[mid] == 'A' ? 'B' : 'A';
  write_file(path, flipped);
  CHECK_THROWS_WITH_AS(static_cast<void>(load_checkpoint(path)),
                       doctest::Contains("checksum"), std::runtime_error);

  write_file(path, good.substr(0, good.size() - 40));
  CHECK_THROWS_WITH_AS(static_cast<void>(load_checkpoint(path)),
                       doctest::Contains("checksum"), std::runtime_error);

  std::string wrong_version = good;
  wrong_version[wrong_version.find(" 1 ") + 1] = '2';
  write_file(path, wrong_version);
  CHECK_THROWS_WITH_AS(static_cast<void>(load_checkpoint(path)),
                       doctest::Contains("version"), std::runtime_error);

  write_file(path, "not a checkpoint at all\n{}");
  CHECK_THROWS_AS(static_cast<void>(load_checkpoint(path)), std::runtime_error);

  CHECK_THROWS_AS(static_cast<void>(load_checkpoint((temp_dir() / "missing.ckpt").string())),
                  std::runtime_error);
}

TEST_CASE("a model and vocabulary of different widths cannot be saved") {
  Rng rng(37);
  Generator model = init_generator(6, 4, 1, rng);
  CheckpointMeta meta = sample_meta(); // vocabulary has 5 entries
  const auto path = (temp_dir() / "mismatch.ckpt").string();
  CHECK_THROWS_AS(save_checkpoint(model, meta, path), std::invalid_argument);
  CHECK_FALSE(std::filesystem::exists(path));
}
