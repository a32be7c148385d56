#include "seqpred/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <utility>

#include <json.hpp>

#include "seqpred/ioutil.hpp"

namespace seqpred {

namespace {

using nlohmann::json;

constexpr int kVersion = 1;
constexpr const char* kMagic = "seqpredckpt";
constexpr const char* kAlphabet = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::vector<std::string> parameter_names(int num_layers) {
  std::vector<std::string> names;
  for (const char* stack : {"encoder", "decoder"})
    for (int l = 0; l < num_layers; ++l) {
      names.push_back(std::string(stack) + "." + std::to_string(l) + ".w");
      names.push_back(std::string(stack) + "." + std::to_string(l) + ".b");
    }
  names.insert(names.end(), {"w_act", "b_act", "w_time", "b_time"});
  return names;
}

std::string mode_name(TrainConfig::Mode mode) {
  return mode == TrainConfig::Mode::Mle ? "mle" : "mlmme";
}

TrainConfig::Mode mode_from_name(const std::string& name) {
  if (name == "mle") return TrainConfig::Mode::Mle;
  if (name == "mlmme") return TrainConfig::Mode::Mlmme;
  throw std::runtime_error("checkpoint has unknown training mode: " + name);
}

const json& field(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) throw std::runtime_error(std::string("checkpoint field missing: ") + key);
  return *it;
}

json config_to_json(const TrainConfig& cfg) {
  return json{{"mode", mode_name(cfg.mode)},
              {"iterations", cfg.iterations},
              {"patience", cfg.patience},
              {"learning_rate", cfg.learning_rate},
              {"clip_norm", cfg.clip_norm},
              {"teacher_forcing_ratio", cfg.teacher_forcing_ratio},
              {"w_act", cfg.w_act},
              {"w_time", cfg.w_time},
              {"tau_start", cfg.tau_start},
              {"tau_min", cfg.tau_min},
              {"seed", cfg.seed}};
}

TrainConfig config_from_json(const json& obj) {
  TrainConfig cfg;
  cfg.mode = mode_from_name(field(obj, "mode").get<std::string>());
  cfg.iterations = field(obj, "iterations").get<int>();
  cfg.patience = field(obj, "patience").get<int>();
  cfg.learning_rate = field(obj, "learning_rate").get<double>();
  cfg.clip_norm = field(obj, "clip_norm").get<double>();
  cfg.teacher_forcing_ratio = field(obj, "teacher_forcing_ratio").get<double>();
  cfg.w_act = field(obj, "w_act").get<double>();
  cfg.w_time = field(obj, "w_time").get<double>();
  cfg.tau_start = field(obj, "tau_start").get<double>();
  cfg.tau_min = field(obj, "tau_min").get<double>();
  cfg.seed = field(obj, "seed").get<std::uint64_t>();
  cfg.validate();
  return cfg;
}

std::string checksum_hex(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

} // namespace

std::uint64_t fnv1a64(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string base64_encode(const std::vector<unsigned char>& bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 3 <= bytes.size(); i += 3) {
    const unsigned v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += kAlphabet[(v >> 6) & 63];
    out += kAlphabet[v & 63];
  }
  const std::size_t rest = bytes.size() - i;
  if (rest == 1) {
    const unsigned v = bytes[i] << 16;
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += "==";
  } else if (rest == 2) {
    const unsigned v = (bytes[i] << 16) | (bytes[i + 1] << 8);
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += kAlphabet[(v >> 6) & 63];
    out += '=';
  }
  return out;
}

std::vector<unsigned char> base64_decode(const std::string& text) {
  if (text.size() % 4 != 0) throw std::runtime_error("invalid base64: length not a multiple of 4");
  std::array<int, 256> table;
  table.fill(-1);
  for (int i = 0; i < 64; ++i) table[static_cast<unsigned char>(kAlphabet[i])] = i;

  std::vector<unsigned char> out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    int pad = 0;
    unsigned v = 0;
    for (std::size_t j = 0; j < 4; ++j) {
      const char c = text[i + j];
      if (c == '=') {
        // padding may only close out the final group
        if (i + 4 != text.size() || j < 2) throw std::runtime_error("invalid base64: stray padding");
        ++pad;
        v <<= 6;
        continue;
      }
      if (pad > 0 || table[static_cast<unsigned char>(c)] < 0)
        throw std::runtime_error("invalid base64: unexpected character");
      v = (v << 6) | static_cast<unsigned>(table[static_cast<unsigned char>(c)]);
    }
    out.push_back(static_cast<unsigned char>((v >> 16) & 0xff));
    if (pad < 2) out.push_back(static_cast<unsigned char>((v >> 8) & 0xff));
    if (pad < 1) out.push_back(static_cast<unsigned char>(v & 0xff));
  }
  return out;
}

std::vector<unsigned char> pack_doubles(const std::vector<double>& values) {
  std::vector<unsigned char> out;
  out.reserve(values.size() * 8);
  for (double v : values) {
    const std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    for (int shift = 0; shift < 64; shift += 8)
      out.push_back(static_cast<unsigned char>((bits >> shift) & 0xff));
  }
  return out;
}

std::vector<double> unpack_doubles(const std::vector<unsigned char>& bytes) {
  if (bytes.size() % 8 != 0)
    throw std::runtime_error("parameter byte stream is not a whole number of doubles");
  std::vector<double> out(bytes.size() / 8);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint64_t bits = 0;
    for (int j = 7; j >= 0; --j) bits = (bits << 8) | bytes[i * 8 + static_cast<std::size_t>(j)];
    out[i] = std::bit_cast<double>(bits);
  }
  return out;
}

void save_checkpoint(const Generator& model, const CheckpointMeta& meta, const std::string& path) {
  if (model.vocab_size != meta.vocabulary.size())
    throw std::invalid_argument("model vocabulary size " + std::to_string(model.vocab_size) +
                                " does not match the vocabulary (" +
                                std::to_string(meta.vocabulary.size()) + " labels)");

  json body;
  body["version"] = kVersion;
  body["vocabulary"] = meta.vocabulary.labels;
  body["scaler"] = json{{"max_duration_days", meta.scaler.max_duration_days}};
  body["seed"] = meta.seed;
  body["config"] = config_to_json(meta.config);
  body["summary"] = json{{"iterations_run", meta.summary.iterations_run},
                         {"best_iteration", meta.summary.best_iteration},
                         {"best_validation", meta.summary.best_validation},
                         {"d_updates_total", meta.summary.d_updates_total},
                         {"g_updates_total", meta.summary.g_updates_total}};

  json params = json::object();
  const std::vector<const Tensor*> tensors = model.parameters();
  const std::vector<std::string> names = parameter_names(model.num_layers);
  for (std::size_t i = 0; i < tensors.size(); ++i)
    params[names[i]] = json{{"shape", tensors[i]->shape},
                            {"data", base64_encode(pack_doubles(tensors[i]->data))}};
  body["model"] = json{{"vocab_size", model.vocab_size},
                       {"hidden_size", model.hidden_size},
                       {"num_layers", model.num_layers},
                       {"parameters", std::move(params)}};

  const std::string payload = body.dump(2) + "\n";
  const std::string header =
      std::string(kMagic) + " " + std::to_string(kVersion) + " " + checksum_hex(fnv1a64(payload)) + "\n";
  atomic_write_file(path, [&](std::ostream& out) { out << header << payload; });
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  std::string content{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};

  const std::size_t newline = content.find('\n');
  if (newline == std::string::npos) throw std::runtime_error("not a checkpoint: missing header line");
  const std::string head = content.substr(0, newline);

  const std::size_t first = head.find(' ');
  const std::size_t second = head.find(' ', first + 1);
  if (first == std::string::npos || second == std::string::npos ||
      head.compare(0, first, kMagic) != 0)
    throw std::runtime_error("not a checkpoint: bad header \"" + head + "\"");

  int version = 0;
  std::uint64_t expected = 0;
  try {
    version = std::stoi(head.substr(first + 1, second - first - 1));
    std::size_t used = 0;
    const std::string hex = head.substr(second + 1);
    expected = std::stoull(hex, &used, 16);
    if (used != hex.size()) throw std::invalid_argument(hex);
  } catch (const std::exception&) {
    throw std::runtime_error("not a checkpoint: bad header \"" + head + "\"");
  }
  if (version != kVersion)
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version) +
                             " (expected " + std::to_string(kVersion) + ")");

  const std::string payload = content.substr(newline + 1);
  if (fnv1a64(payload) != expected)
    throw std::runtime_error("checkpoint checksum mismatch: file is corrupt or truncated");

  json body;
  try {
    body = json::parse(payload);
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("checkpoint payload is not valid JSON: ") + e.what());
  }

  Checkpoint ckpt;
  ckpt.version = field(body, "version").get<int>();

  for (const json& label : field(body, "vocabulary"))
    ckpt.meta.vocabulary.labels.push_back(label.get<std::string>());
  const std::vector<std::string>& labels = ckpt.meta.vocabulary.labels;
  if (labels.size() < 2 || labels[0] != Vocabulary::kSosLabel || labels[1] != Vocabulary::kEosLabel)
    throw std::runtime_error("checkpoint vocabulary does not start with the control tokens");
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (!ckpt.meta.vocabulary.index.emplace(labels[i], static_cast<int>(i)).second)
      throw std::runtime_error("checkpoint vocabulary repeats label " + labels[i]);

  ckpt.meta.scaler.max_duration_days = field(field(body, "scaler"), "max_duration_days").get<double>();
  if (!(ckpt.meta.scaler.max_duration_days > 0.0))
    throw std::runtime_error("checkpoint scaler must be positive");
  ckpt.meta.seed = field(body, "seed").get<std::uint64_t>();
  ckpt.meta.config = config_from_json(field(body, "config"));

  const json& summary = field(body, "summary");
  ckpt.meta.summary.iterations_run = field(summary, "iterations_run").get<int>();
  ckpt.meta.summary.best_iteration = field(summary, "best_iteration").get<int>();
  ckpt.meta.summary.best_validation = field(summary, "best_validation").get<double>();
  ckpt.meta.summary.d_updates_total = field(summary, "d_updates_total").get<int>();
  ckpt.meta.summary.g_updates_total = field(summary, "g_updates_total").get<int>();

  const json& model = field(body, "model");
  const int vocab_size = field(model, "vocab_size").get<int>();
  const int hidden_size = field(model, "hidden_size").get<int>();
  const int num_layers = field(model, "num_layers").get<int>();
  if (vocab_size != ckpt.meta.vocabulary.size())
    throw std::runtime_error("checkpoint model width does not match its vocabulary");
  if (hidden_size < 1 || num_layers < 1)
    throw std::runtime_error("checkpoint topology must have positive sizes");

  Rng scratch(0);
  ckpt.model = init_generator(vocab_size, hidden_size, num_layers, scratch);

  const json& params = field(model, "parameters");
  const std::vector<std::string> names = parameter_names(num_layers);
  if (params.size() != names.size())
    throw std::runtime_error("checkpoint stores " + std::to_string(params.size()) +
                             " parameter arrays, expected " + std::to_string(names.size()));
  std::vector<Tensor*> tensors = ckpt.model.parameters();
  for (std::size_t i = 0; i < names.size(); ++i) {
    const json& entry = field(params, names[i].c_str());
    const std::vector<int> shape = field(entry, "shape").get<std::vector<int>>();
    if (shape != tensors[i]->shape)
      throw std::runtime_error("checkpoint parameter " + names[i] + " has the wrong shape");
    std::vector<double> values = unpack_doubles(base64_decode(field(entry, "data").get<std::string>()));
    if (values.size() != tensors[i]->data.size())
      throw std::runtime_error("checkpoint parameter " + names[i] + " has the wrong length");
    tensors[i]->data = std::move(values);
  }
  return ckpt;
}

} // namespace seqpred
