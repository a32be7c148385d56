#include "seqpred/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <utility>

#include <CLI11.hpp>
#include <json.hpp>

#include "seqpred/checkpoint.hpp"
#include "seqpred/eval.hpp"
#include "seqpred/eventlog.hpp"
#include "seqpred/infer.hpp"
#include "seqpred/ioutil.hpp"
#include "seqpred/nn.hpp"
#include "seqpred/train.hpp"

namespace seqpred::cli {

namespace {

using nlohmann::json;

constexpr const char* kConfigEnv = "SEQPRED_CONFIG";

struct TrainSettings {
  TrainConfig cfg;
  int hidden_size = 200;
  int num_layers = 5;
};

json parse_json_file(const std::string& path, const char* what) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(std::string("cannot open ") + what + ": " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw std::runtime_error(path + " is not valid JSON: " + e.what());
  }
}

// Training options layer up as defaults, then profile, then config file,
// then explicit flags; this applies the config-file layer.
void apply_config_file(const std::string& path, TrainSettings& s) {
  const json body = parse_json_file(path, "config file");
  if (!body.is_object()) throw std::runtime_error("config file must hold a JSON object: " + path);
  for (const auto& [key, value] : body.items()) {
    try {
      if (key == "iterations") s.cfg.iterations = value.get<int>();
      else if (key == "patience") s.cfg.patience = value.get<int>();
      else if (key == "learning_rate") s.cfg.learning_rate = value.get<double>();
      else if (key == "clip_norm") s.cfg.clip_norm = value.get<double>();
      else if (key == "teacher_forcing_ratio") s.cfg.teacher_forcing_ratio = value.get<double>();
      else if (key == "w_act") s.cfg.w_act = value.get<double>();
      else if (key == "w_time") s.cfg.w_time = value.get<double>();
      else if (key == "tau_start") s.cfg.tau_start = value.get<double>();
      else if (key == "tau_min") s.cfg.tau_min = value.get<double>();
      else if (key == "seed") s.cfg.seed = value.get<std::uint64_t>();
      else if (key == "hidden_size") s.hidden_size = value.get<int>();
      else if (key == "num_layers") s.num_layers = value.get<int>();
      else throw std::runtime_error("unknown config key \"" + key + "\" in " + path);
    } catch (const json::exception& e) {
      throw std::runtime_error("config key \"" + key + "\" in " + path + ": " + e.what());
    }
  }
}

std::vector<std::vector<double>> encode_trace(const Trace& trace, const Vocabulary& vocab,
                                              const TimeScaler& scaler) {
  std::vector<std::vector<double>> encoded;
  encoded.reserve(trace.events.size());
  for (const Event& e : trace.events)
    encoded.push_back(
        encode_event(vocab.id_of(e.activity), scaler.normalize(e.duration_days), vocab.size()));
  return encoded;
}

std::vector<std::string> label_sequence(const std::vector<int>& ids, const Vocabulary& vocab) {
  std::vector<std::string> labels;
  labels.reserve(ids.size());
  for (int id : ids) labels.push_back(vocab.label_of(id));
  return labels;
}

void emit_text(const std::string& text, const std::string& path, std::ostream& out) {
  if (path.empty())
    out << text;
  else
    atomic_write_file(path, [&](std::ostream& os) { os << text; });
}

struct SynthArgs {
  std::string spec_path;
  std::string out_path;
  std::uint64_t seed = 1;
};

int run_synth(const SynthArgs& a, std::ostream& out) {
  const LogSpec spec = parse_log_spec_file(a.spec_path);
  Rng rng(a.seed);
  const EventLog log = generate_log(spec, rng);
  write_csv_file(log, a.out_path);
  out << "wrote " << log.traces.size() << " traces (" << log.event_count() << " events) to "
      << a.out_path << "\n";
  return 0;
}

struct TrainArgs {
  std::string log_path;
  std::string mode;
  std::string out_path;
  std::string report_path;
  std::string config_path;
  std::string profile;
  int layers = 0;
  int hidden = 0;
  int iterations = 0;
  std::uint64_t seed = 0;
  bool layers_set = false;
  bool hidden_set = false;
  bool iterations_set = false;
  bool seed_set = false;
};

int run_train(const TrainArgs& a, std::ostream& out) {
  TrainSettings s;
  s.cfg.mode = a.mode == "mle" ? TrainConfig::Mode::Mle : TrainConfig::Mode::Mlmme;
  if (a.profile == "desk") {
    s.num_layers = 1;
    s.hidden_size = 32;
    s.cfg.iterations = 50;
  }

  std::string config_path = a.config_path;
  if (config_path.empty())
    if (const char* env = std::getenv(kConfigEnv)) config_path = env;
  if (!config_path.empty()) apply_config_file(config_path, s);

  if (a.layers_set) s.num_layers = a.layers;
  if (a.hidden_set) s.hidden_size = a.hidden;
  if (a.iterations_set) s.cfg.iterations = a.iterations;
  if (a.seed_set) s.cfg.seed = a.seed;
  s.cfg.validate();
  if (s.num_layers < 1 || s.hidden_size < 1)
    throw std::invalid_argument("network topology must have at least one layer and one unit");

  const EventLog log = derive_durations(parse_csv_file(a.log_path));
  const LogSplit split = temporal_split(log);
  const Vocabulary vocab = build_vocabulary(split.train);
  const TimeScaler scaler = fit_time_scaler(split.train);
  const std::vector<PrefixSuffixPair> train_pairs = generate_pairs(split.train, vocab, scaler);
  const std::vector<PrefixSuffixPair> validation_pairs =
      generate_pairs(split.validation, vocab, scaler);

  Rng rng(s.cfg.seed);
  Generator g = init_generator(vocab.size(), s.hidden_size, s.num_layers, rng);
  FitResult result;
  if (s.cfg.mode == TrainConfig::Mode::Mlmme) {
    Discriminator d = init_discriminator(vocab.size(), s.hidden_size, s.num_layers, rng);
    result = fit(g, &d, train_pairs, validation_pairs, s.cfg, rng);
  } else {
    result = fit(g, nullptr, train_pairs, validation_pairs, s.cfg, rng);
  }

  CheckpointMeta meta;
  meta.vocabulary = vocab;
  meta.scaler = scaler;
  meta.config = s.cfg;
  meta.seed = s.cfg.seed;
  meta.summary = result.summary;
  save_checkpoint(g, meta, a.out_path);
  if (!a.report_path.empty())
    atomic_write_file(a.report_path, [&](std::ostream& os) { os << result.report.to_csv(); });

  out << "trained " << a.mode << " for " << result.summary.iterations_run
      << " iterations, best validation " << format_double(result.summary.best_validation)
      << " at iteration " << result.summary.best_iteration << "; checkpoint: " << a.out_path << "\n";
  return 0;
}

struct PredictArgs {
  std::string ckpt_path;
  std::string prefix_path;
  std::string out_path;
  int beam = 1;
  int max_steps = 100;
};

int run_predict(const PredictArgs& a, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(a.ckpt_path);
  const EventLog prefixes = derive_durations(parse_csv_file(a.prefix_path));
  if (prefixes.traces.empty()) throw std::runtime_error("prefix file holds no cases: " + a.prefix_path);
  const BeamConfig beam{a.beam, a.max_steps};

  std::ostringstream lines;
  for (const Trace& trace : prefixes.traces) {
    if (trace.events.empty()) throw std::runtime_error("case " + trace.case_id + " has no events");
    const std::vector<std::vector<double>> prefix =
        encode_trace(trace, ckpt.meta.vocabulary, ckpt.meta.scaler);
    const std::vector<Prediction> ranked = beam_search(ckpt.model, prefix, beam);
    for (std::size_t r = 0; r < ranked.size(); ++r) {
      const Prediction& p = ranked[r];
      json record;
      record["prefix"] = trace.case_id;
      record["rank"] = r + 1;
      record["activities"] = label_sequence(p.activities, ckpt.meta.vocabulary);
      json durations = json::array();
      for (double d : p.durations) durations.push_back(ckpt.meta.scaler.denormalize(d));
      record["durations_days"] = std::move(durations);
      record["remaining_days"] = predicted_remaining_days(p, ckpt.meta.scaler);
      record["log_probability"] = p.score;
      record["truncated"] = p.truncated;
      lines << record.dump() << "\n";
    }
  }
  emit_text(lines.str(), a.out_path, out);
  return 0;
}

struct EvaluateArgs {
  std::string ckpt_path;
  std::string log_path;
  std::string compare_path;
  std::string out_path;
  std::string split = "test";
  int beam = 1;
  int max_steps = 100;
};

const EventLog& pick_split(const LogSplit& split, const EventLog& whole, const std::string& name) {
  if (name == "train") return split.train;
  if (name == "validation") return split.validation;
  if (name == "test") return split.test;
  return whole;
}

json t_test_json(const TTestResult& r) {
  return json{{"mean_difference", r.mean_difference},
              {"t", r.t_statistic},
              {"df", r.degrees_of_freedom},
              {"p", r.p_value},
              {"direction", r.direction == TestDirection::Upper ? "upper" : "lower"}};
}

EvalSummary evaluate_checkpoint(const Checkpoint& ckpt, const EventLog& portion, BeamConfig beam) {
  const std::vector<PrefixSuffixPair> pairs =
      generate_pairs(portion, ckpt.meta.vocabulary, ckpt.meta.scaler);
  if (pairs.empty())
    throw std::runtime_error("the chosen split yields no prefix-suffix pairs (traces too short)");
  return evaluate(ckpt.model, pairs, ckpt.meta.scaler, beam);
}

int run_evaluate(const EvaluateArgs& a, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(a.ckpt_path);
  const EventLog log = derive_durations(parse_csv_file(a.log_path));
  const LogSplit split = temporal_split(log);
  const EventLog& portion = pick_split(split, log, a.split);
  const BeamConfig beam{a.beam, a.max_steps};

  const EvalSummary summary = evaluate_checkpoint(ckpt, portion, beam);
  json report;
  report["beam"] = a.beam;
  report["split"] = a.split;
  report["count"] = summary.records.size();
  report["mean_sdl"] = summary.mean_sdl;
  report["mae_days"] = summary.mae_days;
  report["min_mae_days"] = summary.min_mae_days;
  json records = json::array();
  for (const EvalRecord& r : summary.records)
    records.push_back(json{{"case_id", r.case_id},
                           {"k", r.k},
                           {"truth", label_sequence(r.truth, ckpt.meta.vocabulary)},
                           {"predicted", label_sequence(r.predicted, ckpt.meta.vocabulary)},
                           {"sdl", r.sdl_value},
                           {"ae_days", r.absolute_error_days},
                           {"min_ae_days", r.min_absolute_error_days}});
  report["records"] = std::move(records);

  if (!a.compare_path.empty()) {
    const Checkpoint other = load_checkpoint(a.compare_path);
    const EvalSummary other_summary = evaluate_checkpoint(other, portion, beam);
    std::vector<double> sdl_a, sdl_b, ae_a, ae_b;
    for (const EvalRecord& r : summary.records) {
      sdl_a.push_back(r.sdl_value);
      ae_a.push_back(r.absolute_error_days);
    }
    for (const EvalRecord& r : other_summary.records) {
      sdl_b.push_back(r.sdl_value);
      ae_b.push_back(r.absolute_error_days);
    }
    // one-sided claims that the primary checkpoint is better: similarity up,
    // absolute error down
    report["comparison"] = json{{"checkpoint", a.compare_path},
                                {"mean_sdl", other_summary.mean_sdl},
                                {"mae_days", other_summary.mae_days},
                                {"sdl_test", t_test_json(paired_t_test(sdl_a, sdl_b, TestDirection::Upper))},
                                {"ae_test", t_test_json(paired_t_test(ae_a, ae_b, TestDirection::Lower))}};
  }

  emit_text(report.dump(2) + "\n", a.out_path, out);
  return 0;
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"suffix and remaining-time prediction for running cases of an event log"};
  app.require_subcommand(1);

  SynthArgs synth_args;
  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic event log from a spec");
  synth->add_option("--spec", synth_args.spec_path, "log spec file")
      ->required()
      ->check(CLI::ExistingFile);
  synth->add_option("--out", synth_args.out_path, "output CSV path")->required();
  synth->add_option("--seed", synth_args.seed, "generation seed");

  TrainArgs train_args;
  CLI::App* train = app.add_subcommand("train", "train a model on an event log");
  train->add_option("--log", train_args.log_path, "event log CSV")
      ->required()
      ->check(CLI::ExistingFile);
  train->add_option("--mode", train_args.mode, "training mode")
      ->required()
      ->check(CLI::IsMember({"mle", "mlmme"}));
  train->add_option("--out", train_args.out_path, "checkpoint output path")->required();
  train->add_option("--report", train_args.report_path, "loss report CSV path");
  train->add_option("--config", train_args.config_path, "JSON config file")
      ->check(CLI::ExistingFile);
  train->add_option("--profile", train_args.profile, "preset overrides")
      ->check(CLI::IsMember({"desk"}));
  CLI::Option* layers_opt = train->add_option("--layers", train_args.layers, "LSTM layers");
  CLI::Option* hidden_opt = train->add_option("--hidden", train_args.hidden, "LSTM units per layer");
  CLI::Option* iterations_opt =
      train->add_option("--iterations", train_args.iterations, "training iterations");
  CLI::Option* seed_opt = train->add_option("--seed", train_args.seed, "training seed");

  PredictArgs predict_args;
  CLI::App* predict = app.add_subcommand("predict", "predict suffixes for running cases");
  predict->add_option("--ckpt", predict_args.ckpt_path, "checkpoint path")
      ->required()
      ->check(CLI::ExistingFile);
  predict->add_option("--prefix-file", predict_args.prefix_path, "CSV of running cases")
      ->required()
      ->check(CLI::ExistingFile);
  predict->add_option("--beam", predict_args.beam, "beam width")->check(CLI::PositiveNumber);
  predict->add_option("--max-steps", predict_args.max_steps, "decode step cap")
      ->check(CLI::PositiveNumber);
  predict->add_option("--out", predict_args.out_path, "write records here instead of stdout");

  EvaluateArgs evaluate_args;
  CLI::App* evaluate = app.add_subcommand("evaluate", "score a checkpoint against a log");
  evaluate->add_option("--ckpt", evaluate_args.ckpt_path, "checkpoint path")
      ->required()
      ->check(CLI::ExistingFile);
  evaluate->add_option("--log", evaluate_args.log_path, "event log CSV")
      ->required()
      ->check(CLI::ExistingFile);
  evaluate->add_option("--beam", evaluate_args.beam, "beam width")->check(CLI::PositiveNumber);
  evaluate->add_option("--max-steps", evaluate_args.max_steps, "decode step cap")
      ->check(CLI::PositiveNumber);
  evaluate->add_option("--split", evaluate_args.split, "portion of the log to score")
      ->check(CLI::IsMember({"train", "validation", "test", "all"}));
  evaluate->add_option("--compare", evaluate_args.compare_path,
                       "second checkpoint for paired t-tests")
      ->check(CLI::ExistingFile);
  evaluate->add_option("--out", evaluate_args.out_path, "write the report here instead of stdout");

  try {
    std::vector<const char*> argv;
    argv.push_back("seqpred");
    for (const std::string& a : args) argv.push_back(a.c_str());
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  train_args.layers_set = layers_opt->count() > 0;
  train_args.hidden_set = hidden_opt->count() > 0;
  train_args.iterations_set = iterations_opt->count() > 0;
  train_args.seed_set = seed_opt->count() > 0;

  try {
    if (app.got_subcommand(synth)) return run_synth(synth_args, out);
    if (app.got_subcommand(train)) return run_train(train_args, out);
    if (app.got_subcommand(predict)) return run_predict(predict_args, out);
    return run_evaluate(evaluate_args, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

} // namespace seqpred::cli
