#include "seqpred/train.hpp"

#include <chrono>
#include <cmath>
#include <cstddef>
#include <exception>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>

#include "seqpred/ioutil.hpp"
#include "seqpred/kernels.hpp"

namespace seqpred {

void TrainConfig::validate() const {
  if (iterations < 1) throw std::invalid_argument("TrainConfig: iterations must be at least 1");
  if (patience < 1) throw std::invalid_argument("TrainConfig: patience must be at least 1");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("TrainConfig: learning rate must be positive");
  if (!(clip_norm > 0.0)) throw std::invalid_argument("TrainConfig: clip norm must be positive");
  if (!(teacher_forcing_ratio >= 0.0 && teacher_forcing_ratio <= 1.0))
    throw std::invalid_argument("TrainConfig: teacher forcing ratio must be in [0, 1]");
  if (!(w_act >= 0.0) || !(w_time >= 0.0))
    throw std::invalid_argument("TrainConfig: loss weights must be non-negative");
  if (!(tau_min > 0.0) || !(tau_start >= tau_min))
    throw std::invalid_argument("TrainConfig: need tau_start >= tau_min > 0");
}

RmsProp::RmsProp(std::vector<Tensor*> params, std::vector<ParamGroup> groups, double learning_rate,
                 double clip_norm, double rho, double eps)
    : params_(std::move(params)),
      groups_(std::move(groups)),
      lr_(learning_rate),
      clip_(clip_norm),
      rho_(rho),
      eps_(eps) {
  if (!(lr_ > 0.0)) throw std::invalid_argument("RmsProp: learning rate must be positive");
  if (!(clip_ > 0.0)) throw std::invalid_argument("RmsProp: clip norm must be positive");
  if (!(rho_ >= 0.0 && rho_ < 1.0)) throw std::invalid_argument("RmsProp: rho must be in [0, 1)");
  if (!(eps_ > 0.0)) throw std::invalid_argument("RmsProp: eps must be positive");
  std::vector<char> covered(params_.size(), 0);
  for (const ParamGroup& group : groups_) {
    for (int idx : group.indices) {
      if (idx < 0 || idx >= static_cast<int>(params_.size()))
        throw std::invalid_argument("RmsProp: group " + group.name + " references parameter " +
                                    std::to_string(idx) + " outside 0.." +
                                    std::to_string(params_.size() - 1));
      if (covered[idx])
        throw std::invalid_argument("RmsProp: parameter " + std::to_string(idx) +
                                    " appears in more than one group");
      covered[idx] = 1;
    }
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i] == nullptr) throw std::invalid_argument("RmsProp: null parameter");
    if (!covered[i])
      throw std::invalid_argument("RmsProp: parameter " + std::to_string(i) +
                                  " is not covered by any group");
    v_.push_back(Tensor::zeros(params_[i]->shape));
  }
}

void RmsProp::update(Gradient grads) {
  if (grads.size() != params_.size())
    throw std::invalid_argument("RmsProp: got " + std::to_string(grads.size()) +
                                " gradients for " + std::to_string(params_.size()) + " parameters");
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!grads[i].same_shape(*params_[i]))
      throw std::invalid_argument("RmsProp: gradient " + std::to_string(i) + " has shape " +
                                  shape_string(grads[i]) + ", parameter has " +
                                  shape_string(*params_[i]));
    for (double v : grads[i].data)
      if (!std::isfinite(v))
        throw std::runtime_error("RmsProp: non-finite gradient for parameter " + std::to_string(i));
  }
  for (const ParamGroup& group : groups_) {
    double sq = 0.0;
    for (int idx : group.indices)
      for (double v : grads[idx].data) sq += v * v;
    const double norm = std::sqrt(sq);
    if (norm > clip_) {
      const double s = clip_ / norm;
      for (int idx : group.indices)
        for (double& v : grads[idx].data) v *= s;
    }
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& v = v_[i];
    Tensor& p = *params_[i];
    const Tensor& gr = grads[i];
    for (std::size_t j = 0; j < gr.data.size(); ++j) {
      v.data[j] = rho_ * v.data[j] + (1.0 - rho_) * gr.data[j] * gr.data[j];
      p.data[j] -= lr_ * gr.data[j] / std::sqrt(v.data[j] + eps_);
    }
  }
}

double anneal_temperature(int iteration, const TrainConfig& cfg) {
  if (iteration < 0) throw std::invalid_argument("anneal_temperature: iteration must be non-negative");
  if (cfg.iterations < 1) throw std::invalid_argument("anneal_temperature: iterations must be at least 1");
  if (!(cfg.tau_min > 0.0) || !(cfg.tau_start >= cfg.tau_min))
    throw std::invalid_argument("anneal_temperature: need tau_start >= tau_min > 0");
  const double r = std::pow(cfg.tau_min / cfg.tau_start, 1.0 / cfg.iterations);
  return std::max(cfg.tau_start * std::pow(r, iteration), cfg.tau_min);
}

EarlyStopper::EarlyStopper(int patience) : patience_(patience) {
  if (patience < 1) throw std::invalid_argument("EarlyStopper: patience must be at least 1");
}

bool EarlyStopper::observe(double validation_loss) {
  if (!std::isfinite(validation_loss))
    throw std::runtime_error("EarlyStopper: non-finite validation loss");
  ++seen_;
  improved_ = validation_loss < best_;
  if (improved_) {
    best_ = validation_loss;
    best_iteration_ = seen_;
    since_best_ = 0;
  } else {
    ++since_best_;
  }
  return since_best_ >= patience_;
}

namespace {

Var one_minus(Tape& tape, Var x) { return tape.add_scalar(tape.scale(x, -1.0), 1.0); }

// rng == nullptr means pure open loop and no draws consumed; a non-null
// replay pins the decoder inputs instead of deriving them
SupervisedParts roll_supervised(Tape& tape, const Generator& g, const PrefixSuffixPair& pair,
                                const TrainConfig& cfg, Rng* rng,
                                const std::vector<std::vector<double>>* replay, bool trainable) {
  if (pair.suffix_ids.empty())
    throw std::runtime_error("supervised loss: pair " + pair.case_id + " has an empty suffix");
  if (pair.suffix_durations.size() != pair.suffix_ids.size())
    throw std::runtime_error("supervised loss: suffix activity and duration lengths differ");
  const int steps = static_cast<int>(pair.suffix_ids.size());
  if (replay != nullptr && static_cast<int>(replay->size()) != steps)
    throw std::invalid_argument("supervised loss: got " + std::to_string(replay->size()) +
                                " pinned decoder inputs for " + std::to_string(steps) + " steps");
  const int m = g.vocab_size;
  TapeGenerator tg = register_generator(tape, g, trainable);
  TapeState state = encode_prefix(tape, tg, pair.prefix);

  SupervisedParts parts;
  std::vector<double> feedback = encoded_sos(m);
  Var activity;
  Var t_sum;
  double truth_sum = 0.0;
  for (int j = 0; j < steps; ++j) {
    truth_sum += pair.suffix_durations[j];
    if (replay != nullptr) feedback = (*replay)[static_cast<std::size_t>(j)];
    parts.decoder_inputs.push_back(feedback);
    Var input = tape.input(Tensor::from_vector(feedback));
    DecoderOut out = decoder_step(tape, tg, input, state);
    const int target = pair.suffix_ids[j];
    if (target < 0 || target >= m)
      throw std::runtime_error("supervised loss: target activity " + std::to_string(target) +
                               " outside vocabulary of size " + std::to_string(m));
    Var ce = tape.scale(tape.log(tape.clamp_min(tape.pick(out.pi, target), 1e-12)), -1.0);
    activity = j == 0 ? ce : tape.add(activity, ce);
    t_sum = j == 0 ? out.t : tape.add(t_sum, out.t);
    if (replay == nullptr && j + 1 < steps) {
      const bool force = rng != nullptr && rng->bernoulli(cfg.teacher_forcing_ratio);
      if (force) {
        feedback = encode_event(target, pair.suffix_durations[j], m);
      } else {
        feedback = processing_block(tape.value(out.pi).data, tape.value(out.t)[0]);
      }
    }
  }
  Var diff = tape.sub(t_sum, tape.input_scalar(truth_sum));
  Var time = tape.mul(diff, diff);
  parts.total = tape.add(tape.scale(activity, cfg.w_act), tape.scale(time, cfg.w_time));
  parts.activity = activity;
  parts.time = time;
  return parts;
}

std::vector<Var> real_suffix_inputs(Tape& tape, const PrefixSuffixPair& pair, int vocab_size) {
  std::vector<std::vector<double>> events;
  events.reserve(pair.suffix_ids.size());
  for (std::size_t j = 0; j < pair.suffix_ids.size(); ++j)
    events.push_back(encode_event(pair.suffix_ids[j], pair.suffix_durations[j], vocab_size));
  std::vector<Var> vars;
  vars.reserve(events.size());
  for (const std::vector<double>& ev : smooth_real_suffix(events, vocab_size))
    vars.push_back(tape.input(Tensor::from_vector(ev)));
  return vars;
}

std::vector<Tensor> snapshot_parameters(const Generator& g) {
  std::vector<Tensor> out;
  for (const Tensor* p : g.parameters()) out.push_back(*p);
  return out;
}

void restore_parameters(Generator& g, const std::vector<Tensor>& values) {
  std::vector<Tensor*> params = g.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) *params[i] = values[i];
}

double mean_validation_loss(const Generator& g, const std::vector<PrefixSuffixPair>& pairs,
                            const TrainConfig& cfg) {
  const int n = static_cast<int>(pairs.size());
  std::vector<double> vals(pairs.size(), 0.0);
  std::exception_ptr err = nullptr;
  if (kernels::mode() == kernels::Mode::Parallel && n >= 2) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
      try {
        Tape tape;
        SupervisedParts parts = build_validation_loss(tape, g, pairs[i], cfg);
        vals[i] = tape.value(parts.total)[0];
      } catch (...) {
#pragma omp critical
        if (!err) err = std::current_exception();
      }
    }
  } else {
    for (int i = 0; i < n; ++i) {
      Tape tape;
      SupervisedParts parts = build_validation_loss(tape, g, pairs[i], cfg);
      vals[i] = tape.value(parts.total)[0];
    }
  }
  if (err) std::rethrow_exception(err);
  double sum = 0.0;
  for (double v : vals) sum += v;
  return sum / n;
}

} // namespace

SupervisedParts build_supervised_loss(Tape& tape, const Generator& g, const PrefixSuffixPair& pair,
                                      const TrainConfig& cfg, Rng& rng, bool trainable) {
  return roll_supervised(tape, g, pair, cfg, &rng, nullptr, trainable);
}

SupervisedParts build_validation_loss(Tape& tape, const Generator& g, const PrefixSuffixPair& pair,
                                      const TrainConfig& cfg) {
  return roll_supervised(tape, g, pair, cfg, nullptr, nullptr, false);
}

SupervisedParts build_supervised_loss_with_inputs(Tape& tape, const Generator& g,
                                                  const PrefixSuffixPair& pair,
                                                  const TrainConfig& cfg,
                                                  const std::vector<std::vector<double>>& decoder_inputs,
                                                  bool trainable) {
  return roll_supervised(tape, g, pair, cfg, nullptr, &decoder_inputs, trainable);
}

std::vector<Var> adversarial_rollout(Tape& tape, const TapeGenerator& g, const PrefixSuffixPair& pair,
                                     double tau, Rng& rng) {
  if (pair.suffix_ids.empty())
    throw std::runtime_error("adversarial rollout: pair " + pair.case_id + " has an empty suffix");
  const int m = g.model->vocab_size;
  TapeState state = encode_prefix(tape, g, pair.prefix);
  Var input = tape.input(Tensor::from_vector(encoded_sos(m)));
  std::vector<Var> events;
  events.reserve(pair.suffix_ids.size());
  for (std::size_t j = 0; j < pair.suffix_ids.size(); ++j) {
    DecoderOut out = decoder_step(tape, g, input, state);
    Var alpha = gumbel_softmax(tape, out.pi, tau, rng);
    Var event = tape.concat(alpha, out.t);
    events.push_back(event);
    input = event;
  }
  return events;
}

DiscriminatorPass build_discriminator_pass(Tape& tape, const Generator& g, const Discriminator& d,
                                           const PrefixSuffixPair& pair, double tau, Rng& rng,
                                           bool train_d) {
  if (g.vocab_size != d.vocab_size)
    throw std::invalid_argument("discriminator pass: generator and discriminator vocabulary sizes differ");
  TapeGenerator tg = register_generator(tape, g, false);
  std::vector<Var> fake = adversarial_rollout(tape, tg, pair, tau, rng);
  TapeDiscriminator td = register_discriminator(tape, d, train_d);
  std::vector<Var> real = real_suffix_inputs(tape, pair, g.vocab_size);

  DiscriminatorPass pass;
  pass.d_real = discriminate(tape, td, real);
  pass.d_fake = discriminate(tape, td, fake);
  pass.loss = tape.add(tape.scale(tape.log(tape.clamp_min(pass.d_real, 1e-7)), -1.0),
                       tape.scale(tape.log(tape.clamp_min(one_minus(tape, pass.d_fake), 1e-7)), -1.0));
  return pass;
}

GeneratorAdvPass build_generator_adv_pass(Tape& tape, const Generator& g, const Discriminator& d,
                                          const PrefixSuffixPair& pair, double tau, Rng& rng,
                                          bool train_g) {
  if (g.vocab_size != d.vocab_size)
    throw std::invalid_argument("generator pass: generator and discriminator vocabulary sizes differ");
  TapeGenerator tg = register_generator(tape, g, train_g);
  std::vector<Var> fake = adversarial_rollout(tape, tg, pair, tau, rng);
  TapeDiscriminator td = register_discriminator(tape, d, false);

  GeneratorAdvPass pass;
  pass.d_fake = discriminate(tape, td, fake);
  pass.loss = tape.add(tape.scale(tape.log(tape.clamp_min(pass.d_fake, 1e-7)), -1.0),
                       tape.log(tape.clamp_min(one_minus(tape, pass.d_fake), 1e-7)));
  return pass;
}

AdvStepResult adversarial_step(Generator& g, Discriminator& d, const PrefixSuffixPair& pair,
                               double tau, RmsProp& g_opt, RmsProp& d_opt, Rng& rng) {
  AdvStepResult result;
  {
    Tape tape;
    DiscriminatorPass pass = build_discriminator_pass(tape, g, d, pair, tau, rng, true);
    result.d_loss = tape.value(pass.loss)[0];
    tape.backward(pass.loss);
    d_opt.update(tape.parameter_gradients(d.parameter_count()));
  }
  {
    Tape tape;
    GeneratorAdvPass pass = build_generator_adv_pass(tape, g, d, pair, tau, rng, true);
    result.g_loss = tape.value(pass.loss)[0];
    tape.backward(pass.loss);
    g_opt.update(tape.parameter_gradients(g.parameter_count()));
  }
  return result;
}

std::string LossReport::to_csv() const {
  std::string out =
      "iteration,train_loss,activity_loss,time_loss,d_loss,g_adv_loss,validation_loss,"
      "temperature,d_updates,g_updates\n";
  for (const IterationStats& s : iterations) {
    out += std::to_string(s.iteration);
    out += ',';
    out += format_double(s.train_loss);
    out += ',';
    out += format_double(s.activity_loss);
    out += ',';
    out += format_double(s.time_loss);
    out += ',';
    out += format_double(s.d_loss);
    out += ',';
    out += format_double(s.g_adv_loss);
    out += ',';
    out += format_double(s.validation_loss);
    out += ',';
    out += format_double(s.temperature);
    out += ',';
    out += std::to_string(s.d_updates);
    out += ',';
    out += std::to_string(s.g_updates);
    out += '\n';
  }
  return out;
}

FitResult fit(Generator& g, Discriminator* d, const std::vector<PrefixSuffixPair>& train_pairs,
              const std::vector<PrefixSuffixPair>& validation_pairs, const TrainConfig& cfg,
              Rng& rng) {
  cfg.validate();
  if (train_pairs.empty()) throw std::invalid_argument("fit: no training pairs");
  if (validation_pairs.empty()) throw std::invalid_argument("fit: no validation pairs");
  const bool adversarial = cfg.mode == TrainConfig::Mode::Mlmme;
  if (adversarial && d == nullptr)
    throw std::invalid_argument("fit: MLMME mode needs a discriminator");
  if (!adversarial && d != nullptr)
    throw std::invalid_argument("fit: MLE mode must not receive a discriminator");

  RmsProp g_opt(g.parameters(), g.parameter_groups(), cfg.learning_rate, cfg.clip_norm);
  std::optional<RmsProp> d_opt;
  if (adversarial)
    d_opt.emplace(d->parameters(), d->parameter_groups(), cfg.learning_rate, cfg.clip_norm);

  EarlyStopper stopper(cfg.patience);
  FitResult result;
  std::vector<Tensor> best_params = snapshot_parameters(g);

  for (int iter = 1; iter <= cfg.iterations; ++iter) {
    const auto started = std::chrono::steady_clock::now();
    IterationStats stats;
    stats.iteration = iter;
    stats.temperature = anneal_temperature(iter - 1, cfg);
    try {
      for (const PrefixSuffixPair& pair : train_pairs) {
        if (adversarial) {
          AdvStepResult adv = adversarial_step(g, *d, pair, stats.temperature, g_opt, *d_opt, rng);
          stats.d_loss += adv.d_loss;
          stats.g_adv_loss += adv.g_loss;
          stats.d_updates += 1;
          stats.g_updates += 1;
        }
        Tape tape;
        SupervisedParts parts = build_supervised_loss(tape, g, pair, cfg, rng, true);
        stats.train_loss += tape.value(parts.total)[0];
        stats.activity_loss += tape.value(parts.activity)[0];
        stats.time_loss += tape.value(parts.time)[0];
        tape.backward(parts.total);
        g_opt.update(tape.parameter_gradients(g.parameter_count()));
        stats.g_updates += 1;
      }
      const double n = static_cast<double>(train_pairs.size());
      stats.train_loss /= n;
      stats.activity_loss /= n;
      stats.time_loss /= n;
      stats.d_loss /= n;
      stats.g_adv_loss /= n;
      stats.validation_loss = mean_validation_loss(g, validation_pairs, cfg);
    } catch (const std::exception& e) {
      throw std::runtime_error("training aborted at iteration " + std::to_string(iter) + ": " +
                               e.what());
    }
    stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

    result.summary.d_updates_total += stats.d_updates;
    result.summary.g_updates_total += stats.g_updates;
    result.summary.total_seconds += stats.seconds;
    result.report.iterations.push_back(stats);

    const bool stop = stopper.observe(stats.validation_loss);
    if (stopper.improved()) best_params = snapshot_parameters(g);
    if (stop) break;
  }

  restore_parameters(g, best_params);
  result.summary.iterations_run = static_cast<int>(result.report.iterations.size());
  result.summary.best_iteration = stopper.best_iteration();
  result.summary.best_validation = stopper.best();
  return result;
}

} // namespace seqpred
