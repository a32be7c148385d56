#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "seqpred/autodiff.hpp"
#include "seqpred/eventlog.hpp"
#include "seqpred/nn.hpp"
#include "seqpred/rng.hpp"

namespace seqpred {

struct TrainConfig {
  enum class Mode { Mle, Mlmme };

  Mode mode = Mode::Mle;
  int iterations = 500;
  int patience = 30;
  double learning_rate = 5e-5;
  double clip_norm = 1.0;
  double teacher_forcing_ratio = 0.1;
  double w_act = 1.0;
  double w_time = 1.0;
  double tau_start = 0.9;
  double tau_min = 0.05;
  std::uint64_t seed = 1;

  void validate() const; // throws std::invalid_argument on any bad field
};

// RMSprop with gradient clipping applied per parameter group (layer or head)
// before the running mean square is updated.
class RmsProp {
public:
  RmsProp(std::vector<Tensor*> params, std::vector<ParamGroup> groups, double learning_rate,
          double clip_norm, double rho = 0.9, double eps = 1e-8);

  // clips, accumulates v <- rho v + (1-rho) g^2, then p <- p - lr g/sqrt(v+eps);
  // rejects non-finite gradients
  void update(Gradient grads);

private:
  std::vector<Tensor*> params_;
  std::vector<ParamGroup> groups_;
  std::vector<Tensor> v_;
  double lr_;
  double clip_;
  double rho_;
  double eps_;
};

// tau(i) = max(tau_start * r^i, tau_min) with r = (tau_min/tau_start)^(1/iterations)
double anneal_temperature(int iteration, const TrainConfig& cfg);

// Stops once the validation loss has gone `patience` consecutive
// observations without strict improvement.
class EarlyStopper {
public:
  explicit EarlyStopper(int patience);

  // returns true when training should stop after this observation
  bool observe(double validation_loss);

  bool improved() const { return improved_; }
  double best() const { return best_; }
  int best_iteration() const { return best_iteration_; }

private:
  int patience_;
  int seen_ = 0;
  int since_best_ = 0;
  int best_iteration_ = 0;
  bool improved_ = false;
  double best_ = std::numeric_limits<double>::infinity();
};

struct SupervisedParts {
  Var total;    // w_act * activity + w_time * time
  Var activity; // sum over steps of -log pi[truth]
  Var time;     // squared difference of summed durations
  std::vector<std::vector<double>> decoder_inputs; // start token, then each fed-back event
};

// Rolls the decoder over the pair's suffix, target-aligned. Each step's input
// is the processed previous prediction, except steps where a Bernoulli
// teacher-forcing draw substitutes the ground-truth event; the feedback is
// always detached. One draw is consumed per fed-back step.
SupervisedParts build_supervised_loss(Tape& tape, const Generator& g, const PrefixSuffixPair& pair,
                                      const TrainConfig& cfg, Rng& rng, bool trainable);

// Open-loop variant used for validation scoring: no teacher forcing, no
// random draws, parameters registered frozen.
SupervisedParts build_validation_loss(Tape& tape, const Generator& g, const PrefixSuffixPair& pair,
                                      const TrainConfig& cfg);

// Same loss with the decoder input sequence pinned to the given events. The
// fed-back prediction is detached during training, so this is the function
// whose gradient the supervised update actually follows; gradient checks
// evaluate it while perturbing parameters.
SupervisedParts build_supervised_loss_with_inputs(Tape& tape, const Generator& g,
                                                  const PrefixSuffixPair& pair,
                                                  const TrainConfig& cfg,
                                                  const std::vector<std::vector<double>>& decoder_inputs,
                                                  bool trainable);

// Rollout with Gumbel-relaxed activity vectors; the relaxed event (alpha
// concatenated with the predicted duration) is fed back differentiably and
// collected for the discriminator.
std::vector<Var> adversarial_rollout(Tape& tape, const TapeGenerator& g, const PrefixSuffixPair& pair,
                                     double tau, Rng& rng);

struct DiscriminatorPass {
  Var loss;   // -log D(real) - log(1 - D(fake)), probabilities floored at 1e-7
  Var d_real;
  Var d_fake;
};

struct GeneratorAdvPass {
  Var loss; // -[log D(fake) - log(1 - D(fake))], floored the same way
  Var d_fake;
};

DiscriminatorPass build_discriminator_pass(Tape& tape, const Generator& g, const Discriminator& d,
                                           const PrefixSuffixPair& pair, double tau, Rng& rng,
                                           bool train_d);
GeneratorAdvPass build_generator_adv_pass(Tape& tape, const Generator& g, const Discriminator& d,
                                          const PrefixSuffixPair& pair, double tau, Rng& rng,
                                          bool train_g);

struct AdvStepResult {
  double d_loss = 0.0;
  double g_loss = 0.0;
};

// One adversarial round on one pair: update D on (smoothed real, fresh fake),
// then update G against the updated D on a recomputed fake.
AdvStepResult adversarial_step(Generator& g, Discriminator& d, const PrefixSuffixPair& pair,
                               double tau, RmsProp& g_opt, RmsProp& d_opt, Rng& rng);

struct IterationStats {
  int iteration = 0;      // 1-based
  double train_loss = 0.0;
  double activity_loss = 0.0;
  double time_loss = 0.0;
  double d_loss = 0.0;     // 0 in MLE mode
  double g_adv_loss = 0.0; // 0 in MLE mode
  double validation_loss = 0.0;
  double temperature = 0.0;
  int d_updates = 0;
  int g_updates = 0;
  double seconds = 0.0; // wall clock; intentionally not part of the CSV
};

struct LossReport {
  std::vector<IterationStats> iterations;
  std::string to_csv() const;
};

struct TrainSummary {
  int iterations_run = 0;
  int best_iteration = 0;
  double best_validation = 0.0;
  int d_updates_total = 0;
  int g_updates_total = 0;
  double total_seconds = 0.0;
};

struct FitResult {
  LossReport report;
  TrainSummary summary;
};

// Full training loop: per pair an adversarial round (MLMME only) followed by
// a supervised update; per iteration a mean open-loop validation loss drives
// early stopping; the parameters of the best validation iteration are
// restored before returning. Pass d = nullptr in MLE mode.
FitResult fit(Generator& g, Discriminator* d, const std::vector<PrefixSuffixPair>& train_pairs,
              const std::vector<PrefixSuffixPair>& validation_pairs, const TrainConfig& cfg, Rng& rng);

} // namespace seqpred
