#pragma once

#include <string>
#include <utility>
#include <vector>

#include "seqpred/autodiff.hpp"
#include "seqpred/rng.hpp"
#include "seqpred/tensor.hpp"

namespace seqpred {

// One LSTM cell: w is {4H, in+H} over the concatenated (input, hidden)
// vector, b is {4H}. Gate row order: input, forget, candidate, output.
struct LstmLayer {
  Tensor w;
  Tensor b;
};

struct StackedLstm {
  int input_size = 0;
  int hidden_size = 0;
  std::vector<LstmLayer> layers;

  int layer_input_size(int layer) const { return layer == 0 ? input_size : hidden_size; }
};

// Named slice of a model's parameter list; gradient clipping operates on
// these groups (one per recurrent layer, one per head).
struct ParamGroup {
  std::string name;
  std::vector<int> indices;
};

// Encoder-decoder suffix predictor. Both stacks consume encoded events of
// width vocab_size + 1; the decoder's hidden state feeds a softmax activity
// head of width vocab_size and a ReLU scalar duration head.
struct Generator {
  int vocab_size = 0;
  int hidden_size = 0;
  int num_layers = 0;
  StackedLstm encoder;
  StackedLstm decoder;
  Tensor w_act;  // {vocab_size, hidden_size}
  Tensor b_act;  // {vocab_size}
  Tensor w_time; // {1, hidden_size}
  Tensor b_time; // {1}

  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;
  std::vector<ParamGroup> parameter_groups() const;
  int parameter_count() const { return 2 * 2 * num_layers + 4; }
};

// Suffix critic: LSTM over (relaxed) event vectors, final hidden state
// through a sigmoid head.
struct Discriminator {
  int vocab_size = 0;
  int hidden_size = 0;
  int num_layers = 0;
  StackedLstm lstm;
  Tensor w_out; // {1, hidden_size}
  Tensor b_out; // {1}

  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;
  std::vector<ParamGroup> parameter_groups() const;
  int parameter_count() const { return 2 * num_layers + 2; }
};

// Uniform init in [-1/sqrt(fan_in), 1/sqrt(fan_in)] per weight matrix, its
// bias sharing the bound. Draw order is the parameter order, row-major.
Generator init_generator(int vocab_size, int hidden_size, int num_layers, Rng& rng);
Discriminator init_discriminator(int vocab_size, int hidden_size, int num_layers, Rng& rng);

// Models registered on a tape: trainable parameters become leaves carrying
// indices param_base..param_base+count-1 in parameters() order, frozen ones
// become constant inputs.
struct TapeLstm {
  const StackedLstm* model = nullptr;
  std::vector<std::pair<Var, Var>> wb; // per layer
};

struct TapeGenerator {
  const Generator* model = nullptr;
  TapeLstm encoder;
  TapeLstm decoder;
  Var w_act, b_act, w_time, b_time;
};

struct TapeDiscriminator {
  const Discriminator* model = nullptr;
  TapeLstm lstm;
  Var w_out, b_out;
};

// Per-layer (hidden, cell) pairs.
struct TapeState {
  std::vector<std::pair<Var, Var>> hc;
};

TapeGenerator register_generator(Tape& tape, const Generator& g, bool trainable, int param_base = 0);
TapeDiscriminator register_discriminator(Tape& tape, const Discriminator& d, bool trainable,
                                         int param_base = 0);

// One cell update; returns (hidden, cell).
std::pair<Var, Var> lstm_step(Tape& tape, Var w, Var b, Var x, Var h, Var c);

TapeState zero_state(Tape& tape, const StackedLstm& stack);

// Feeds the input through every layer, replacing the state in place;
// returns the top layer's new hidden.
Var stacked_step(Tape& tape, const TapeLstm& stack, Var x, TapeState& state);

// Runs the encoder over the whole prefix; the returned state initializes
// the decoder (same depth and width by construction).
TapeState encode_prefix(Tape& tape, const TapeGenerator& g,
                        const std::vector<std::vector<double>>& prefix);

struct DecoderOut {
  Var pi; // probability vector over vocab_size activities
  Var t;  // non-negative scalar duration (normalized units)
};

DecoderOut decoder_step(Tape& tape, const TapeGenerator& g, Var input, TapeState& state);

// Critic score in (0,1) for a suffix of on-tape event vectors.
Var discriminate(Tape& tape, const TapeDiscriminator& d, const std::vector<Var>& events);

// Differentiable relaxed sample: softmax((log max(pi,1e-12) + g) / tau)
// with g drawn i.i.d. Gumbel(0,1) from rng. tau must be positive.
Var gumbel_softmax(Tape& tape, Var pi, double tau, Rng& rng);
Var gumbel_softmax(Tape& tape, Var pi, double tau, const Tensor& noise);

// Hard decision fed back into the decoder during open-loop rollout:
// one-hot at argmax(pi) (ties to the lowest index) with t appended.
std::vector<double> processing_block(const std::vector<double>& pi, double t);

// First decoder input: one-hot start token (index 0) with zero duration.
std::vector<double> encoded_sos(int vocab_size);

// Softened one-hot targets shown to the discriminator as "real": the hot
// entry becomes 0.9 and the rest share 0.1/(m-1); durations are untouched.
std::vector<std::vector<double>> smooth_real_suffix(const std::vector<std::vector<double>>& suffix,
                                                    int m);

// Tapeless forward path for decoding. Uses the same kernels and the same
// operation order as the tape, so its outputs are bit-identical.
struct RawState {
  std::vector<std::vector<double>> h;
  std::vector<std::vector<double>> c;
};

RawState raw_zero_state(const StackedLstm& stack);
void raw_stacked_step(const StackedLstm& stack, const std::vector<double>& input, RawState& state);
RawState raw_encode_prefix(const Generator& g, const std::vector<std::vector<double>>& prefix);
void raw_decoder_step(const Generator& g, const std::vector<double>& input, RawState& state,
                      std::vector<double>& pi, double& t);

} // namespace seqpred
