#include "seqpred/nn.hpp"

#include <cmath>
#include <stdexcept>

#include "seqpred/kernels.hpp"

namespace seqpred {

namespace {

void fill_uniform(Tensor& t, double bound, Rng& rng) {
  for (double& v : t.data) v = rng.uniform(-bound, bound);
}

StackedLstm make_stack(int input_size, int hidden_size, int num_layers) {
  StackedLstm s;
  s.input_size = input_size;
  s.hidden_size = hidden_size;
  s.layers.resize(static_cast<std::size_t>(num_layers));
  for (int l = 0; l < num_layers; ++l) {
    const int in = l == 0 ? input_size : hidden_size;
    s.layers[static_cast<std::size_t>(l)].w = Tensor::zeros({4 * hidden_size, in + hidden_size});
    s.layers[static_cast<std::size_t>(l)].b = Tensor::zeros({4 * hidden_size});
  }
  return s;
}

void init_stack(StackedLstm& s, Rng& rng) {
  for (std::size_t l = 0; l < s.layers.size(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(s.layers[l].w.shape[1]));
    fill_uniform(s.layers[l].w, bound, rng);
    fill_uniform(s.layers[l].b, bound, rng);
  }
}

void validate_dims(int vocab_size, int hidden_size, int num_layers) {
  if (vocab_size < 2) throw std::invalid_argument("model: vocabulary must hold at least the control tokens");
  if (hidden_size < 1) throw std::invalid_argument("model: hidden size must be positive");
  if (num_layers < 1) throw std::invalid_argument("model: layer count must be positive");
}

} // namespace

std::vector<Tensor*> Generator::parameters() {
  std::vector<Tensor*> p;
  for (LstmLayer& l : encoder.layers) {
    p.push_back(&l.w);
    p.push_back(&l.b);
  }
  for (LstmLayer& l : decoder.layers) {
    p.push_back(&l.w);
    p.push_back(&l.b);
  }
  p.push_back(&w_act);
  p.push_back(&b_act);
  p.push_back(&w_time);
  p.push_back(&b_time);
  return p;
}

std::vector<const Tensor*> Generator::parameters() const {
  std::vector<const Tensor*> p;
  for (const LstmLayer& l : encoder.layers) {
    p.push_back(&l.w);
    p.push_back(&l.b);
  }
  for (const LstmLayer& l : decoder.layers) {
    p.push_back(&l.w);
    p.push_back(&l.b);
  }
  p.push_back(&w_act);
  p.push_back(&b_act);
  p.push_back(&w_time);
  p.push_back(&b_time);
  return p;
}

std::vector<ParamGroup> Generator::parameter_groups() const {
  std::vector<ParamGroup> groups;
  int idx = 0;
  for (int l = 0; l < num_layers; ++l) {
    groups.push_back({"encoder.layer" + std::to_string(l), {idx, idx + 1}});
    idx += 2;
  }
  for (int l = 0; l < num_layers; ++l) {
    groups.push_back({"decoder.layer" + std::to_string(l), {idx, idx + 1}});
    idx += 2;
  }
  groups.push_back({"activity_head", {idx, idx + 1}});
  idx += 2;
  groups.push_back({"time_head", {idx, idx + 1}});
  return groups;
}

std::vector<Tensor*> Discriminator::parameters() {
  std::vector<Tensor*> p;
  for (LstmLayer& l : lstm.layers) {
    p.push_back(&l.w);
    p.push_back(&l.b);
  }
  p.push_back(&w_out);
  p.push_back(&b_out);
  return p;
}

std::vector<const Tensor*> Discriminator::parameters() const {
  std::vector<const Tensor*> p;
  for (const LstmLayer& l : lstm.layers) {
    p.push_back(&l.w);
    p.push_back(&l.b);
  }
  p.push_back(&w_out);
  p.push_back(&b_out);
  return p;
}

std::vector<ParamGroup> Discriminator::parameter_groups() const {
  std::vector<ParamGroup> groups;
  int idx = 0;
  for (int l = 0; l < num_layers; ++l) {
    groups.push_back({"lstm.layer" + std::to_string(l), {idx, idx + 1}});
    idx += 2;
  }
  groups.push_back({"output_head", {idx, idx + 1}});
  return groups;
}

Generator init_generator(int vocab_size, int hidden_size, int num_layers, Rng& rng) {
  validate_dims(vocab_size, hidden_size, num_layers);
  Generator g;
  g.vocab_size = vocab_size;
  g.hidden_size = hidden_size;
  g.num_layers = num_layers;
  g.encoder = make_stack(vocab_size + 1, hidden_size, num_layers);
  g.decoder = make_stack(vocab_size + 1, hidden_size, num_layers);
  init_stack(g.encoder, rng);
  init_stack(g.decoder, rng);
  const double head_bound = 1.0 / std::sqrt(static_cast<double>(hidden_size));
  g.w_act = Tensor::zeros({vocab_size, hidden_size});
  g.b_act = Tensor::zeros({vocab_size});
  g.w_time = Tensor::zeros({1, hidden_size});
  g.b_time = Tensor::zeros({1});
  fill_uniform(g.w_act, head_bound, rng);
  fill_uniform(g.b_act, head_bound, rng);
  fill_uniform(g.w_time, head_bound, rng);
  fill_uniform(g.b_time, head_bound, rng);
  return g;
}

Discriminator init_discriminator(int vocab_size, int hidden_size, int num_layers, Rng& rng) {
  validate_dims(vocab_size, hidden_size, num_layers);
  Discriminator d;
  d.vocab_size = vocab_size;
  d.hidden_size = hidden_size;
  d.num_layers = num_layers;
  d.lstm = make_stack(vocab_size + 1, hidden_size, num_layers);
  init_stack(d.lstm, rng);
  const double head_bound = 1.0 / std::sqrt(static_cast<double>(hidden_size));
  d.w_out = Tensor::zeros({1, hidden_size});
  d.b_out = Tensor::zeros({1});
  fill_uniform(d.w_out, head_bound, rng);
  fill_uniform(d.b_out, head_bound, rng);
  return d;
}

namespace {

TapeLstm register_stack(Tape& tape, const StackedLstm& stack, bool trainable, int& next_param) {
  TapeLstm out;
  out.model = &stack;
  for (const LstmLayer& l : stack.layers) {
    Var w = trainable ? tape.leaf(l.w, next_param++) : tape.input(l.w);
    Var b = trainable ? tape.leaf(l.b, next_param++) : tape.input(l.b);
    out.wb.emplace_back(w, b);
  }
  return out;
}

} // namespace

TapeGenerator register_generator(Tape& tape, const Generator& g, bool trainable, int param_base) {
  int next = param_base;
  TapeGenerator out;
  out.model = &g;
  out.encoder = register_stack(tape, g.encoder, trainable, next);
  out.decoder = register_stack(tape, g.decoder, trainable, next);
  out.w_act = trainable ? tape.leaf(g.w_act, next++) : tape.input(g.w_act);
  out.b_act = trainable ? tape.leaf(g.b_act, next++) : tape.input(g.b_act);
  out.w_time = trainable ? tape.leaf(g.w_time, next++) : tape.input(g.w_time);
  out.b_time = trainable ? tape.leaf(g.b_time, next++) : tape.input(g.b_time);
  return out;
}

TapeDiscriminator register_discriminator(Tape& tape, const Discriminator& d, bool trainable,
                                         int param_base) {
  int next = param_base;
  TapeDiscriminator out;
  out.model = &d;
  out.lstm = register_stack(tape, d.lstm, trainable, next);
  out.w_out = trainable ? tape.leaf(d.w_out, next++) : tape.input(d.w_out);
  out.b_out = trainable ? tape.leaf(d.b_out, next++) : tape.input(d.b_out);
  return out;
}

std::pair<Var, Var> lstm_step(Tape& tape, Var w, Var b, Var x, Var h, Var c) {
  const int hidden = static_cast<int>(tape.value(h).size());
  Var xin = tape.concat(x, h);
  Var z = tape.add(tape.matvec(w, xin), b);
  Var gi = tape.sigmoid(tape.slice(z, 0, hidden));
  Var gf = tape.sigmoid(tape.slice(z, hidden, hidden));
  Var gg = tape.tanh(tape.slice(z, 2 * hidden, hidden));
  Var go = tape.sigmoid(tape.slice(z, 3 * hidden, hidden));
  Var c2 = tape.add(tape.mul(gf, c), tape.mul(gi, gg));
  Var h2 = tape.mul(go, tape.tanh(c2));
  return {h2, c2};
}

TapeState zero_state(Tape& tape, const StackedLstm& stack) {
  TapeState s;
  for (std::size_t l = 0; l < stack.layers.size(); ++l) {
    Var h = tape.input(Tensor::zeros({stack.hidden_size}));
    Var c = tape.input(Tensor::zeros({stack.hidden_size}));
    s.hc.emplace_back(h, c);
  }
  return s;
}

Var stacked_step(Tape& tape, const TapeLstm& stack, Var x, TapeState& state) {
  if (state.hc.size() != stack.wb.size())
    throw std::runtime_error("stacked_step: state depth does not match the stack");
  Var layer_in = x;
  for (std::size_t l = 0; l < stack.wb.size(); ++l) {
    auto [h2, c2] = lstm_step(tape, stack.wb[l].first, stack.wb[l].second, layer_in,
                              state.hc[l].first, state.hc[l].second);
    state.hc[l] = {h2, c2};
    layer_in = h2;
  }
  return layer_in;
}

TapeState encode_prefix(Tape& tape, const TapeGenerator& g,
                        const std::vector<std::vector<double>>& prefix) {
  if (prefix.empty()) throw std::runtime_error("encode_prefix: empty prefix");
  const int want = g.model->vocab_size + 1;
  TapeState state = zero_state(tape, g.model->encoder);
  for (const std::vector<double>& ev : prefix) {
    if (static_cast<int>(ev.size()) != want)
      throw std::runtime_error("encode_prefix: event vector has " + std::to_string(ev.size()) +
                               " entries, expected " + std::to_string(want));
    stacked_step(tape, g.encoder, tape.input(Tensor::from_vector(ev)), state);
  }
  return state;
}

DecoderOut decoder_step(Tape& tape, const TapeGenerator& g, Var input, TapeState& state) {
  const int want = g.model->vocab_size + 1;
  if (static_cast<int>(tape.value(input).size()) != want)
    throw std::runtime_error("decoder_step: input has " + std::to_string(tape.value(input).size()) +
                             " entries, expected " + std::to_string(want));
  Var y = stacked_step(tape, g.decoder, input, state);
  DecoderOut out;
  out.pi = tape.softmax(tape.add(tape.matvec(g.w_act, y), g.b_act));
  out.t = tape.relu(tape.add(tape.matvec(g.w_time, y), g.b_time));
  return out;
}

Var discriminate(Tape& tape, const TapeDiscriminator& d, const std::vector<Var>& events) {
  if (events.empty()) throw std::runtime_error("discriminate: empty suffix");
  TapeState state = zero_state(tape, d.model->lstm);
  Var top;
  for (Var ev : events) top = stacked_step(tape, d.lstm, ev, state);
  return tape.sigmoid(tape.add(tape.matvec(d.w_out, top), d.b_out));
}

Var gumbel_softmax(Tape& tape, Var pi, double tau, Rng& rng) {
  const std::int64_t m = tape.value(pi).size();
  Tensor noise = Tensor::zeros({static_cast<int>(m)});
  for (std::int64_t i = 0; i < m; ++i) noise[i] = rng.gumbel();
  return gumbel_softmax(tape, pi, tau, noise);
}

Var gumbel_softmax(Tape& tape, Var pi, double tau, const Tensor& noise) {
  if (!(tau > 0.0)) throw std::invalid_argument("gumbel_softmax: temperature must be positive");
  if (!tape.value(pi).same_shape(noise))
    throw std::invalid_argument("gumbel_softmax: noise shape does not match the distribution");
  Var logits = tape.add(tape.log(tape.clamp_min(pi, 1e-12)), tape.input(noise));
  return tape.softmax(tape.scale(logits, 1.0 / tau));
}

std::vector<double> encoded_sos(int vocab_size) {
  std::vector<double> v(static_cast<std::size_t>(vocab_size) + 1, 0.0);
  v[0] = 1.0;
  return v;
}

std::vector<double> processing_block(const std::vector<double>& pi, double t) {
  if (pi.empty()) throw std::runtime_error("processing_block: empty distribution");
  std::size_t best = 0;
  for (std::size_t i = 1; i < pi.size(); ++i)
    if (pi[i] > pi[best]) best = i; // strict: ties keep the lowest index
  std::vector<double> out(pi.size() + 1, 0.0);
  out[best] = 1.0;
  out.back() = t;
  return out;
}

std::vector<std::vector<double>> smooth_real_suffix(const std::vector<std::vector<double>>& suffix,
                                                    int m) {
  if (m < 2) throw std::invalid_argument("smooth_real_suffix: need at least 2 activities");
  std::vector<std::vector<double>> out;
  out.reserve(suffix.size());
  const double off = 0.1 / static_cast<double>(m - 1);
  for (const std::vector<double>& ev : suffix) {
    if (static_cast<int>(ev.size()) != m + 1)
      throw std::runtime_error("smooth_real_suffix: event vector has " + std::to_string(ev.size()) +
                               " entries, expected " + std::to_string(m + 1));
    int hot = -1;
    for (int i = 0; i < m; ++i) {
      if (ev[static_cast<std::size_t>(i)] == 1.0) {
        if (hot >= 0) throw std::runtime_error("smooth_real_suffix: event is not one-hot");
        hot = i;
      } else if (ev[static_cast<std::size_t>(i)] != 0.0) {
        throw std::runtime_error("smooth_real_suffix: event is not one-hot");
      }
    }
    if (hot < 0) throw std::runtime_error("smooth_real_suffix: event is not one-hot");
    std::vector<double> smoothed(static_cast<std::size_t>(m) + 1, off);
    smoothed[static_cast<std::size_t>(hot)] = 0.9;
    smoothed.back() = ev.back();
    out.push_back(std::move(smoothed));
  }
  return out;
}

namespace {

// identical formulas and evaluation order to the tape ops
inline double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void raw_cell_step(const LstmLayer& layer, int hidden, const std::vector<double>& input,
                   std::vector<double>& h, std::vector<double>& c) {
  std::vector<double> xin(input.size() + h.size());
  for (std::size_t i = 0; i < input.size(); ++i) xin[i] = input[i];
  for (std::size_t i = 0; i < h.size(); ++i) xin[input.size() + i] = h[i];

  std::vector<double> z(static_cast<std::size_t>(4 * hidden));
  kernels::matvec(layer.w.data.data(), 4 * hidden, static_cast<int>(xin.size()), xin.data(), z.data());
  for (int i = 0; i < 4 * hidden; ++i) z[static_cast<std::size_t>(i)] += layer.b[i];

  for (int j = 0; j < hidden; ++j) {
    const double gi = sig(z[static_cast<std::size_t>(j)]);
    const double gf = sig(z[static_cast<std::size_t>(hidden + j)]);
    const double gg = std::tanh(z[static_cast<std::size_t>(2 * hidden + j)]);
    const double go = sig(z[static_cast<std::size_t>(3 * hidden + j)]);
    const double fc = gf * c[static_cast<std::size_t>(j)];
    const double ig = gi * gg;
    const double c2 = fc + ig;
    c[static_cast<std::size_t>(j)] = c2;
    h[static_cast<std::size_t>(j)] = go * std::tanh(c2);
  }
}

} // namespace

RawState raw_zero_state(const StackedLstm& stack) {
  RawState s;
  s.h.assign(stack.layers.size(), std::vector<double>(static_cast<std::size_t>(stack.hidden_size), 0.0));
  s.c.assign(stack.layers.size(), std::vector<double>(static_cast<std::size_t>(stack.hidden_size), 0.0));
  return s;
}

void raw_stacked_step(const StackedLstm& stack, const std::vector<double>& input, RawState& state) {
  if (state.h.size() != stack.layers.size())
    throw std::runtime_error("raw_stacked_step: state depth does not match the stack");
  const std::vector<double>* layer_in = &input;
  for (std::size_t l = 0; l < stack.layers.size(); ++l) {
    raw_cell_step(stack.layers[l], stack.hidden_size, *layer_in, state.h[l], state.c[l]);
    layer_in = &state.h[l];
  }
}

RawState raw_encode_prefix(const Generator& g, const std::vector<std::vector<double>>& prefix) {
  if (prefix.empty()) throw std::runtime_error("raw_encode_prefix: empty prefix");
  RawState state = raw_zero_state(g.encoder);
  for (const std::vector<double>& ev : prefix) {
    if (static_cast<int>(ev.size()) != g.vocab_size + 1)
      throw std::runtime_error("raw_encode_prefix: event vector has " + std::to_string(ev.size()) +
                               " entries, expected " + std::to_string(g.vocab_size + 1));
    raw_stacked_step(g.encoder, ev, state);
  }
  return state;
}

void raw_decoder_step(const Generator& g, const std::vector<double>& input, RawState& state,
                      std::vector<double>& pi, double& t) {
  if (static_cast<int>(input.size()) != g.vocab_size + 1)
    throw std::runtime_error("raw_decoder_step: input has " + std::to_string(input.size()) +
                             " entries, expected " + std::to_string(g.vocab_size + 1));
  raw_stacked_step(g.decoder, input, state);
  const std::vector<double>& y = state.h.back();

  std::vector<double> logits(static_cast<std::size_t>(g.vocab_size));
  kernels::matvec(g.w_act.data.data(), g.vocab_size, g.hidden_size, y.data(), logits.data());
  for (int i = 0; i < g.vocab_size; ++i) logits[static_cast<std::size_t>(i)] += g.b_act[i];
  pi.assign(static_cast<std::size_t>(g.vocab_size), 0.0);
  kernels::softmax(logits.data(), 1, g.vocab_size, pi.data());

  double tlin = 0.0;
  kernels::matvec(g.w_time.data.data(), 1, g.hidden_size, y.data(), &tlin);
  tlin += g.b_time[0];
  t = tlin > 0.0 ? tlin : 0.0;
}

} // namespace seqpred
