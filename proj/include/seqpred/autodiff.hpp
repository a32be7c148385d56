#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "seqpred/tensor.hpp"

namespace seqpred {

// Gradient aligned with an external parameter list: entry i has the same
// shape as parameter i.
using Gradient = std::vector<Tensor>;

// Handle into a Tape. Vars are only meaningful for the tape that minted them.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

enum class Op : std::uint8_t {
  Leaf,      // trainable parameter, carries an external parameter index
  Input,     // constant input, receives a gradient but no parameter index
  MatMul,    // {m,k} x {k,n} -> {m,n}
  MatVec,    // {m,k} x {k} -> {m}
  Add,
  Sub,
  Mul,       // elementwise
  Concat,    // two rank-1 tensors end to end
  Slice,     // contiguous rank-1 window
  SumAll,    // any shape -> scalar
  Sigmoid,
  Tanh,
  Relu,
  Exp,
  Log,
  Softmax,   // rank-1, or rank-2 row-wise
  Scale,     // x * constant
  AddScalar, // x + constant
  ClampMin,  // max(x, constant) elementwise
};

// Reverse-mode tape. Operations append nodes eagerly (values are computed
// immediately); backward() runs one reverse sweep and accumulates adjoints.
// Every op validates operand shapes and rejects non-finite results so a NaN
// is caught where it is produced rather than three modules later.
class Tape {
public:
  Var leaf(const Tensor& value, int param_index);
  Var input(const Tensor& value);
  Var input_scalar(double v) { return input(Tensor::scalar(v)); }

  Var matmul(Var a, Var b);
  Var matvec(Var w, Var x);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var concat(Var a, Var b);
  Var slice(Var a, int offset, int length);
  Var sum_all(Var a);
  Var sigmoid(Var a);
  Var tanh(Var a);
  Var relu(Var a);
  Var exp(Var a);
  Var log(Var a);
  Var softmax(Var a);
  Var scale(Var a, double c);
  Var add_scalar(Var a, double c);
  Var clamp_min(Var a, double c);

  // convenience compositions
  Var pick(Var a, int index) { return slice(a, index, 1); }
  Var squared_error(Var a, Var b) {
    Var d = sub(a, b);
    return sum_all(mul(d, d));
  }

  // Seeds d(loss)/d(loss) = 1 and sweeps the tape in reverse. The loss must
  // be scalar. Gradients accumulate across calls until reset_gradients().
  void backward(Var loss);
  void reset_gradients();

  const Tensor& value(Var v) const;
  const Tensor& gradient(Var v) const;

  // Sums the adjoints of all Leaf nodes per external parameter index.
  Gradient parameter_gradients(int parameter_count) const;

  std::size_t node_count() const { return nodes_.size(); }

private:
  struct Node {
    Op op;
    int a = -1;
    int b = -1;
    double c = 0.0;   // scale factor, added constant, or clamp threshold
    int i0 = 0;       // slice offset
    int i1 = 0;       // slice length
    int param = -1;   // external parameter index for Leaf nodes
    Tensor value;
    Tensor grad;
  };

  Var push(Node n);
  const Node& node(Var v) const;
  Node& node(Var v);
  void check_owned(Var v) const;

  std::vector<Node> nodes_;
};

// Compares an analytic gradient against central finite differences.
//
//   params     tensors the gradient refers to, in the same order
//   analytic   gradient produced by a backward pass at the current values
//   eval_loss  recomputes the scalar loss from the current parameter values
//   step       finite-difference step, applied per coordinate
//
// Each coordinate is perturbed in place (and restored), so eval_loss must
// read the live tensors. Returns the maximum over coordinates of
// |analytic - numeric| / max(|analytic| + |numeric|, 1).
double finite_difference_check(std::span<Tensor* const> params, const Gradient& analytic,
                               const std::function<double()>& eval_loss, double step);

} // namespace seqpred
