#include "seqpred/autodiff.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "seqpred/kernels.hpp"

namespace seqpred {

namespace {

void require_finite(const Tensor& t, const char* where) {
  for (double v : t.data)
    if (!std::isfinite(v))
      throw std::runtime_error(std::string(where) + ": non-finite value encountered");
}

void require_rank1(const Tensor& t, const char* where) {
  if (t.ndim() != 1)
    throw std::runtime_error(std::string(where) + ": expected a rank-1 tensor, got " + shape_string(t));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* where) {
  if (!a.same_shape(b))
    throw std::runtime_error(std::string(where) + ": shape mismatch " + shape_string(a) + " vs " +
                             shape_string(b));
}

} // namespace

Var Tape::push(Node n) {
  require_finite(n.value, "tape op");
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

void Tape::check_owned(Var v) const {
  if (v.id < 0 || v.id >= static_cast<int>(nodes_.size()))
    throw std::runtime_error("tape: variable does not belong to this tape");
}

const Tape::Node& Tape::node(Var v) const {
  check_owned(v);
  return nodes_[static_cast<std::size_t>(v.id)];
}

Tape::Node& Tape::node(Var v) {
  check_owned(v);
  return nodes_[static_cast<std::size_t>(v.id)];
}

Var Tape::leaf(const Tensor& value, int param_index) {
  if (param_index < 0) throw std::invalid_argument("tape leaf: parameter index must be >= 0");
  Node n;
  n.op = Op::Leaf;
  n.param = param_index;
  n.value = value;
  return push(std::move(n));
}

Var Tape::input(const Tensor& value) {
  Node n;
  n.op = Op::Input;
  n.value = value;
  return push(std::move(n));
}

Var Tape::matmul(Var a, Var b) {
  const Tensor& av = node(a).value;
  const Tensor& bv = node(b).value;
  if (av.ndim() != 2 || bv.ndim() != 2 || av.shape[1] != bv.shape[0])
    throw std::runtime_error("matmul: incompatible shapes " + shape_string(av) + " x " + shape_string(bv));
  Node n;
  n.op = Op::MatMul;
  n.a = a.id;
  n.b = b.id;
  n.value = Tensor::zeros({av.shape[0], bv.shape[1]});
  kernels::matmul(av.data.data(), av.shape[0], av.shape[1], bv.data.data(), bv.shape[1], n.value.data.data());
  return push(std::move(n));
}

Var Tape::matvec(Var w, Var x) {
  const Tensor& wv = node(w).value;
  const Tensor& xv = node(x).value;
  if (wv.ndim() != 2 || xv.ndim() != 1 || wv.shape[1] != xv.shape[0])
    throw std::runtime_error("matvec: incompatible shapes " + shape_string(wv) + " x " + shape_string(xv));
  Node n;
  n.op = Op::MatVec;
  n.a = w.id;
  n.b = x.id;
  n.value = Tensor::zeros({wv.shape[0]});
  kernels::matvec(wv.data.data(), wv.shape[0], wv.shape[1], xv.data.data(), n.value.data.data());
  return push(std::move(n));
}

Var Tape::add(Var a, Var b) {
  const Tensor& av = node(a).value;
  const Tensor& bv = node(b).value;
  require_same_shape(av, bv, "add");
  Node n;
  n.op = Op::Add;
  n.a = a.id;
  n.b = b.id;
  n.value = Tensor::zeros(av.shape);
  const double* pa = av.data.data();
  const double* pb = bv.data.data();
  double* py = n.value.data.data();
  kernels::for_each_index(av.size(), [=](std::int64_t i) { py[i] = pa[i] + pb[i]; });
  return push(std::move(n));
}

Var Tape::sub(Var a, Var b) {
  const Tensor& av = node(a).value;
  const Tensor& bv = node(b).value;
  require_same_shape(av, bv, "sub");
  Node n;
  n.op = Op::Sub;
  n.a = a.id;
  n.b = b.id;
  n.value = Tensor::zeros(av.shape);
  const double* pa = av.data.data();
  const double* pb = bv.data.data();
  double* py = n.value.data.data();
  kernels::for_each_index(av.size(), [=](std::int64_t i) { py[i] = pa[i] - pb[i]; });
  return push(std::move(n));
}

Var Tape::mul(Var a, Var b) {
  const Tensor& av = node(a).value;
  const Tensor& bv = node(b).value;
  require_same_shape(av, bv, "mul");
  Node n;
  n.op = Op::Mul;
  n.a = a.id;
  n.b = b.id;
  n.value = Tensor::zeros(av.shape);
  const double* pa = av.data.data();
  const double* pb = bv.data.data();
  double* py = n.value.data.data();
  kernels::for_each_index(av.size(), [=](std::int64_t i) { py[i] = pa[i] * pb[i]; });
  return push(std::move(n));
}

Var Tape::concat(Var a, Var b) {
  const Tensor& av = node(a).value;
  const Tensor& bv = node(b).value;
  require_rank1(av, "concat");
  require_rank1(bv, "concat");
  Node n;
  n.op = Op::Concat;
  n.a = a.id;
  n.b = b.id;
  n.value = Tensor::zeros({av.shape[0] + bv.shape[0]});
  for (std::int64_t i = 0; i < av.size(); ++i) n.value[i] = av[i];
  for (std::int64_t i = 0; i < bv.size(); ++i) n.value[av.size() + i] = bv[i];
  return push(std::move(n));
}

Var Tape::slice(Var a, int offset, int length) {
  const Tensor& av = node(a).value;
  require_rank1(av, "slice");
  if (offset < 0 || length < 0 || offset + length > av.shape[0])
    throw std::runtime_error("slice: window [" + std::to_string(offset) + ", " +
                             std::to_string(offset + length) + ") out of range for " + shape_string(av));
  Node n;
  n.op = Op::Slice;
  n.a = a.id;
  n.i0 = offset;
  n.i1 = length;
  n.value = Tensor::zeros({length});
  for (int i = 0; i < length; ++i) n.value[i] = av[offset + i];
  return push(std::move(n));
}

Var Tape::sum_all(Var a) {
  const Tensor& av = node(a).value;
  Node n;
  n.op = Op::SumAll;
  n.a = a.id;
  n.value = Tensor::scalar(kernels::sum(av.data.data(), av.size()));
  return push(std::move(n));
}

Var Tape::sigmoid(Var a) {
  const Tensor& av = node(a).value;
  Node n;
  n.op = Op::Sigmoid;
  n.a = a.id;
  n.value = Tensor::zeros(av.shape);
  const double* pa = av.data.data();
  double* py = n.value.data.data();
  kernels::for_each_index(av.size(), [=](std::int64_t i) { py[i] = 1.0 / (1.0 + std::exp(-pa[i])); });
  return push(std::move(n));
}

Var Tape::tanh(Var a) {
  const Tensor& av = node(a).value;
  Node n;
  n.op = Op::Tanh;
  n.a = a.id;
  n.value = Tensor::zeros(av.shape);
  const double* pa = av.data.data();
  double* py = n.value.data.data();
  kernels::for_each_index(av.size(), [=](std::int64_t i) { py[i] = std::tanh(pa[i]); });
  return push(std::move(n));
}

Var Tape::relu(Var a) {
  const Tensor& av = node(a).value;
  Node n;
  n.op = Op::Relu;
  n.a = a.id;
  n.value = Tensor::zeros(av.shape);
  const double* pa = av.data.data();
  double* py = n.value.data.data();
  kernels::for_each_index(av.size(), [=](std::int64_t i) { py[i] = pa[i] > 0.0 ? pa[i] : 0.0; });
  return push(std::move(n));
}

Var Tape::exp(Var a) {
  const Tensor& av = node(a).value;
  Node n;
  n.op = Op::Exp;
  n.a = a.id;
  n.value = Tensor::zeros(av.shape);
  const double* pa = av.data.data();
  double* py = n.value.data.data();
  kernels::for_each_index(av.size(), [=](std::int64_t i) { py[i] = std::exp(pa[i]); });
  return push(std::move(n));
}

Var Tape::log(Var a) {
  const Tensor& av = node(a).value;
  Node n;
  n.op = Op::Log;
  n.a = a.id;
  n.value = Tensor::zeros(av.shape);
  const double* pa = av.data.data();
  double* py = n.value.data.data();
  kernels::for_each_index(av.size(), [=](std::int64_t i) { py[i] = std::log(pa[i]); });
  return push(std::move(n));
}

Var Tape::softmax(Var a) {
  const Tensor& av = node(a).value;
  if (av.ndim() != 1 && av.ndim() != 2)
    throw std::runtime_error("softmax: expected rank 1 or 2, got " + shape_string(av));
  Node n;
  n.op = Op::Softmax;
  n.a = a.id;
  n.value = Tensor::zeros(av.shape);
  const int rows = av.ndim() == 1 ? 1 : av.shape[0];
  const int cols = av.ndim() == 1 ? av.shape[0] : av.shape[1];
  kernels::softmax(av.data.data(), rows, cols, n.value.data.data());
  return push(std::move(n));
}

Var Tape::scale(Var a, double c) {
  const Tensor& av = node(a).value;
  Node n;
  n.op = Op::Scale;
  n.a = a.id;
  n.c = c;
  n.value = Tensor::zeros(av.shape);
  const double* pa = av.data.data();
  double* py = n.value.data.data();
  kernels::for_each_index(av.size(), [=](std::int64_t i) { py[i] = pa[i] * c; });
  return push(std::move(n));
}

Var Tape::add_scalar(Var a, double c) {
  const Tensor& av = node(a).value;
  Node n;
  n.op = Op::AddScalar;
  n.a = a.id;
  n.c = c;
  n.value = Tensor::zeros(av.shape);
  const double* pa = av.data.data();
  double* py = n.value.data.data();
  kernels::for_each_index(av.size(), [=](std::int64_t i) { py[i] = pa[i] + c; });
  return push(std::move(n));
}

Var Tape::clamp_min(Var a, double c) {
  const Tensor& av = node(a).value;
  Node n;
  n.op = Op::ClampMin;
  n.a = a.id;
  n.c = c;
  n.value = Tensor::zeros(av.shape);
  const double* pa = av.data.data();
  double* py = n.value.data.data();
  kernels::for_each_index(av.size(), [=](std::int64_t i) { py[i] = pa[i] > c ? pa[i] : c; });
  return push(std::move(n));
}

void Tape::reset_gradients() {
  for (Node& n : nodes_) n.grad = Tensor();
}

void Tape::backward(Var loss) {
  const Node& top = node(loss);
  if (!top.value.is_scalar())
    throw std::runtime_error("backward: loss must be scalar, got " + shape_string(top.value));

  auto grad_of = [&](int id) -> Tensor& {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.data.empty()) n.grad = Tensor::zeros(n.value.shape);
    return n.grad;
  };

  grad_of(loss.id)[0] += 1.0;

  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.data.empty()) continue; // nothing flowed into this node
    const Tensor& g = n.grad;
    switch (n.op) {
      case Op::Leaf:
      case Op::Input:
        break;
      case Op::MatMul: {
        const Tensor& av = nodes_[n.a].value;
        const Tensor& bv = nodes_[n.b].value;
        Tensor& da = grad_of(n.a);
        Tensor& db = grad_of(n.b);
        kernels::matmul_abt_acc(g.data.data(), av.shape[0], bv.shape[1], bv.data.data(), av.shape[1],
                                da.data.data());
        kernels::matmul_atb_acc(av.data.data(), av.shape[0], av.shape[1], g.data.data(), bv.shape[1],
                                db.data.data());
        break;
      }
      case Op::MatVec: {
        const Tensor& wv = nodes_[n.a].value;
        const Tensor& xv = nodes_[n.b].value;
        Tensor& dw = grad_of(n.a);
        Tensor& dx = grad_of(n.b);
        kernels::outer_acc(g.data.data(), wv.shape[0], xv.data.data(), wv.shape[1], dw.data.data());
        kernels::matvec_t_acc(wv.data.data(), wv.shape[0], wv.shape[1], g.data.data(), dx.data.data());
        break;
      }
      case Op::Add: {
        Tensor& da = grad_of(n.a);
        Tensor& db = grad_of(n.b);
        const double* pg = g.data.data();
        double* pda = da.data.data();
        double* pdb = db.data.data();
        kernels::for_each_index(g.size(), [=](std::int64_t i) { pda[i] += pg[i]; });
        kernels::for_each_index(g.size(), [=](std::int64_t i) { pdb[i] += pg[i]; });
        break;
      }
      case Op::Sub: {
        Tensor& da = grad_of(n.a);
        Tensor& db = grad_of(n.b);
        const double* pg = g.data.data();
        double* pda = da.data.data();
        double* pdb = db.data.data();
        kernels::for_each_index(g.size(), [=](std::int64_t i) { pda[i] += pg[i]; });
        kernels::for_each_index(g.size(), [=](std::int64_t i) { pdb[i] -= pg[i]; });
        break;
      }
      case Op::Mul: {
        const Tensor& av = nodes_[n.a].value;
        const Tensor& bv = nodes_[n.b].value;
        Tensor& da = grad_of(n.a);
        Tensor& db = grad_of(n.b);
        const double* pg = g.data.data();
        const double* pa = av.data.data();
        const double* pb = bv.data.data();
        double* pda = da.data.data();
        double* pdb = db.data.data();
        kernels::for_each_index(g.size(), [=](std::int64_t i) { pda[i] += pg[i] * pb[i]; });
        kernels::for_each_index(g.size(), [=](std::int64_t i) { pdb[i] += pg[i] * pa[i]; });
        break;
      }
      case Op::Concat: {
        const std::int64_t na = nodes_[n.a].value.size();
        Tensor& da = grad_of(n.a);
        Tensor& db = grad_of(n.b);
        for (std::int64_t i = 0; i < na; ++i) da[i] += g[i];
        for (std::int64_t i = 0; i < db.size(); ++i) db[i] += g[na + i];
        break;
      }
      case Op::Slice: {
        Tensor& da = grad_of(n.a);
        for (int i = 0; i < n.i1; ++i) da[n.i0 + i] += g[i];
        break;
      }
      case Op::SumAll: {
        Tensor& da = grad_of(n.a);
        const double gv = g[0];
        double* pda = da.data.data();
        kernels::for_each_index(da.size(), [=](std::int64_t i) { pda[i] += gv; });
        break;
      }
      case Op::Sigmoid: {
        Tensor& da = grad_of(n.a);
        const double* pg = g.data.data();
        const double* py = n.value.data.data();
        double* pda = da.data.data();
        kernels::for_each_index(g.size(), [=](std::int64_t i) { pda[i] += pg[i] * py[i] * (1.0 - py[i]); });
        break;
      }
      case Op::Tanh: {
        Tensor& da = grad_of(n.a);
        const double* pg = g.data.data();
        const double* py = n.value.data.data();
        double* pda = da.data.data();
        kernels::for_each_index(g.size(), [=](std::int64_t i) { pda[i] += pg[i] * (1.0 - py[i] * py[i]); });
        break;
      }
      case Op::Relu: {
        const Tensor& av = nodes_[n.a].value;
        Tensor& da = grad_of(n.a);
        const double* pg = g.data.data();
        const double* pa = av.data.data();
        double* pda = da.data.data();
        // subgradient 0 at the kink
        kernels::for_each_index(g.size(), [=](std::int64_t i) { pda[i] += pa[i] > 0.0 ? pg[i] : 0.0; });
        break;
      }
      case Op::Exp: {
        Tensor& da = grad_of(n.a);
        const double* pg = g.data.data();
        const double* py = n.value.data.data();
        double* pda = da.data.data();
        kernels::for_each_index(g.size(), [=](std::int64_t i) { pda[i] += pg[i] * py[i]; });
        break;
      }
      case Op::Log: {
        const Tensor& av = nodes_[n.a].value;
        Tensor& da = grad_of(n.a);
        const double* pg = g.data.data();
        const double* pa = av.data.data();
        double* pda = da.data.data();
        kernels::for_each_index(g.size(), [=](std::int64_t i) { pda[i] += pg[i] / pa[i]; });
        break;
      }
      case Op::Softmax: {
        Tensor& da = grad_of(n.a);
        const int rows = n.value.ndim() == 1 ? 1 : n.value.shape[0];
        const int cols = n.value.ndim() == 1 ? n.value.shape[0] : n.value.shape[1];
        for (int r = 0; r < rows; ++r) {
          const double* y = n.value.data.data() + static_cast<std::int64_t>(r) * cols;
          const double* gy = g.data.data() + static_cast<std::int64_t>(r) * cols;
          double* dx = da.data.data() + static_cast<std::int64_t>(r) * cols;
          double dot = 0.0;
          for (int j = 0; j < cols; ++j) dot += gy[j] * y[j];
          for (int j = 0; j < cols; ++j) dx[j] += y[j] * (gy[j] - dot);
        }
        break;
      }
      case Op::Scale: {
        Tensor& da = grad_of(n.a);
        const double c = n.c;
        const double* pg = g.data.data();
        double* pda = da.data.data();
        kernels::for_each_index(g.size(), [=](std::int64_t i) { pda[i] += pg[i] * c; });
        break;
      }
      case Op::AddScalar: {
        Tensor& da = grad_of(n.a);
        const double* pg = g.data.data();
        double* pda = da.data.data();
        kernels::for_each_index(g.size(), [=](std::int64_t i) { pda[i] += pg[i]; });
        break;
      }
      case Op::ClampMin: {
        const Tensor& av = nodes_[n.a].value;
        Tensor& da = grad_of(n.a);
        const double c = n.c;
        const double* pg = g.data.data();
        const double* pa = av.data.data();
        double* pda = da.data.data();
        // gradient passes only where the input was above the floor
        kernels::for_each_index(g.size(), [=](std::int64_t i) { pda[i] += pa[i] > c ? pg[i] : 0.0; });
        break;
      }
    }
  }
}

const Tensor& Tape::value(Var v) const { return node(v).value; }

const Tensor& Tape::gradient(Var v) const {
  const Node& n = node(v);
  if (n.grad.data.empty())
    throw std::runtime_error("tape gradient: no gradient recorded for this variable; run backward() first");
  return n.grad;
}

Gradient Tape::parameter_gradients(int parameter_count) const {
  Gradient out(static_cast<std::size_t>(parameter_count));
  for (const Node& n : nodes_) {
    if (n.op != Op::Leaf) continue;
    if (n.param >= parameter_count)
      throw std::runtime_error("parameter_gradients: leaf index " + std::to_string(n.param) +
                               " out of range for " + std::to_string(parameter_count) + " parameters");
    Tensor& g = out[static_cast<std::size_t>(n.param)];
    if (g.data.empty()) {
      g = n.grad.data.empty() ? Tensor::zeros(n.value.shape) : n.grad;
    } else {
      if (!g.same_shape(n.value))
        throw std::runtime_error("parameter_gradients: leaves with index " + std::to_string(n.param) +
                                 " disagree on shape");
      if (!n.grad.data.empty())
        for (std::int64_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    }
  }
  for (std::size_t i = 0; i < out.size(); ++i)
    if (out[i].data.empty())
      throw std::runtime_error("parameter_gradients: parameter " + std::to_string(i) +
                               " was never registered on the tape");
  return out;
}

double finite_difference_check(std::span<Tensor* const> params, const Gradient& analytic,
                               const std::function<double()>& eval_loss, double step) {
  if (params.size() != analytic.size())
    throw std::invalid_argument("finite_difference_check: gradient count does not match parameter count");
  if (!(step > 0.0)) throw std::invalid_argument("finite_difference_check: step must be positive");

  double worst = 0.0;
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& t = *params[p];
    if (!t.same_shape(analytic[p]))
      throw std::invalid_argument("finite_difference_check: gradient shape mismatch at parameter " +
                                  std::to_string(p));
    for (std::int64_t i = 0; i < t.size(); ++i) {
      const double saved = t[i];
      t[i] = saved + step;
      const double up = eval_loss();
      t[i] = saved - step;
      const double down = eval_loss();
      t[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double exact = analytic[p][i];
      const double denom = std::max(std::abs(exact) + std::abs(numeric), 1.0);
      const double rel = std::abs(exact - numeric) / denom;
      if (rel > worst) worst = rel;
    }
  }
  return worst;
}

} // namespace seqpred
