#pragma once

#include <cstdint>

// Dense numeric kernels underneath the tape. Every kernel has a serial
// reference implementation and an OpenMP variant; the two are bit-identical
// because parallelism is only ever over independent output elements (or
// fixed-size blocks for reductions) and the per-element accumulation order
// never changes. Tests compare the variants bitwise, and the dispatching
// entry points pick one based on the global mode and a size threshold.

namespace seqpred::kernels {

enum class Mode { Serial, Parallel };

Mode mode();
void set_mode(Mode m);

// work thresholds below which the dispatchers stay serial
inline constexpr std::int64_t kElementwiseGrain = 1 << 15;
inline constexpr std::int64_t kMatGrain = 1 << 14;

// fixed block size for the deterministic blocked sum
inline constexpr std::int64_t kSumBlock = 4096;

// y = W x, W row-major {rows, cols}
void matvec_serial(const double* w, int rows, int cols, const double* x, double* y);
void matvec_parallel(const double* w, int rows, int cols, const double* x, double* y);
void matvec(const double* w, int rows, int cols, const double* x, double* y);

// dx += W^T dy
void matvec_t_acc_serial(const double* w, int rows, int cols, const double* dy, double* dx);
void matvec_t_acc_parallel(const double* w, int rows, int cols, const double* dy, double* dx);
void matvec_t_acc(const double* w, int rows, int cols, const double* dy, double* dx);

// dW += dy x^T (outer product accumulate)
void outer_acc_serial(const double* dy, int rows, const double* x, int cols, double* dw);
void outer_acc_parallel(const double* dy, int rows, const double* x, int cols, double* dw);
void outer_acc(const double* dy, int rows, const double* x, int cols, double* dw);

// C = A B, A {m,k}, B {k,n}, all row-major
void matmul_serial(const double* a, int m, int k, const double* b, int n, double* c);
void matmul_parallel(const double* a, int m, int k, const double* b, int n, double* c);
void matmul(const double* a, int m, int k, const double* b, int n, double* c);

// dA += dC B^T, dC {m,n}, B {k,n}
void matmul_abt_acc_serial(const double* dc, int m, int n, const double* b, int k, double* da);
void matmul_abt_acc_parallel(const double* dc, int m, int n, const double* b, int k, double* da);
void matmul_abt_acc(const double* dc, int m, int n, const double* b, int k, double* da);

// dB += A^T dC, A {m,k}, dC {m,n}
void matmul_atb_acc_serial(const double* a, int m, int k, const double* dc, int n, double* db);
void matmul_atb_acc_parallel(const double* a, int m, int k, const double* dc, int n, double* db);
void matmul_atb_acc(const double* a, int m, int k, const double* dc, int n, double* db);

// blocked sum: per-block partials in fixed order, then a serial fold,
// so the result does not depend on the thread count
double sum_serial(const double* x, std::int64_t n);
double sum_parallel(const double* x, std::int64_t n);
double sum(const double* x, std::int64_t n);

// row-wise softmax with max subtraction; each row is reduced serially
void softmax_serial(const double* x, int rows, int cols, double* y);
void softmax_parallel(const double* x, int rows, int cols, double* y);
void softmax(const double* x, int rows, int cols, double* y);

// Elementwise loops. f(i) must touch only index i of its outputs.
template <class F>
void for_each_index_serial(std::int64_t n, F&& f) {
  for (std::int64_t i = 0; i < n; ++i) f(i);
}

template <class F>
void for_each_index_parallel(std::int64_t n, F&& f) {
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) f(i);
}

template <class F>
void for_each_index(std::int64_t n, F&& f) {
  if (mode() == Mode::Parallel && n >= kElementwiseGrain)
    for_each_index_parallel(n, f);
  else
    for_each_index_serial(n, f);
}

} // namespace seqpred::kernels
