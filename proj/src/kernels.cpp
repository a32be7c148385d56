#include "seqpred/kernels.hpp"

#include <cmath>
#include <vector>

namespace seqpred::kernels {

namespace {
Mode g_mode = Mode::Parallel;
}

Mode mode() { return g_mode; }
void set_mode(Mode m) { g_mode = m; }

void matvec_serial(const double* w, int rows, int cols, const double* x, double* y) {
  for (int i = 0; i < rows; ++i) {
    const double* row = w + static_cast<std::int64_t>(i) * cols;
    double acc = 0.0;
    for (int j = 0; j < cols; ++j) acc += row[j] * x[j];
    y[i] = acc;
  }
}

void matvec_parallel(const double* w, int rows, int cols, const double* x, double* y) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < rows; ++i) {
    const double* row = w + static_cast<std::int64_t>(i) * cols;
    double acc = 0.0;
    for (int j = 0; j < cols; ++j) acc += row[j] * x[j];
    y[i] = acc;
  }
}

void matvec(const double* w, int rows, int cols, const double* x, double* y) {
  if (g_mode == Mode::Parallel && static_cast<std::int64_t>(rows) * cols >= kMatGrain)
    matvec_parallel(w, rows, cols, x, y);
  else
    matvec_serial(w, rows, cols, x, y);
}

void matvec_t_acc_serial(const double* w, int rows, int cols, const double* dy, double* dx) {
  for (int j = 0; j < cols; ++j) {
    double acc = 0.0;
    for (int i = 0; i < rows; ++i) acc += w[static_cast<std::int64_t>(i) * cols + j] * dy[i];
    dx[j] += acc;
  }
}

void matvec_t_acc_parallel(const double* w, int rows, int cols, const double* dy, double* dx) {
#pragma omp parallel for schedule(static)
  for (int j = 0; j < cols; ++j) {
    double acc = 0.0;
    for (int i = 0; i < rows; ++i) acc += w[static_cast<std::int64_t>(i) * cols + j] * dy[i];
    dx[j] += acc;
  }
}

void matvec_t_acc(const double* w, int rows, int cols, const double* dy, double* dx) {
  if (g_mode == Mode::Parallel && static_cast<std::int64_t>(rows) * cols >= kMatGrain)
    matvec_t_acc_parallel(w, rows, cols, dy, dx);
  else
    matvec_t_acc_serial(w, rows, cols, dy, dx);
}

void outer_acc_serial(const double* dy, int rows, const double* x, int cols, double* dw) {
  for (int i = 0; i < rows; ++i) {
    double* row = dw + static_cast<std::int64_t>(i) * cols;
    const double d = dy[i];
    for (int j = 0; j < cols; ++j) row[j] += d * x[j];
  }
}

void outer_acc_parallel(const double* dy, int rows, const double* x, int cols, double* dw) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < rows; ++i) {
    double* row = dw + static_cast<std::int64_t>(i) * cols;
    const double d = dy[i];
    for (int j = 0; j < cols; ++j) row[j] += d * x[j];
  }
}

void outer_acc(const double* dy, int rows, const double* x, int cols, double* dw) {
  if (g_mode == Mode::Parallel && static_cast<std::int64_t>(rows) * cols >= kMatGrain)
    outer_acc_parallel(dy, rows, x, cols, dw);
  else
    outer_acc_serial(dy, rows, x, cols, dw);
}

void matmul_serial(const double* a, int m, int k, const double* b, int n, double* c) {
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<std::int64_t>(i) * k;
    double* crow = c + static_cast<std::int64_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int l = 0; l < k; ++l) acc += arow[l] * b[static_cast<std::int64_t>(l) * n + j];
      crow[j] = acc;
    }
  }
}

void matmul_parallel(const double* a, int m, int k, const double* b, int n, double* c) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<std::int64_t>(i) * k;
    double* crow = c + static_cast<std::int64_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int l = 0; l < k; ++l) acc += arow[l] * b[static_cast<std::int64_t>(l) * n + j];
      crow[j] = acc;
    }
  }
}

void matmul(const double* a, int m, int k, const double* b, int n, double* c) {
  if (g_mode == Mode::Parallel && static_cast<std::int64_t>(m) * k * n >= kMatGrain)
    matmul_parallel(a, m, k, b, n, c);
  else
    matmul_serial(a, m, k, b, n, c);
}

void matmul_abt_acc_serial(const double* dc, int m, int n, const double* b, int k, double* da) {
  for (int i = 0; i < m; ++i) {
    const double* dcrow = dc + static_cast<std::int64_t>(i) * n;
    double* darow = da + static_cast<std::int64_t>(i) * k;
    for (int j = 0; j < k; ++j) {
      const double* brow = b + static_cast<std::int64_t>(j) * n;
      double acc = 0.0;
      for (int l = 0; l < n; ++l) acc += dcrow[l] * brow[l];
      darow[j] += acc;
    }
  }
}

void matmul_abt_acc_parallel(const double* dc, int m, int n, const double* b, int k, double* da) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) {
    const double* dcrow = dc + static_cast<std::int64_t>(i) * n;
    double* darow = da + static_cast<std::int64_t>(i) * k;
    for (int j = 0; j < k; ++j) {
      const double* brow = b + static_cast<std::int64_t>(j) * n;
      double acc = 0.0;
      for (int l = 0; l < n; ++l) acc += dcrow[l] * brow[l];
      darow[j] += acc;
    }
  }
}

void matmul_abt_acc(const double* dc, int m, int n, const double* b, int k, double* da) {
  if (g_mode == Mode::Parallel && static_cast<std::int64_t>(m) * n * k >= kMatGrain)
    matmul_abt_acc_parallel(dc, m, n, b, k, da);
  else
    matmul_abt_acc_serial(dc, m, n, b, k, da);
}

void matmul_atb_acc_serial(const double* a, int m, int k, const double* dc, int n, double* db) {
  for (int i = 0; i < k; ++i) {
    double* dbrow = db + static_cast<std::int64_t>(i) * n;
    for (int l = 0; l < m; ++l) {
      const double av = a[static_cast<std::int64_t>(l) * k + i];
      const double* dcrow = dc + static_cast<std::int64_t>(l) * n;
      for (int j = 0; j < n; ++j) dbrow[j] += av * dcrow[j];
    }
  }
}

void matmul_atb_acc_parallel(const double* a, int m, int k, const double* dc, int n, double* db) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < k; ++i) {
    double* dbrow = db + static_cast<std::int64_t>(i) * n;
    for (int l = 0; l < m; ++l) {
      const double av = a[static_cast<std::int64_t>(l) * k + i];
      const double* dcrow = dc + static_cast<std::int64_t>(l) * n;
      for (int j = 0; j < n; ++j) dbrow[j] += av * dcrow[j];
    }
  }
}

void matmul_atb_acc(const double* a, int m, int k, const double* dc, int n, double* db) {
  if (g_mode == Mode::Parallel && static_cast<std::int64_t>(m) * k * n >= kMatGrain)
    matmul_atb_acc_parallel(a, m, k, dc, n, db);
  else
    matmul_atb_acc_serial(a, m, k, dc, n, db);
}

namespace {

// Shared blocking scheme: both variants reduce the same fixed blocks in the
// same left-to-right order, so the fold is bit-identical either way.
void block_partials_serial(const double* x, std::int64_t n, double* partials, std::int64_t nblocks) {
  for (std::int64_t b = 0; b < nblocks; ++b) {
    const std::int64_t lo = b * kSumBlock;
    const std::int64_t hi = lo + kSumBlock < n ? lo + kSumBlock : n;
    double acc = 0.0;
    for (std::int64_t i = lo; i < hi; ++i) acc += x[i];
    partials[b] = acc;
  }
}

void block_partials_parallel(const double* x, std::int64_t n, double* partials, std::int64_t nblocks) {
#pragma omp parallel for schedule(static)
  for (std::int64_t b = 0; b < nblocks; ++b) {
    const std::int64_t lo = b * kSumBlock;
    const std::int64_t hi = lo + kSumBlock < n ? lo + kSumBlock : n;
    double acc = 0.0;
    for (std::int64_t i = lo; i < hi; ++i) acc += x[i];
    partials[b] = acc;
  }
}

double fold_partials(const double* partials, std::int64_t nblocks) {
  double acc = 0.0;
  for (std::int64_t b = 0; b < nblocks; ++b) acc += partials[b];
  return acc;
}

} // namespace

double sum_serial(const double* x, std::int64_t n) {
  if (n == 0) return 0.0;
  const std::int64_t nblocks = (n + kSumBlock - 1) / kSumBlock;
  std::vector<double> partials(static_cast<std::size_t>(nblocks));
  block_partials_serial(x, n, partials.data(), nblocks);
  return fold_partials(partials.data(), nblocks);
}

double sum_parallel(const double* x, std::int64_t n) {
  if (n == 0) return 0.0;
  const std::int64_t nblocks = (n + kSumBlock - 1) / kSumBlock;
  std::vector<double> partials(static_cast<std::size_t>(nblocks));
  block_partials_parallel(x, n, partials.data(), nblocks);
  return fold_partials(partials.data(), nblocks);
}

double sum(const double* x, std::int64_t n) {
  if (g_mode == Mode::Parallel && n >= kElementwiseGrain) return sum_parallel(x, n);
  return sum_serial(x, n);
}

namespace {

inline void softmax_row(const double* x, int cols, double* y) {
  double mx = x[0];
  for (int j = 1; j < cols; ++j)
    if (x[j] > mx) mx = x[j];
  double total = 0.0;
  for (int j = 0; j < cols; ++j) {
    y[j] = std::exp(x[j] - mx);
    total += y[j];
  }
  for (int j = 0; j < cols; ++j) y[j] /= total;
}

} // namespace

void softmax_serial(const double* x, int rows, int cols, double* y) {
  for (int i = 0; i < rows; ++i)
    softmax_row(x + static_cast<std::int64_t>(i) * cols, cols, y + static_cast<std::int64_t>(i) * cols);
}

void softmax_parallel(const double* x, int rows, int cols, double* y) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < rows; ++i)
    softmax_row(x + static_cast<std::int64_t>(i) * cols, cols, y + static_cast<std::int64_t>(i) * cols);
}

void softmax(const double* x, int rows, int cols, double* y) {
  if (g_mode == Mode::Parallel && static_cast<std::int64_t>(rows) * cols >= kElementwiseGrain)
    softmax_parallel(x, rows, cols, y);
  else
    softmax_serial(x, rows, cols, y);
}

} // namespace seqpred::kernels
