#include <chrono>
#include <cstdint>
#include <cstring>
#include <iomanip>
#include <iostream>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <CLI11.hpp>

#include "seqpred/eventlog.hpp"
#include "seqpred/kernels.hpp"
#include "seqpred/nn.hpp"
#include "seqpred/rng.hpp"

using namespace seqpred;

namespace {

std::vector<double> random_values(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

// best-of-reps wall time for one call, in milliseconds
template <class F>
double time_call(int reps, int inner, F&& f) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto start = std::chrono::steady_clock::now();
    for (int i = 0; i < inner; ++i) f();
    const auto stop = std::chrono::steady_clock::now();
    const double ms = std::chrono::duration<double, std::milli>(stop - start).count() / inner;
    if (ms < best) best = ms;
  }
  return best;
}

void print_row(const std::string& name, const std::string& size, double serial_ms,
               double parallel_ms, bool bitwise) {
  std::cout << std::left << std::setw(18) << name << std::setw(18) << size << std::right
            << std::fixed << std::setprecision(4) << std::setw(12) << serial_ms << std::setw(12)
            << parallel_ms << std::setprecision(2) << std::setw(10) << serial_ms / parallel_ms
            << std::setw(10) << (bitwise ? "ok" : "DIFFER") << "\n";
}

bool same_bits(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"serial versus OpenMP kernel timings"};
  int reps = 5;
  int dim = 1024;
  app.add_option("--reps", reps, "timing repetitions per kernel")->check(CLI::PositiveNumber);
  app.add_option("--dim", dim, "base matrix dimension")->check(CLI::PositiveNumber);
  CLI11_PARSE(app, argc, argv);

#ifdef _OPENMP
  std::cout << "openmp threads: " << omp_get_max_threads() << "\n";
#else
  std::cout << "built without openmp, parallel mode falls back to serial\n";
#endif
  std::cout << std::left << std::setw(18) << "kernel" << std::setw(18) << "size" << std::right
            << std::setw(12) << "serial ms" << std::setw(12) << "parallel ms" << std::setw(10)
            << "speedup" << std::setw(10) << "bitwise" << "\n";

  Rng rng(42);
  const int n = dim;
  const std::string sq = std::to_string(n) + "x" + std::to_string(n);
  const std::vector<double> w = random_values(static_cast<std::size_t>(n) * n, rng);
  const std::vector<double> x = random_values(static_cast<std::size_t>(n), rng);
  const std::vector<double> b = random_values(static_cast<std::size_t>(n) * n, rng);

  {
    std::vector<double> ys(static_cast<std::size_t>(n)), yp(ys);
    const double s = time_call(reps, 50, [&] { kernels::matvec_serial(w.data(), n, n, x.data(), ys.data()); });
    const double p = time_call(reps, 50, [&] { kernels::matvec_parallel(w.data(), n, n, x.data(), yp.data()); });
    print_row("matvec", sq, s, p, same_bits(ys, yp));
  }
  {
    std::vector<double> ds(static_cast<std::size_t>(n), 0.0), dp(ds);
    const double s = time_call(reps, 50, [&] { kernels::matvec_t_acc_serial(w.data(), n, n, x.data(), ds.data()); });
    const double p = time_call(reps, 50, [&] { kernels::matvec_t_acc_parallel(w.data(), n, n, x.data(), dp.data()); });
    print_row("matvec_t_acc", sq, s, p, same_bits(ds, dp));
  }
  {
    std::vector<double> ds(static_cast<std::size_t>(n) * n, 0.0), dp(ds);
    const double s = time_call(reps, 20, [&] { kernels::outer_acc_serial(x.data(), n, x.data(), n, ds.data()); });
    const double p = time_call(reps, 20, [&] { kernels::outer_acc_parallel(x.data(), n, x.data(), n, dp.data()); });
    print_row("outer_acc", sq, s, p, same_bits(ds, dp));
  }
  {
    const int m = n / 4;
    std::vector<double> cs(static_cast<std::size_t>(m) * m), cp(cs);
    const std::string size = std::to_string(m) + "^3";
    const double s = time_call(reps, 3, [&] { kernels::matmul_serial(w.data(), m, m, b.data(), m, cs.data()); });
    const double p = time_call(reps, 3, [&] { kernels::matmul_parallel(w.data(), m, m, b.data(), m, cp.data()); });
    print_row("matmul", size, s, p, same_bits(cs, cp));
  }
  {
    const int m = n / 4;
    std::vector<double> das(static_cast<std::size_t>(m) * m, 0.0), dap(das);
    const std::string size = std::to_string(m) + "^3";
    const double s = time_call(reps, 3, [&] { kernels::matmul_abt_acc_serial(w.data(), m, m, b.data(), m, das.data()); });
    const double p = time_call(reps, 3, [&] { kernels::matmul_abt_acc_parallel(w.data(), m, m, b.data(), m, dap.data()); });
    print_row("matmul_abt_acc", size, s, p, same_bits(das, dap));
  }
  {
    const int m = n / 4;
    std::vector<double> dbs(static_cast<std::size_t>(m) * m, 0.0), dbp(dbs);
    const std::string size = std::to_string(m) + "^3";
    const double s = time_call(reps, 3, [&] { kernels::matmul_atb_acc_serial(w.data(), m, m, b.data(), m, dbs.data()); });
    const double p = time_call(reps, 3, [&] { kernels::matmul_atb_acc_parallel(w.data(), m, m, b.data(), m, dbp.data()); });
    print_row("matmul_atb_acc", size, s, p, same_bits(dbs, dbp));
  }
  {
    const std::int64_t len = static_cast<std::int64_t>(n) * n * 4;
    const std::vector<double> big = random_values(static_cast<std::size_t>(len), rng);
    double sum_s = 0.0, sum_p = 0.0;
    const double s = time_call(reps, 20, [&] { sum_s = kernels::sum_serial(big.data(), len); });
    const double p = time_call(reps, 20, [&] { sum_p = kernels::sum_parallel(big.data(), len); });
    print_row("sum", std::to_string(len), s, p, sum_s == sum_p);
  }
  {
    const int rows = n / 2, cols = n;
    std::vector<double> ys(static_cast<std::size_t>(rows) * cols), yp(ys);
    const std::string size = std::to_string(rows) + "x" + std::to_string(cols);
    const double s = time_call(reps, 10, [&] { kernels::softmax_serial(b.data(), rows, cols, ys.data()); });
    const double p = time_call(reps, 10, [&] { kernels::softmax_parallel(b.data(), rows, cols, yp.data()); });
    print_row("softmax", size, s, p, same_bits(ys, yp));
  }

  // whole-model check: one encoder pass at paper scale through the dispatchers
  {
    const int vocab = 22, hidden = 200, layers = 5, steps = 20;
    Rng model_rng(7);
    const Generator g = init_generator(vocab, hidden, layers, model_rng);
    std::vector<std::vector<double>> prefix;
    for (int i = 0; i < steps; ++i)
      prefix.push_back(encode_event(2 + i % (vocab - 2), 0.1 * (i % 7), vocab));

    RawState ss, sp;
    kernels::set_mode(kernels::Mode::Serial);
    const double s = time_call(reps, 5, [&] { ss = raw_encode_prefix(g, prefix); });
    kernels::set_mode(kernels::Mode::Parallel);
    const double p = time_call(reps, 5, [&] { sp = raw_encode_prefix(g, prefix); });
    kernels::set_mode(kernels::Mode::Serial);
    bool bitwise = true;
    for (int l = 0; l < layers; ++l)
      bitwise = bitwise && same_bits(ss.h[static_cast<std::size_t>(l)], sp.h[static_cast<std::size_t>(l)]) &&
                same_bits(ss.c[static_cast<std::size_t>(l)], sp.c[static_cast<std::size_t>(l)]);
    print_row("encode_prefix", "5x200, 20 ev", s, p, bitwise);
  }
  return 0;
}
