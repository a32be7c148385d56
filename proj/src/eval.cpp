#include "seqpred/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <exception>
#include <stdexcept>

#include "seqpred/kernels.hpp"

namespace seqpred {

int damerau_levenshtein(const std::vector<int>& a, const std::vector<int>& b) {
  const std::size_t n = a.size();
  const std::size_t m = b.size();
  std::vector<std::vector<int>> d(n + 1, std::vector<int>(m + 1, 0));
  for (std::size_t i = 0; i <= n; ++i) d[i][0] = static_cast<int>(i);
  for (std::size_t j = 0; j <= m; ++j) d[0][j] = static_cast<int>(j);
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      const int cost = a[i - 1] == b[j - 1] ? 0 : 1;
      int best = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1, d[i - 1][j - 1] + cost});
      if (i > 1 && j > 1 && a[i - 1] == b[j - 2] && a[i - 2] == b[j - 1])
        best = std::min(best, d[i - 2][j - 2] + 1);
      d[i][j] = best;
    }
  }
  return d[n][m];
}

double sdl(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.empty() && b.empty()) return 1.0;
  const double len = static_cast<double>(std::max(a.size(), b.size()));
  return 1.0 - static_cast<double>(damerau_levenshtein(a, b)) / len;
}

double predicted_remaining_days(const Prediction& p, const TimeScaler& scaler) {
  double sum = 0.0;
  for (double d : p.durations) sum += scaler.denormalize(d);
  return sum;
}

namespace {

std::vector<int> strip_end_token(std::vector<int> ids) {
  if (!ids.empty() && ids.back() == Vocabulary::kEos) ids.pop_back();
  return ids;
}

EvalRecord evaluate_pair(const Generator& g, const PrefixSuffixPair& pair,
                         const TimeScaler& scaler, const BeamConfig& beam) {
  const std::vector<Prediction> candidates = beam_search(g, pair.prefix, beam);
  if (candidates.empty())
    throw std::runtime_error("evaluate: no candidates for pair " + pair.case_id);

  EvalRecord record;
  record.case_id = pair.case_id;
  record.k = pair.k;
  record.truth = strip_end_token(pair.suffix_ids);

  bool first = true;
  for (const Prediction& candidate : candidates) {
    const std::vector<int> predicted = strip_end_token(candidate.activities);
    const double similarity = sdl(record.truth, predicted);
    const double error = std::abs(predicted_remaining_days(candidate, scaler) - pair.remaining_days);
    if (first || similarity > record.sdl_value) {
      record.sdl_value = similarity;
      record.predicted = predicted;
      record.absolute_error_days = error;
    }
    record.min_absolute_error_days = first ? error : std::min(record.min_absolute_error_days, error);
    first = false;
  }
  return record;
}

} // namespace

EvalSummary evaluate(const Generator& g, const std::vector<PrefixSuffixPair>& pairs,
                     const TimeScaler& scaler, const BeamConfig& beam) {
  if (pairs.empty()) throw std::invalid_argument("evaluate: no pairs");
  const int n = static_cast<int>(pairs.size());

  EvalSummary summary;
  summary.records.resize(pairs.size());
  std::exception_ptr err = nullptr;
  if (kernels::mode() == kernels::Mode::Parallel && n >= 2) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
      try {
        summary.records[static_cast<std::size_t>(i)] =
            evaluate_pair(g, pairs[static_cast<std::size_t>(i)], scaler, beam);
      } catch (...) {
#pragma omp critical
        if (!err) err = std::current_exception();
      }
    }
  } else {
    for (int i = 0; i < n; ++i)
      summary.records[static_cast<std::size_t>(i)] =
          evaluate_pair(g, pairs[static_cast<std::size_t>(i)], scaler, beam);
  }
  if (err) std::rethrow_exception(err);

  for (const EvalRecord& r : summary.records) {
    summary.mean_sdl += r.sdl_value;
    summary.mae_days += r.absolute_error_days;
    summary.min_mae_days += r.min_absolute_error_days;
  }
  summary.mean_sdl /= n;
  summary.mae_days /= n;
  summary.min_mae_days /= n;
  return summary;
}

namespace {

// continued fraction for the regularized incomplete beta function
double beta_continued_fraction(double a, double b, double x) {
  const int max_iterations = 300;
  const double eps = 3e-16;
  const double floor = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < floor) d = floor;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= max_iterations; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < floor) d = floor;
    c = 1.0 + aa / c;
    if (std::abs(c) < floor) c = floor;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < floor) d = floor;
    c = 1.0 + aa / c;
    if (std::abs(c) < floor) c = floor;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < eps) return h;
  }
  throw std::runtime_error("regularized_incomplete_beta: continued fraction did not converge");
}

} // namespace

double regularized_incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0))
    throw std::invalid_argument("regularized_incomplete_beta: parameters must be positive");
  if (!(x >= 0.0 && x <= 1.0))
    throw std::invalid_argument("regularized_incomplete_beta: x must be in [0, 1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                           a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_upper_tail(double t, int df) {
  if (df < 1) throw std::invalid_argument("student_t_upper_tail: df must be at least 1");
  if (!std::isfinite(t)) throw std::invalid_argument("student_t_upper_tail: t must be finite");
  const double n = static_cast<double>(df);
  const double half_two_sided = 0.5 * regularized_incomplete_beta(0.5 * n, 0.5, n / (n + t * t));
  return t >= 0.0 ? half_two_sided : 1.0 - half_two_sided;
}

TTestResult paired_t_test(const std::vector<double>& x, const std::vector<double>& y,
                          TestDirection direction) {
  if (x.size() != y.size())
    throw std::invalid_argument("paired_t_test: sample sizes differ: " + std::to_string(x.size()) +
                                " vs " + std::to_string(y.size()));
  if (x.size() < 2) throw std::invalid_argument("paired_t_test: need at least two pairs");
  const std::size_t n = x.size();

  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += x[i] - y[i];
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = x[i] - y[i] - mean;
    var += d * d;
  }
  var /= static_cast<double>(n - 1);
  if (var == 0.0)
    throw std::runtime_error("paired_t_test: differences have zero variance, t is undefined");

  TTestResult result;
  result.direction = direction;
  result.mean_difference = mean;
  result.degrees_of_freedom = static_cast<int>(n) - 1;
  result.t_statistic = mean / std::sqrt(var / static_cast<double>(n));
  result.p_value = direction == TestDirection::Upper
                       ? student_t_upper_tail(result.t_statistic, result.degrees_of_freedom)
                       : student_t_upper_tail(-result.t_statistic, result.degrees_of_freedom);
  return result;
}

} // namespace seqpred
