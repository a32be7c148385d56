#pragma once

#include <string>
#include <vector>

#include "seqpred/eventlog.hpp"
#include "seqpred/infer.hpp"
#include "seqpred/nn.hpp"

namespace seqpred {

// Edit distance counting substitutions, insertions, deletions, and adjacent
// transpositions, each transposed pair consumed in one step (the restricted
// variant: no further edits inside a transposed pair).
int damerau_levenshtein(const std::vector<int>& a, const std::vector<int>& b);

// Suffix similarity: 1 - distance / max(length); two empty sequences are
// perfectly similar.
double sdl(const std::vector<int>& a, const std::vector<int>& b);

struct EvalRecord {
  std::string case_id;
  int k = 0;                            // prefix length the prediction started from
  std::vector<int> truth;               // ground-truth suffix activities, end token stripped
  std::vector<int> predicted;           // best candidate's activities, end token stripped
  double sdl_value = 0.0;               // highest SDL over the beam candidates
  double absolute_error_days = 0.0;     // remaining-time error of that candidate
  double min_absolute_error_days = 0.0; // smallest remaining-time error over all candidates
};

struct EvalSummary {
  std::vector<EvalRecord> records; // one per pair, in pair order
  double mean_sdl = 0.0;
  double mae_days = 0.0;
  double min_mae_days = 0.0;
};

// Decodes every pair with beam search and scores the candidates against the
// ground truth. Per pair the candidate with the highest SDL provides the
// reported suffix and error; the smallest error over all candidates is kept
// as a separate column because the most similar suffix does not necessarily
// carry the best time estimate.
EvalSummary evaluate(const Generator& g, const std::vector<PrefixSuffixPair>& pairs,
                     const TimeScaler& scaler, const BeamConfig& beam);

// remaining time of one prediction: the sum of its denormalized durations
double predicted_remaining_days(const Prediction& p, const TimeScaler& scaler);

double regularized_incomplete_beta(double a, double b, double x);

// P(T >= t) for Student's t with df degrees of freedom
double student_t_upper_tail(double t, int df);

enum class TestDirection {
  Upper, // alternative: mean(x - y) > 0
  Lower, // alternative: mean(x - y) < 0
};

struct TTestResult {
  double mean_difference = 0.0;
  double t_statistic = 0.0;
  int degrees_of_freedom = 0;
  double p_value = 0.0;
  TestDirection direction = TestDirection::Upper;
};

// One-sided paired t-test on matched samples. Zero variance of the
// differences is an error rather than a silent infinite statistic.
TTestResult paired_t_test(const std::vector<double>& x, const std::vector<double>& y,
                          TestDirection direction);

} // namespace seqpred
