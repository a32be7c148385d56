#pragma once

#include <vector>

#include "seqpred/nn.hpp"

namespace seqpred {

struct Prediction {
  std::vector<int> activities;   // never the start token; ends with the end token unless truncated
  std::vector<double> durations; // normalized units, aligned with activities
  double score = 0.0;            // accumulated log-probability, end token included
  bool truncated = false;        // hit the step cap before emitting the end token
};

// Argmax rollout over the tapeless decoder: at each step the most probable
// activity other than the start token is emitted (ties to the lowest index)
// and fed back with its predicted duration.
Prediction greedy_decode(const Generator& g, const std::vector<std::vector<double>>& prefix,
                         int max_steps);

struct BeamConfig {
  int width = 1;
  int max_steps = 1;
};

// Beam search where completed hypotheses keep their slots: each end-token
// emission moves one hypothesis to the completed set and shrinks the live
// frontier. Candidates rank by accumulated log-probability, ties broken by
// lower activity index and then by older hypothesis. Returns completed
// hypotheses ranked by score followed by truncated ones, at most `width`
// in total. Width 1 reproduces greedy_decode bit for bit.
std::vector<Prediction> beam_search(const Generator& g,
                                    const std::vector<std::vector<double>>& prefix,
                                    const BeamConfig& cfg);

} // namespace seqpred
