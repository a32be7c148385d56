#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace seqpred::cli {

// Parses and executes one command (synth, train, predict, evaluate).
// Returns the process exit status; failures print to err, exit nonzero, and
// leave no partially written artifact because every file write is atomic.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace seqpred::cli
