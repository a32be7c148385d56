#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "seqpred/eventlog.hpp"
#include "seqpred/nn.hpp"
#include "seqpred/train.hpp"

namespace seqpred {

// FNV-1a over the bytes of text; guards checkpoint payloads against
// corruption and truncation.
std::uint64_t fnv1a64(const std::string& text);

std::string base64_encode(const std::vector<unsigned char>& bytes);
std::vector<unsigned char> base64_decode(const std::string& text);

// Little-endian IEEE-754 byte packing; the round trip is bit-exact for
// every double, including negative zero and denormals.
std::vector<unsigned char> pack_doubles(const std::vector<double>& values);
std::vector<double> unpack_doubles(const std::vector<unsigned char>& bytes);

struct CheckpointMeta {
  Vocabulary vocabulary;
  TimeScaler scaler;
  TrainConfig config;
  std::uint64_t seed = 1;
  TrainSummary summary; // wall-clock seconds are not persisted
};

struct Checkpoint {
  int version = 0;
  CheckpointMeta meta;
  Generator model;
};

// File layout: one header line "seqpredckpt <version> <checksum>" where the
// checksum is the FNV-1a of everything after the line, then a JSON payload
// holding the vocabulary, scaler, topology, training config, summary, and
// every generator parameter as a named base64 array of little-endian
// doubles. Only the generator is persisted; the critic is discarded after
// training. Written atomically.
void save_checkpoint(const Generator& model, const CheckpointMeta& meta, const std::string& path);

// Verifies the checksum and version, then rebuilds the model bit-exactly.
Checkpoint load_checkpoint(const std::string& path);

} // namespace seqpred
