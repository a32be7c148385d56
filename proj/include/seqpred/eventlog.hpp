#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "seqpred/rng.hpp"

namespace seqpred {

struct Event {
  std::string activity;
  double timestamp = 0.0;     // seconds since 1970-01-01T00:00:00 UTC
  double duration_days = 0.0; // gap to the previous event in the same case
};

struct Trace {
  std::string case_id;
  std::vector<Event> events;
};

struct EventLog {
  std::vector<Trace> traces;

  std::size_t event_count() const {
    std::size_t n = 0;
    for (const Trace& t : traces) n += t.events.size();
    return n;
  }
};

// ISO-8601 timestamps: "YYYY-MM-DD[T ]HH:MM:SS" with optional fractional
// seconds and an optional "Z" or "+HH:MM" offset. Throws on anything else,
// echoing the offending text.
double parse_timestamp(std::string_view text);

// Inverse of parse_timestamp, UTC, microsecond resolution. Fractional
// seconds are printed only when non-zero.
std::string format_timestamp(double seconds);

// RFC-4180 style field splitting; quoted fields may contain commas, escaped
// quotes ("") and nothing else exotic.
std::vector<std::string> split_csv_line(std::string_view line);
std::string csv_escape(std::string_view field);

// Reads a log with header columns case_id, activity, timestamp (any order,
// extra columns ignored). Events are grouped by case and sorted by timestamp
// (stable), and cases are ordered by their first timestamp (stable). Errors
// carry 1-based line numbers.
EventLog parse_csv(std::istream& in);
EventLog parse_csv_file(const std::string& path);

void write_csv(const EventLog& log, std::ostream& out);
void write_csv_file(const EventLog& log, const std::string& path);

// Fills duration_days: 0 for the first event of a case, otherwise the gap to
// the previous event in days. Requires events already time-ordered.
EventLog derive_durations(EventLog log);

struct LogSplit {
  EventLog train;
  EventLog validation;
  EventLog test;
};

// Splits whole traces 7:1:2 by trace start time: the earliest 70% train, the
// next 10% validation, the remainder test. Throws if any part would be empty.
LogSplit temporal_split(const EventLog& log);

struct Vocabulary {
  static constexpr int kSos = 0;
  static constexpr int kEos = 1;
  static constexpr const char* kSosLabel = "[SOS]";
  static constexpr const char* kEosLabel = "[EOS]";

  std::vector<std::string> labels;            // index -> label
  std::unordered_map<std::string, int> index; // label -> index

  int size() const { return static_cast<int>(labels.size()); }
  bool contains(const std::string& label) const { return index.count(label) != 0; }
  int id_of(const std::string& label) const;
  const std::string& label_of(int id) const;
};

// Activity labels of the given log, sorted lexicographically, behind the two
// reserved control tokens. A label spelled like a control token is an error.
Vocabulary build_vocabulary(const EventLog& train);

struct TimeScaler {
  double max_duration_days = 1.0;
  double normalize(double days) const { return days / max_duration_days; }
  double denormalize(double value) const { return value * max_duration_days; }
};

// max duration over the log; falls back to 1.0 when every duration is zero
// so normalize never divides by zero
TimeScaler fit_time_scaler(const EventLog& train);

// one-hot activity block of vocab_size entries followed by the scaled duration
std::vector<double> encode_event(int activity_id, double normalized_duration, int vocab_size);

struct PrefixSuffixPair {
  std::string case_id;
  int k = 0;                                // prefix length in events
  std::vector<std::vector<double>> prefix;  // encoded prefix events
  std::vector<int> suffix_ids;              // target activities, ending in kEos
  std::vector<double> suffix_durations;     // normalized, aligned with suffix_ids
  double remaining_days = 0.0;              // unscaled ground-truth remaining time
};

// Every (prefix, suffix) cut of every trace with k in [2, n-1]; traces
// shorter than 3 events contribute nothing. Labels outside the vocabulary
// are an error.
std::vector<PrefixSuffixPair> generate_pairs(const EventLog& log, const Vocabulary& vocab,
                                             const TimeScaler& scaler);

// Synthetic log description: a weighted set of activity sequences with
// per-step durations in days.
struct LogVariant {
  double weight = 1.0;
  std::vector<std::pair<std::string, double>> steps; // label, duration_days
};

struct LogSpec {
  int traces = 0;
  double start = 0.0;          // timestamp of the first trace
  double trace_gap_days = 0.0; // spacing between consecutive trace starts
  double jitter = 0.0;         // relative duration noise in [0, 1)
  std::vector<LogVariant> variants;
};

LogSpec parse_log_spec(std::istream& in);
LogSpec parse_log_spec_file(const std::string& path);

// Draws per trace: one weighted variant choice, then one jitter factor per
// step after the first. Trace i starts at start + i * trace_gap_days.
EventLog generate_log(const LogSpec& spec, Rng& rng);

} // namespace seqpred
