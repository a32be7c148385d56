#include "seqpred/eventlog.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "seqpred/ioutil.hpp"

namespace seqpred {

namespace {

// civil-calendar day arithmetic (proleptic Gregorian), exact for the whole
// int range and free of any locale or timezone dependency
std::int64_t days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const int era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153u * static_cast<unsigned>(m + (m > 2 ? -3 : 9)) + 2u) / 5u +
                       static_cast<unsigned>(d) - 1u;
  const unsigned doe = yoe * 365u + yoe / 4u - yoe / 100u + doy;
  return static_cast<std::int64_t>(era) * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, int& y, int& m, int& d) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t yy = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
  m = static_cast<int>(mp < 10 ? mp + 3 : mp - 9);
  y = static_cast<int>(yy + (m <= 2));
}

bool is_leap(int y) { return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0; }

int days_in_month(int y, int m) {
  static const int lengths[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  if (m == 2 && is_leap(y)) return 29;
  return lengths[m - 1];
}

[[noreturn]] void bad_timestamp(std::string_view text, const char* why) {
  throw std::runtime_error("invalid timestamp \"" + std::string(text) + "\": " + why);
}

bool take_digits(std::string_view s, std::size_t& pos, int count, int& out) {
  if (pos + static_cast<std::size_t>(count) > s.size()) return false;
  int v = 0;
  for (int i = 0; i < count; ++i) {
    const char c = s[pos + static_cast<std::size_t>(i)];
    if (c < '0' || c > '9') return false;
    v = v * 10 + (c - '0');
  }
  pos += static_cast<std::size_t>(count);
  out = v;
  return true;
}

} // namespace

double parse_timestamp(std::string_view text) {
  std::size_t pos = 0;
  int year, month, day, hour, minute, second;
  if (!take_digits(text, pos, 4, year)) bad_timestamp(text, "expected YYYY-MM-DD");
  if (pos >= text.size() || text[pos] != '-') bad_timestamp(text, "expected '-' after year");
  ++pos;
  if (!take_digits(text, pos, 2, month)) bad_timestamp(text, "expected two-digit month");
  if (pos >= text.size() || text[pos] != '-') bad_timestamp(text, "expected '-' after month");
  ++pos;
  if (!take_digits(text, pos, 2, day)) bad_timestamp(text, "expected two-digit day");
  if (pos >= text.size() || (text[pos] != 'T' && text[pos] != ' '))
    bad_timestamp(text, "expected 'T' or ' ' before the time");
  ++pos;
  if (!take_digits(text, pos, 2, hour)) bad_timestamp(text, "expected two-digit hour");
  if (pos >= text.size() || text[pos] != ':') bad_timestamp(text, "expected ':' after hour");
  ++pos;
  if (!take_digits(text, pos, 2, minute)) bad_timestamp(text, "expected two-digit minute");
  if (pos >= text.size() || text[pos] != ':') bad_timestamp(text, "expected ':' after minute");
  ++pos;
  if (!take_digits(text, pos, 2, second)) bad_timestamp(text, "expected two-digit second");

  double fraction = 0.0;
  if (pos < text.size() && text[pos] == '.') {
    ++pos;
    double scale = 0.1;
    bool any = false;
    while (pos < text.size() && text[pos] >= '0' && text[pos] <= '9') {
      fraction += (text[pos] - '0') * scale;
      scale *= 0.1;
      ++pos;
      any = true;
    }
    if (!any) bad_timestamp(text, "expected digits after '.'");
  }

  double offset_seconds = 0.0;
  if (pos < text.size()) {
    const char c = text[pos];
    if (c == 'Z') {
      ++pos;
    } else if (c == '+' || c == '-') {
      const double sign = c == '+' ? 1.0 : -1.0;
      ++pos;
      int oh, om;
      if (!take_digits(text, pos, 2, oh)) bad_timestamp(text, "expected offset hours");
      if (pos >= text.size() || text[pos] != ':') bad_timestamp(text, "expected ':' in offset");
      ++pos;
      if (!take_digits(text, pos, 2, om)) bad_timestamp(text, "expected offset minutes");
      if (oh > 23 || om > 59) bad_timestamp(text, "offset out of range");
      offset_seconds = sign * (oh * 3600.0 + om * 60.0);
    } else {
      bad_timestamp(text, "unexpected trailing characters");
    }
  }
  if (pos != text.size()) bad_timestamp(text, "unexpected trailing characters");

  if (month < 1 || month > 12) bad_timestamp(text, "month out of range");
  if (day < 1 || day > days_in_month(year, month)) bad_timestamp(text, "day out of range");
  if (hour > 23) bad_timestamp(text, "hour out of range");
  if (minute > 59) bad_timestamp(text, "minute out of range");
  if (second > 59) bad_timestamp(text, "second out of range");

  const double days = static_cast<double>(days_from_civil(year, month, day));
  return days * 86400.0 + hour * 3600.0 + minute * 60.0 + second + fraction - offset_seconds;
}

std::string format_timestamp(double seconds) {
  if (!std::isfinite(seconds)) throw std::runtime_error("format_timestamp: non-finite value");
  // round to whole microseconds first so the date and the fraction agree
  const double micros_total = std::round(seconds * 1e6);
  std::int64_t whole = static_cast<std::int64_t>(std::floor(micros_total / 1e6));
  std::int64_t micros = static_cast<std::int64_t>(micros_total - static_cast<double>(whole) * 1e6);
  if (micros >= 1000000) {
    whole += 1;
    micros -= 1000000;
  }
  std::int64_t days = whole / 86400;
  std::int64_t rem = whole % 86400;
  if (rem < 0) {
    rem += 86400;
    days -= 1;
  }
  int y, m, d;
  civil_from_days(days, y, m, d);
  const int hh = static_cast<int>(rem / 3600);
  const int mm = static_cast<int>((rem % 3600) / 60);
  const int ss = static_cast<int>(rem % 60);
  char buf[48];
  if (micros != 0)
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02d.%06lld", y, m, d, hh, mm, ss,
                  static_cast<long long>(micros));
  else
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02d", y, m, d, hh, mm, ss);
  return buf;
}

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  std::size_t i = 0;
  while (i < line.size()) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          i += 2;
          continue;
        }
        quoted = false;
        ++i;
        continue;
      }
      cur += c;
      ++i;
      continue;
    }
    if (c == '"' && cur.empty()) {
      quoted = true;
      ++i;
      continue;
    }
    if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
      ++i;
      continue;
    }
    cur += c;
    ++i;
  }
  if (quoted) throw std::runtime_error("unterminated quote in CSV line");
  fields.push_back(std::move(cur));
  return fields;
}

std::string csv_escape(std::string_view field) {
  const bool needs_quotes = field.find_first_of(",\"\n\r") != std::string_view::npos;
  if (!needs_quotes) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += '"';
  return out;
}

EventLog parse_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("CSV is empty: missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();

  const std::vector<std::string> header = split_csv_line(line);
  int col_case = -1, col_activity = -1, col_timestamp = -1;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == "case_id") col_case = static_cast<int>(i);
    else if (header[i] == "activity") col_activity = static_cast<int>(i);
    else if (header[i] == "timestamp") col_timestamp = static_cast<int>(i);
  }
  if (col_case < 0) throw std::runtime_error("CSV header is missing column \"case_id\"");
  if (col_activity < 0) throw std::runtime_error("CSV header is missing column \"activity\"");
  if (col_timestamp < 0) throw std::runtime_error("CSV header is missing column \"timestamp\"");

  // first-appearance order of cases, refined below by start time
  std::vector<Trace> traces;
  std::unordered_map<std::string, std::size_t> by_case;

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    try {
      fields = split_csv_line(line);
    } catch (const std::exception& e) {
      throw std::runtime_error("CSV line " + std::to_string(line_no) + ": " + e.what());
    }
    if (fields.size() != header.size())
      throw std::runtime_error("CSV line " + std::to_string(line_no) + ": expected " +
                               std::to_string(header.size()) + " fields, found " +
                               std::to_string(fields.size()));
    const std::string& case_id = fields[static_cast<std::size_t>(col_case)];
    const std::string& activity = fields[static_cast<std::size_t>(col_activity)];
    const std::string& stamp = fields[static_cast<std::size_t>(col_timestamp)];
    if (case_id.empty())
      throw std::runtime_error("CSV line " + std::to_string(line_no) + ": empty case_id");
    if (activity.empty())
      throw std::runtime_error("CSV line " + std::to_string(line_no) + ": empty activity");
    double ts;
    try {
      ts = parse_timestamp(stamp);
    } catch (const std::exception& e) {
      throw std::runtime_error("CSV line " + std::to_string(line_no) + ": " + e.what());
    }

    auto [it, inserted] = by_case.try_emplace(case_id, traces.size());
    if (inserted) traces.push_back(Trace{case_id, {}});
    traces[it->second].events.push_back(Event{activity, ts, 0.0});
  }

  if (traces.empty()) throw std::runtime_error("CSV contains no event rows");

  for (Trace& t : traces)
    std::stable_sort(t.events.begin(), t.events.end(),
                     [](const Event& a, const Event& b) { return a.timestamp < b.timestamp; });
  std::stable_sort(traces.begin(), traces.end(), [](const Trace& a, const Trace& b) {
    return a.events.front().timestamp < b.events.front().timestamp;
  });

  EventLog log;
  log.traces = std::move(traces);
  return log;
}

EventLog parse_csv_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open event log: " + path);
  return parse_csv(in);
}

void write_csv(const EventLog& log, std::ostream& out) {
  out << "case_id,activity,timestamp\n";
  for (const Trace& t : log.traces)
    for (const Event& e : t.events)
      out << csv_escape(t.case_id) << ',' << csv_escape(e.activity) << ','
          << format_timestamp(e.timestamp) << '\n';
}

void write_csv_file(const EventLog& log, const std::string& path) {
  atomic_write_file(path, [&](std::ostream& out) { write_csv(log, out); });
}

EventLog derive_durations(EventLog log) {
  const double day = 86400.0;
  for (Trace& t : log.traces) {
    for (std::size_t i = 0; i < t.events.size(); ++i) {
      if (i == 0) {
        t.events[i].duration_days = 0.0;
      } else {
        const double gap = t.events[i].timestamp - t.events[i - 1].timestamp;
        if (gap < 0.0)
          throw std::runtime_error("case " + t.case_id + ": events are not time-ordered");
        t.events[i].duration_days = gap / day;
      }
    }
  }
  return log;
}

LogSplit temporal_split(const EventLog& log) {
  const std::size_t n = log.traces.size();
  const std::size_t n_train = static_cast<std::size_t>(static_cast<double>(n) * 0.7);
  const std::size_t n_val = static_cast<std::size_t>(static_cast<double>(n) * 0.1);
  const std::size_t n_test = n - n_train - n_val;
  if (n_train == 0 || n_val == 0 || n_test == 0)
    throw std::runtime_error("temporal split needs at least 10 traces, got " + std::to_string(n));

  LogSplit split;
  split.train.traces.assign(log.traces.begin(), log.traces.begin() + static_cast<std::ptrdiff_t>(n_train));
  split.validation.traces.assign(log.traces.begin() + static_cast<std::ptrdiff_t>(n_train),
                                 log.traces.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  split.test.traces.assign(log.traces.begin() + static_cast<std::ptrdiff_t>(n_train + n_val),
                           log.traces.end());
  return split;
}

int Vocabulary::id_of(const std::string& label) const {
  auto it = index.find(label);
  if (it == index.end()) throw std::runtime_error("unknown activity label \"" + label + "\"");
  return it->second;
}

const std::string& Vocabulary::label_of(int id) const {
  if (id < 0 || id >= size())
    throw std::runtime_error("activity id " + std::to_string(id) + " out of range");
  return labels[static_cast<std::size_t>(id)];
}

Vocabulary build_vocabulary(const EventLog& train) {
  std::set<std::string> distinct;
  for (const Trace& t : train.traces)
    for (const Event& e : t.events) {
      if (e.activity == Vocabulary::kSosLabel || e.activity == Vocabulary::kEosLabel)
        throw std::runtime_error("activity label \"" + e.activity + "\" collides with a control token");
      distinct.insert(e.activity);
    }
  Vocabulary v;
  v.labels.push_back(Vocabulary::kSosLabel);
  v.labels.push_back(Vocabulary::kEosLabel);
  for (const std::string& s : distinct) v.labels.push_back(s);
  for (std::size_t i = 0; i < v.labels.size(); ++i) v.index[v.labels[i]] = static_cast<int>(i);
  return v;
}

TimeScaler fit_time_scaler(const EventLog& train) {
  double mx = 0.0;
  for (const Trace& t : train.traces)
    for (const Event& e : t.events) mx = std::max(mx, e.duration_days);
  TimeScaler s;
  s.max_duration_days = mx > 0.0 ? mx : 1.0;
  return s;
}

std::vector<double> encode_event(int activity_id, double normalized_duration, int vocab_size) {
  if (activity_id < 0 || activity_id >= vocab_size)
    throw std::runtime_error("encode_event: activity id " + std::to_string(activity_id) +
                             " out of range for vocabulary of " + std::to_string(vocab_size));
  std::vector<double> v(static_cast<std::size_t>(vocab_size) + 1, 0.0);
  v[static_cast<std::size_t>(activity_id)] = 1.0;
  v.back() = normalized_duration;
  return v;
}

std::vector<PrefixSuffixPair> generate_pairs(const EventLog& log, const Vocabulary& vocab,
                                             const TimeScaler& scaler) {
  std::vector<PrefixSuffixPair> pairs;
  for (const Trace& t : log.traces) {
    const int n = static_cast<int>(t.events.size());
    if (n < 3) continue;
    std::vector<int> ids(static_cast<std::size_t>(n));
    std::vector<double> norm(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      ids[static_cast<std::size_t>(i)] = vocab.id_of(t.events[static_cast<std::size_t>(i)].activity);
      norm[static_cast<std::size_t>(i)] =
          scaler.normalize(t.events[static_cast<std::size_t>(i)].duration_days);
    }
    for (int k = 2; k <= n - 1; ++k) {
      PrefixSuffixPair p;
      p.case_id = t.case_id;
      p.k = k;
      p.prefix.reserve(static_cast<std::size_t>(k));
      for (int i = 0; i < k; ++i)
        p.prefix.push_back(encode_event(ids[static_cast<std::size_t>(i)], norm[static_cast<std::size_t>(i)],
                                        vocab.size()));
      for (int i = k; i < n; ++i) {
        p.suffix_ids.push_back(ids[static_cast<std::size_t>(i)]);
        p.suffix_durations.push_back(norm[static_cast<std::size_t>(i)]);
        p.remaining_days += t.events[static_cast<std::size_t>(i)].duration_days;
      }
      p.suffix_ids.push_back(Vocabulary::kEos);
      p.suffix_durations.push_back(0.0);
      pairs.push_back(std::move(p));
    }
  }
  return pairs;
}

namespace {

double parse_double_strict(const std::string& text, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error("invalid " + what + ": \"" + text + "\"");
  }
}

int parse_int_strict(const std::string& text, const std::string& what) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(text, &used);
    if (used != text.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error("invalid " + what + ": \"" + text + "\"");
  }
}

} // namespace

LogSpec parse_log_spec(std::istream& in) {
  LogSpec spec;
  bool saw_traces = false, saw_start = false;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key) || key[0] == '#') continue;
    try {
      if (key == "traces") {
        std::string v;
        ls >> v;
        spec.traces = parse_int_strict(v, "trace count");
        saw_traces = true;
      } else if (key == "start") {
        std::string v;
        ls >> v;
        spec.start = parse_timestamp(v);
        saw_start = true;
      } else if (key == "trace_gap_days") {
        std::string v;
        ls >> v;
        spec.trace_gap_days = parse_double_strict(v, "trace gap");
      } else if (key == "jitter") {
        std::string v;
        ls >> v;
        spec.jitter = parse_double_strict(v, "jitter");
      } else if (key == "variant") {
        std::string w;
        if (!(ls >> w)) throw std::runtime_error("variant line is missing its weight");
        LogVariant var;
        var.weight = parse_double_strict(w, "variant weight");
        std::string step;
        while (ls >> step) {
          const std::size_t colon = step.rfind(':');
          if (colon == std::string::npos || colon == 0 || colon + 1 == step.size())
            throw std::runtime_error("variant step \"" + step + "\" is not label:duration_days");
          var.steps.emplace_back(step.substr(0, colon),
                                 parse_double_strict(step.substr(colon + 1), "step duration"));
        }
        if (var.steps.empty()) throw std::runtime_error("variant line has no steps");
        spec.variants.push_back(std::move(var));
      } else {
        throw std::runtime_error("unknown key \"" + key + "\"");
      }
    } catch (const std::exception& e) {
      throw std::runtime_error("log spec line " + std::to_string(line_no) + ": " + e.what());
    }
  }

  if (!saw_traces) throw std::runtime_error("log spec: missing \"traces\"");
  if (!saw_start) throw std::runtime_error("log spec: missing \"start\"");
  if (spec.traces < 1) throw std::runtime_error("log spec: trace count must be at least 1");
  if (spec.trace_gap_days < 0.0) throw std::runtime_error("log spec: trace gap must be non-negative");
  if (spec.jitter < 0.0 || spec.jitter >= 1.0)
    throw std::runtime_error("log spec: jitter must lie in [0, 1)");
  if (spec.variants.empty()) throw std::runtime_error("log spec: at least one variant is required");
  for (const LogVariant& v : spec.variants) {
    if (!(v.weight > 0.0)) throw std::runtime_error("log spec: variant weights must be positive");
    for (const auto& [label, dur] : v.steps)
      if (dur < 0.0)
        throw std::runtime_error("log spec: step duration for \"" + label + "\" must be non-negative");
  }
  return spec;
}

LogSpec parse_log_spec_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open log spec: " + path);
  return parse_log_spec(in);
}

EventLog generate_log(const LogSpec& spec, Rng& rng) {
  std::vector<double> weights;
  weights.reserve(spec.variants.size());
  for (const LogVariant& v : spec.variants) weights.push_back(v.weight);

  EventLog log;
  log.traces.reserve(static_cast<std::size_t>(spec.traces));
  const double day = 86400.0;
  for (int i = 0; i < spec.traces; ++i) {
    const LogVariant& variant = spec.variants[static_cast<std::size_t>(rng.weighted_index(weights))];
    Trace t;
    t.case_id = "case_" + std::to_string(i);
    double ts = spec.start + static_cast<double>(i) * spec.trace_gap_days * day;
    for (std::size_t s = 0; s < variant.steps.size(); ++s) {
      if (s > 0) {
        // the listed duration is the gap in front of this step
        const double factor = 1.0 + spec.jitter * rng.uniform(-1.0, 1.0);
        ts += variant.steps[s].second * factor * day;
      }
      t.events.push_back(Event{variant.steps[s].first, ts, 0.0});
    }
    log.traces.push_back(std::move(t));
  }
  return log;
}

} // namespace seqpred
