#pragma once

#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

namespace latentadv {

// Activity labels of a prefix or trace, in order.
using ActivitySequence = std::vector<std::string>;

enum class TimeFormat {
  kTicks,    // integer ticks
  kIso8601,  // YYYY-MM-DD[T ]hh:mm[:ss[.fff]][Z|+hh:mm], stored as epoch milliseconds
};

struct Event {
  std::string case_id;
  std::string activity;
  std::int64_t timestamp = 0;
  int position = 0;  // 1-based within the trace

  bool operator==(const Event&) const = default;
};

struct Trace {
  std::string case_id;
  std::vector<Event> events;
  int label = 0;

  std::int64_t start_time() const { return events.empty() ? 0 : events.front().timestamp; }
  ActivitySequence activities() const;
  bool operator==(const Trace&) const = default;
};

struct EventLog {
  std::vector<Trace> traces;
  // Activity labels in first-occurrence order over the (sorted) traces.
  std::vector<std::string> vocabulary;
  TimeFormat time_format = TimeFormat::kTicks;
  // Free-form diagnostics (e.g. generator warnings). Not part of equality.
  std::vector<std::string> notes;

  double positive_class_ratio() const;
  std::size_t event_count() const;
  bool operator==(const EventLog& other) const {
    return traces == other.traces && vocabulary == other.vocabulary &&
           time_format == other.time_format;
  }
};

struct Prefix {
  std::string case_id;
  std::vector<Event> events;
  int label = 0;

  int length() const { return static_cast<int>(events.size()); }
  ActivitySequence activities() const;
  bool operator==(const Prefix&) const = default;
};

struct PrefixLog {
  std::vector<Prefix> prefixes;
  int min_length = 1;
  int max_length = 1;
};

// Column names of the tabular input and how labels map onto {0, 1}.
struct ColumnMapping {
  std::string case_column = "case";
  std::string activity_column = "activity";
  std::string timestamp_column = "timestamp";
  std::string label_column = "label";
  TimeFormat time_format = TimeFormat::kTicks;
  std::map<std::string, int> label_values = {{"0", 0}, {"1", 1}};
};

// Recomputes the vocabulary (first occurrence) and sorts events by timestamp
// (ties keep their current order), re-numbering positions. Traces are ordered
// by start time, ties by current order.
void normalize(EventLog& log);

EventLog parse_log(std::istream& source, const ColumnMapping& mapping);
// Canonical CSV writer: header (case, activity, timestamp, label), labels as 0/1.
void write_log(std::ostream& out, const EventLog& log);

std::int64_t parse_timestamp(const std::string& text, TimeFormat format);
std::string format_timestamp(std::int64_t value, TimeFormat format);

struct SplitLogs {
  EventLog train;
  EventLog test;
};

// Temporal split by trace start time. Training events later than the earliest
// test start are discarded.
SplitLogs temporal_split(const EventLog& log, double train_fraction);

PrefixLog extract_prefixes(const EventLog& log, int min_len, int max_len);

// Collapses repeated (sequence, label) pairs to their first occurrence. With
// remove_ambiguous, sequences observed under both labels are dropped entirely.
PrefixLog deduplicate(const PrefixLog& prefix_log, bool remove_ambiguous);

// Parameters of the synthetic log generator. Each class walks its own Markov
// chain over the activities.
struct SyntheticSpec {
  std::vector<std::string> activities;
  int trace_count = 0;
  int min_length = 1;
  int max_length = 1;
  double positive_ratio = 0.5;
  // Per class: start weights (|A|) and row-stochastic transition weights (|A| x |A|).
  std::vector<double> start_weights[2];
  std::vector<std::vector<double>> transitions[2];
  std::int64_t trace_gap = 10;  // ticks between trace starts
  std::int64_t event_gap = 1;   // ticks between events of a trace
};

// Five activities a, b, c, x, y. Class 0 emits x early and more often than y,
// class 1 the reverse.
SyntheticSpec class_pattern_spec(int trace_count);

EventLog generate_synthetic_log(const SyntheticSpec& spec, std::uint64_t seed);

}  // namespace latentadv
