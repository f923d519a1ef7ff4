#include "latentadv/eventlog.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "latentadv/csv.hpp"
#include "latentadv/errors.hpp"
#include "latentadv/rng.hpp"

namespace latentadv {
namespace {

// Howard Hinnant's days_from_civil.
std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, std::int64_t& y, unsigned& m, unsigned& d) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  y = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = doy - (153 * mp + 2) / 5 + 1;
  m = mp < 10 ? mp + 3 : mp - 9;
  y += m <= 2;
}

bool read_digits(const std::string& s, std::size_t& pos, int count, int& out) {
  if (pos + count > s.size()) return false;
  int value = 0;
  for (int i = 0; i < count; ++i) {
    const char c = s[pos + i];
    if (c < '0' || c > '9') return false;
    value = value * 10 + (c - '0');
  }
  pos += count;
  out = value;
  return true;
}

bool parse_iso(const std::string& s, std::int64_t& out_ms) {
  std::size_t p = 0;
  int year, month, day, hour = 0, minute = 0, second = 0, millis = 0;
  if (!read_digits(s, p, 4, year) || p >= s.size() || s[p++] != '-') return false;
  if (!read_digits(s, p, 2, month) || p >= s.size() || s[p++] != '-') return false;
  if (!read_digits(s, p, 2, day)) return false;
  if (month < 1 || month > 12 || day < 1 || day > 31) return false;
  if (p < s.size() && (s[p] == 'T' || s[p] == ' ')) {
    ++p;
    if (!read_digits(s, p, 2, hour) || p >= s.size() || s[p++] != ':') return false;
    if (!read_digits(s, p, 2, minute)) return false;
    if (p < s.size() && s[p] == ':') {
      ++p;
      if (!read_digits(s, p, 2, second)) return false;
      if (p < s.size() && s[p] == '.') {
        ++p;
        int digits = 0;
        int frac = 0;
        while (p < s.size() && s[p] >= '0' && s[p] <= '9') {
          if (digits < 3) frac = frac * 10 + (s[p] - '0');
          ++digits;
          ++p;
        }
        if (digits == 0) return false;
        for (int i = digits; i < 3; ++i) frac *= 10;
        millis = frac;
      }
    }
  }
  if (hour > 23 || minute > 59 || second > 60) return false;
  std::int64_t offset_minutes = 0;
  if (p < s.size()) {
    if (s[p] == 'Z') {
      ++p;
    } else if (s[p] == '+' || s[p] == '-') {
      const int sign = s[p] == '-' ? -1 : 1;
      ++p;
      int oh, om = 0;
      if (!read_digits(s, p, 2, oh)) return false;
      if (p < s.size() && s[p] == ':') ++p;
      if (p < s.size() && !read_digits(s, p, 2, om)) return false;
      offset_minutes = sign * (oh * 60 + om);
    } else {
      return false;
    }
  }
  if (p != s.size()) return false;
  const std::int64_t days = days_from_civil(year, static_cast<unsigned>(month),
                                            static_cast<unsigned>(day));
  const std::int64_t seconds =
      days * 86400 + hour * 3600 + minute * 60 + second - offset_minutes * 60;
  out_ms = seconds * 1000 + millis;
  return true;
}

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t");
  return s.substr(first, last - first + 1);
}

}  // namespace

ActivitySequence Trace::activities() const {
  ActivitySequence out;
  out.reserve(events.size());
  for (const auto& e : events) out.push_back(e.activity);
  return out;
}

ActivitySequence Prefix::activities() const {
  ActivitySequence out;
  out.reserve(events.size());
  for (const auto& e : events) out.push_back(e.activity);
  return out;
}

double EventLog::positive_class_ratio() const {
  if (traces.empty()) return 0.0;
  const auto positives = std::count_if(traces.begin(), traces.end(),
                                       [](const Trace& t) { return t.label == 1; });
  return static_cast<double>(positives) / static_cast<double>(traces.size());
}

std::size_t EventLog::event_count() const {
  std::size_t n = 0;
  for (const auto& t : traces) n += t.events.size();
  return n;
}

std::int64_t parse_timestamp(const std::string& text, TimeFormat format) {
  const std::string s = trim(text);
  if (format == TimeFormat::kTicks) {
    if (s.empty()) throw IngestionError("empty timestamp");
    std::size_t used = 0;
    long long value = 0;
    try {
      value = std::stoll(s, &used);
    } catch (const std::exception&) {
      throw IngestionError("unparseable timestamp '" + text + "'");
    }
    if (used != s.size()) throw IngestionError("unparseable timestamp '" + text + "'");
    return value;
  }
  std::int64_t ms = 0;
  if (!parse_iso(s, ms)) throw IngestionError("unparseable timestamp '" + text + "'");
  return ms;
}

std::string format_timestamp(std::int64_t value, TimeFormat format) {
  if (format == TimeFormat::kTicks) return std::to_string(value);
  const std::int64_t total_seconds = floor_div(value, 1000);
  const std::int64_t millis = value - total_seconds * 1000;
  const std::int64_t days = floor_div(total_seconds, 86400);
  const std::int64_t rem = total_seconds - days * 86400;
  std::int64_t y;
  unsigned m, d;
  civil_from_days(days, y, m, d);
  char buf[64];
  if (millis != 0) {
    std::snprintf(buf, sizeof(buf), "%04lld-%02u-%02uT%02lld:%02lld:%02lld.%03lldZ",
                  static_cast<long long>(y), m, d, static_cast<long long>(rem / 3600),
                  static_cast<long long>((rem / 60) % 60), static_cast<long long>(rem % 60),
                  static_cast<long long>(millis));
  } else {
    std::snprintf(buf, sizeof(buf), "%04lld-%02u-%02uT%02lld:%02lld:%02lldZ",
                  static_cast<long long>(y), m, d, static_cast<long long>(rem / 3600),
                  static_cast<long long>((rem / 60) % 60), static_cast<long long>(rem % 60));
  }
  return buf;
}

void normalize(EventLog& log) {
  for (auto& trace : log.traces) {
    std::stable_sort(trace.events.begin(), trace.events.end(),
                     [](const Event& a, const Event& b) { return a.timestamp < b.timestamp; });
    for (std::size_t i = 0; i < trace.events.size(); ++i) {
      trace.events[i].position = static_cast<int>(i) + 1;
      trace.events[i].case_id = trace.case_id;
    }
  }
  std::stable_sort(log.traces.begin(), log.traces.end(), [](const Trace& a, const Trace& b) {
    return a.start_time() < b.start_time();
  });
  log.vocabulary.clear();
  std::unordered_set<std::string> seen;
  for (const auto& trace : log.traces) {
    for (const auto& e : trace.events) {
      if (seen.insert(e.activity).second) log.vocabulary.push_back(e.activity);
    }
  }
}

EventLog parse_log(std::istream& source, const ColumnMapping& mapping) {
  csv::Reader reader(source);
  csv::Row header;
  if (!reader.next(header)) throw IngestionError("empty input: missing header row");

  auto column = [&](const std::string& name) -> std::size_t {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (trim(header[i]) == name) return i;
    }
    throw IngestionError("missing column '" + name + "'");
  };
  const std::size_t case_col = column(mapping.case_column);
  const std::size_t act_col = column(mapping.activity_column);
  const std::size_t time_col = column(mapping.timestamp_column);
  const std::size_t label_col = column(mapping.label_column);
  const std::size_t needed = std::max({case_col, act_col, time_col, label_col}) + 1;

  EventLog log;
  log.time_format = mapping.time_format;
  std::unordered_map<std::string, std::size_t> trace_index;
  csv::Row row;
  while (reader.next(row)) {
    if (row.size() < needed) {
      throw IngestionError("row at line " + std::to_string(reader.line()) + " has " +
                           std::to_string(row.size()) + " fields, expected at least " +
                           std::to_string(needed));
    }
    const std::string& case_id = row[case_col];
    std::int64_t ts;
    try {
      ts = parse_timestamp(row[time_col], mapping.time_format);
    } catch (const IngestionError& e) {
      throw IngestionError(std::string(e.what()) + " at line " + std::to_string(reader.line()) +
                           " (case '" + case_id + "')");
    }
    const auto label_it = mapping.label_values.find(trim(row[label_col]));
    if (label_it == mapping.label_values.end()) {
      throw IngestionError("unmapped label '" + row[label_col] + "' at line " +
                           std::to_string(reader.line()) + " (case '" + case_id + "')");
    }
    auto [it, inserted] = trace_index.try_emplace(case_id, log.traces.size());
    if (inserted) {
      Trace t;
      t.case_id = case_id;
      t.label = label_it->second;
      log.traces.push_back(std::move(t));
    }
    Trace& trace = log.traces[it->second];
    if (trace.label != label_it->second) {
      throw IngestionError("case '" + case_id + "' has conflicting labels");
    }
    Event e;
    e.case_id = case_id;
    e.activity = row[act_col];
    e.timestamp = ts;
    trace.events.push_back(std::move(e));
  }
  normalize(log);
  return log;
}

void write_log(std::ostream& out, const EventLog& log) {
  csv::write_row(out, {"case", "activity", "timestamp", "label"});
  for (const auto& trace : log.traces) {
    for (const auto& e : trace.events) {
      csv::write_row(out, {trace.case_id, e.activity,
                           format_timestamp(e.timestamp, log.time_format),
                           std::to_string(trace.label)});
    }
  }
}

SplitLogs temporal_split(const EventLog& log, double train_fraction) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw SplitError("train fraction must lie in (0, 1)");
  }
  const std::size_t n = log.traces.size();
  if (n < 2) throw SplitError("need at least 2 traces to split, got " + std::to_string(n));
  for (const auto& t : log.traces) {
    if (t.events.empty()) throw SplitError("trace '" + t.case_id + "' has no start time");
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return log.traces[a].start_time() < log.traces[b].start_time();
  });
  const auto n_train = static_cast<std::size_t>(train_fraction * static_cast<double>(n));
  if (n_train == 0 || n_train == n) {
    throw SplitError("train fraction leaves an empty side (" + std::to_string(n_train) + " of " +
                     std::to_string(n) + " traces)");
  }

  SplitLogs out;
  out.train.time_format = out.test.time_format = log.time_format;
  for (std::size_t i = n_train; i < n; ++i) out.test.traces.push_back(log.traces[order[i]]);
  std::int64_t test_start = out.test.traces.front().start_time();
  for (const auto& t : out.test.traces) test_start = std::min(test_start, t.start_time());

  for (std::size_t i = 0; i < n_train; ++i) {
    Trace t = log.traces[order[i]];
    std::erase_if(t.events, [&](const Event& e) { return e.timestamp > test_start; });
    if (!t.events.empty()) out.train.traces.push_back(std::move(t));
  }
  normalize(out.train);
  normalize(out.test);
  return out;
}

PrefixLog extract_prefixes(const EventLog& log, int min_len, int max_len) {
  if (min_len < 1 || max_len < min_len) {
    throw std::invalid_argument("extract_prefixes: require 1 <= min_len <= max_len");
  }
  PrefixLog out;
  out.min_length = min_len;
  out.max_length = max_len;
  for (const auto& trace : log.traces) {
    const int n = static_cast<int>(trace.events.size());
    const int upper = std::min(n, max_len);
    for (int len = min_len; len <= upper; ++len) {
      Prefix p;
      p.case_id = trace.case_id;
      p.label = trace.label;
      p.events.assign(trace.events.begin(), trace.events.begin() + len);
      out.prefixes.push_back(std::move(p));
    }
  }
  return out;
}

PrefixLog deduplicate(const PrefixLog& prefix_log, bool remove_ambiguous) {
  std::map<ActivitySequence, int> label_mask;  // bit 0: label 0 seen, bit 1: label 1 seen
  for (const auto& p : prefix_log.prefixes) label_mask[p.activities()] |= 1 << p.label;

  PrefixLog out;
  out.min_length = prefix_log.min_length;
  out.max_length = prefix_log.max_length;
  std::set<std::pair<ActivitySequence, int>> kept;
  for (const auto& p : prefix_log.prefixes) {
    auto acts = p.activities();
    if (remove_ambiguous && label_mask[acts] == 3) continue;
    if (kept.emplace(std::move(acts), p.label).second) out.prefixes.push_back(p);
  }
  return out;
}

SyntheticSpec class_pattern_spec(int trace_count) {
  SyntheticSpec spec;
  spec.activities = {"a", "b", "c", "x", "y"};
  spec.trace_count = trace_count;
  spec.min_length = 4;
  spec.max_length = 10;
  spec.positive_ratio = 0.5;
  // Rows/columns follow spec.activities: a b c x y.
  spec.start_weights[0] = {1, 0, 0, 0, 0};
  spec.transitions[0] = {
      {0.0, 0.1, 0.1, 0.8, 0.0},  // a
      {0.0, 0.2, 0.4, 0.3, 0.1},  // b
      {0.0, 0.4, 0.2, 0.3, 0.1},  // c
      {0.0, 0.4, 0.4, 0.0, 0.2},  // x
      {0.0, 0.5, 0.5, 0.0, 0.0},  // y
  };
  spec.start_weights[1] = spec.start_weights[0];
  // Class 1 mirrors class 0 with the roles of x and y exchanged.
  const std::size_t swap_index[5] = {0, 1, 2, 4, 3};
  spec.transitions[1].assign(5, std::vector<double>(5, 0.0));
  for (std::size_t from = 0; from < 5; ++from) {
    for (std::size_t to = 0; to < 5; ++to) {
      spec.transitions[1][swap_index[from]][swap_index[to]] = spec.transitions[0][from][to];
    }
  }
  return spec;
}

EventLog generate_synthetic_log(const SyntheticSpec& spec, std::uint64_t seed) {
  const std::size_t n_act = spec.activities.size();
  if (n_act == 0) throw std::invalid_argument("synthetic spec: empty vocabulary");
  if (spec.min_length < 1 || spec.max_length < spec.min_length) {
    throw std::invalid_argument("synthetic spec: require 1 <= min_length <= max_length");
  }
  for (int c = 0; c < 2; ++c) {
    if (spec.start_weights[c].size() != n_act || spec.transitions[c].size() != n_act) {
      throw std::invalid_argument("synthetic spec: class tables must match vocabulary size");
    }
    for (const auto& row : spec.transitions[c]) {
      if (row.size() != n_act) {
        throw std::invalid_argument("synthetic spec: transition rows must match vocabulary size");
      }
    }
  }

  EventLog log;
  log.time_format = TimeFormat::kTicks;
  if (spec.transitions[0] == spec.transitions[1] &&
      spec.start_weights[0] == spec.start_weights[1]) {
    log.notes.push_back("warning: class tables are identical; labels carry no sequence signal");
  }

  Rng rng = Rng::derive(seed, "synthetic");
  for (int i = 0; i < spec.trace_count; ++i) {
    Trace trace;
    trace.case_id = "case_" + std::to_string(i);
    if (i == 0 && spec.trace_count >= 2) {
      trace.label = 0;
    } else if (i == 1) {
      trace.label = 1;
    } else {
      trace.label = rng.uniform() < spec.positive_ratio ? 1 : 0;
    }
    const int length =
        spec.min_length + static_cast<int>(rng.uniform_index(
                              static_cast<std::size_t>(spec.max_length - spec.min_length + 1)));
    const std::int64_t start = static_cast<std::int64_t>(i) * spec.trace_gap;
    std::size_t current = rng.categorical(spec.start_weights[trace.label]);
    for (int pos = 0; pos < length; ++pos) {
      if (pos > 0) {
        const auto& row = spec.transitions[trace.label][current];
        current = rng.categorical(row);
      }
      Event e;
      e.case_id = trace.case_id;
      e.activity = spec.activities[current];
      e.timestamp = start + pos * spec.event_gap;
      e.position = pos + 1;
      trace.events.push_back(std::move(e));
    }
    log.traces.push_back(std::move(trace));
  }
  normalize(log);
  return log;
}

}  // namespace latentadv
