#include <doctest.h>

#include <algorithm>
#include <set>
#include <sstream>

#include "latentadv/errors.hpp"
#include "latentadv/eventlog.hpp"

using namespace latentadv;

namespace {

const char* kLoanLog =
    "Case ID,Activity,Timestamp,Event Nr.,Resource,Loan Amount,Outcome\n"
    "A,Enter Loan Application,2024-03-01 23:00,1,R5,250000,Rejected\n"
    "A,Initial Review,2024-03-01 23:25,2,R2,250000,Rejected\n"
    "A,Document Verification,2024-03-01 23:35,3,R2,250000,Rejected\n"
    "A,Credit Check,2024-03-01 23:56,4,R2,250000,Rejected\n"
    "B,Enter Loan Application,2024-03-01 23:00,1,R1,390000,Accepted\n"
    "B,Initial Review,2024-03-01 23:10,2,R1,390000,Accepted\n";

ColumnMapping loan_mapping() {
  ColumnMapping m;
  m.case_column = "Case ID";
  m.activity_column = "Activity";
  m.timestamp_column = "Timestamp";
  m.label_column = "Outcome";
  m.time_format = TimeFormat::kIso8601;
  m.label_values = {{"Rejected", 0}, {"Accepted", 1}};
  return m;
}

EventLog parse(const std::string& text, const ColumnMapping& m = {}) {
  std::istringstream in(text);
  return parse_log(in, m);
}

Trace make_trace(const std::string& id, std::vector<std::string> acts, std::int64_t start, int label) {
  Trace t;
  t.case_id = id;
  t.label = label;
  for (std::size_t i = 0; i < acts.size(); ++i) {
    t.events.push_back(Event{id, acts[i], start + static_cast<std::int64_t>(i), static_cast<int>(i) + 1});
  }
  return t;
}

EventLog make_log(std::vector<Trace> traces) {
  EventLog log;
  log.traces = std::move(traces);
  normalize(log);
  return log;
}

Prefix make_prefix(std::vector<std::string> acts, int label, const std::string& id = "c") {
  Prefix p;
  p.case_id = id;
  p.label = label;
  for (std::size_t i = 0; i < acts.size(); ++i) p.events.push_back(Event{id, acts[i], 0, static_cast<int>(i) + 1});
  return p;
}

}  // namespace

TEST_CASE("loan example log parses into two labelled traces") {
  const EventLog log = parse(kLoanLog, loan_mapping());
  REQUIRE(log.traces.size() == 2);
  std::map<std::string, const Trace*> by_id;
  for (const auto& t : log.traces) by_id[t.case_id] = &t;
  CHECK(by_id.at("A")->events.size() == 4);
  CHECK(by_id.at("B")->events.size() == 2);
  CHECK(by_id.at("A")->label == 0);
  CHECK(by_id.at("B")->label == 1);
  CHECK(by_id.at("A")->events.front().activity == "Enter Loan Application");
  CHECK(by_id.at("A")->events.back().activity == "Credit Check");
  CHECK(log.vocabulary.size() == 4);
}

TEST_CASE("row order within a case does not matter") {
  const std::string shuffled =
      "Case ID,Activity,Timestamp,Event Nr.,Resource,Loan Amount,Outcome\n"
      "A,Credit Check,2024-03-01 23:56,4,R2,250000,Rejected\n"
      "B,Initial Review,2024-03-01 23:10,2,R1,390000,Accepted\n"
      "A,Initial Review,2024-03-01 23:25,2,R2,250000,Rejected\n"
      "A,Enter Loan Application,2024-03-01 23:00,1,R5,250000,Rejected\n"
      "B,Enter Loan Application,2024-03-01 23:00,1,R1,390000,Accepted\n"
      "A,Document Verification,2024-03-01 23:35,3,R2,250000,Rejected\n";
  // Oracle: sort the data rows by (case, timestamp) outside the parser.
  std::istringstream in(shuffled);
  std::string header, line;
  std::getline(in, header);
  std::vector<std::string> rows;
  while (std::getline(in, line)) rows.push_back(line);
  std::sort(rows.begin(), rows.end(), [](const std::string& a, const std::string& b) {
    auto key = [](const std::string& s) {
      std::vector<std::string> f;
      std::stringstream ss(s);
      std::string x;
      while (std::getline(ss, x, ',')) f.push_back(x);
      return f[0] + "|" + f[2];
    };
    return key(a) < key(b);
  });
  std::string sorted = header + "\n";
  for (const auto& r : rows) sorted += r + "\n";
  CHECK(parse(shuffled, loan_mapping()) == parse(sorted, loan_mapping()));
}

TEST_CASE("ingestion errors") {
  SUBCASE("missing column is named") {
    try {
      parse("case,activity,timestamp\n1,a,1\n");
      FAIL("expected an error");
    } catch (const IngestionError& e) {
      CHECK(std::string(e.what()).find("label") != std::string::npos);
    }
  }
  SUBCASE("bad timestamp names the case") {
    try {
      parse("case,activity,timestamp,label\nc9,a,notatime,0\n");
      FAIL("expected an error");
    } catch (const IngestionError& e) {
      CHECK(std::string(e.what()).find("c9") != std::string::npos);
    }
  }
  SUBCASE("conflicting labels") {
    CHECK_THROWS_AS(parse("case,activity,timestamp,label\nc,a,1,0\nc,b,2,1\n"), IngestionError);
  }
  SUBCASE("header only gives an empty log") {
    const EventLog log = parse("case,activity,timestamp,label\n");
    CHECK(log.traces.empty());
    CHECK(log.vocabulary.empty());
  }
}

TEST_CASE("canonical csv round trip") {
  const EventLog log = generate_synthetic_log(class_pattern_spec(30), 3);
  std::ostringstream out;
  write_log(out, log);
  CHECK(parse(out.str()) == log);
}

TEST_CASE("temporal split") {
  std::vector<Trace> traces;
  for (int i = 0; i < 10; ++i) traces.push_back(make_trace("t" + std::to_string(i), {"a", "b"}, i * 10, i % 2));
  const EventLog log = make_log(traces);
  const auto split = temporal_split(log, 0.8);
  CHECK(split.train.traces.size() == 8);
  CHECK(split.test.traces.size() == 2);
  std::set<std::string> ids;
  for (const auto& t : split.train.traces) ids.insert(t.case_id);
  for (const auto& t : split.test.traces) CHECK(!ids.contains(t.case_id));

  CHECK_THROWS_AS(temporal_split(log, 1.0), SplitError);
  CHECK_THROWS_AS(temporal_split(make_log({make_trace("only", {"a"}, 0, 0)}), 0.5), SplitError);
}

TEST_CASE("training events after the first test start are discarded") {
  // t1 starts first but runs past the start of t3, which lands in test.
  const EventLog log = make_log({make_trace("t1", {"a", "b", "c", "d", "e", "f"}, 0, 0),
                                 make_trace("t2", {"a", "b"}, 1, 1), make_trace("t3", {"a", "c"}, 3, 0)});
  const auto split = temporal_split(log, 2.0 / 3.0);
  REQUIRE(split.test.traces.size() == 1);
  CHECK(split.test.traces[0].case_id == "t3");
  std::size_t t1_events = 0;
  for (const auto& t : split.train.traces) {
    if (t.case_id == "t1") t1_events = t.events.size();
    for (const auto& e : t.events) CHECK(e.timestamp <= 3);
  }
  CHECK(t1_events == 4);
}

TEST_CASE("prefix extraction counts") {
  std::vector<std::string> acts(175, "a");
  CHECK(extract_prefixes(make_log({make_trace("long", acts, 0, 0)}), 1, 40).prefixes.size() == 40);
  const EventLog four = make_log({make_trace("f", {"a", "b", "c", "d"}, 0, 1)});
  const auto p = extract_prefixes(four, 1, 40);
  REQUIRE(p.prefixes.size() == 4);
  for (int l = 1; l <= 4; ++l) CHECK(p.prefixes[static_cast<std::size_t>(l - 1)].length() == l);
  CHECK(extract_prefixes(four, 5, 40).prefixes.empty());
}

TEST_CASE("deduplication") {
  PrefixLog log;
  SUBCASE("exact duplicates collapse") {
    log.prefixes = {make_prefix({"a", "b"}, 1, "x"), make_prefix({"a", "b"}, 1, "y")};
    const auto d = deduplicate(log, true);
    REQUIRE(d.prefixes.size() == 1);
    CHECK(d.prefixes[0].case_id == "x");
  }
  SUBCASE("ambiguous sequences are removed") {
    log.prefixes = {make_prefix({"a", "b"}, 1), make_prefix({"a", "b"}, 0), make_prefix({"c"}, 0)};
    const auto d = deduplicate(log, true);
    REQUIRE(d.prefixes.size() == 1);
    CHECK(d.prefixes[0].activities() == ActivitySequence{"c"});
    CHECK(deduplicate(log, false).prefixes.size() == 3);
  }
  SUBCASE("disjoint sequences are untouched") {
    log.prefixes = {make_prefix({"a"}, 0), make_prefix({"b"}, 1)};
    CHECK(deduplicate(log, true).prefixes == log.prefixes);
  }
}

TEST_CASE("synthetic generator") {
  std::ostringstream a, b;
  write_log(a, generate_synthetic_log(class_pattern_spec(50), 7));
  write_log(b, generate_synthetic_log(class_pattern_spec(50), 7));
  CHECK(a.str() == b.str());
  CHECK(generate_synthetic_log(class_pattern_spec(0), 7).traces.empty());

  SyntheticSpec flat = class_pattern_spec(10);
  flat.transitions[1] = flat.transitions[0];
  CHECK(!generate_synthetic_log(flat, 1).notes.empty());
  CHECK(generate_synthetic_log(class_pattern_spec(10), 1).notes.empty());
}
