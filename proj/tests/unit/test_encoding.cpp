#include <doctest.h>

#include "latentadv/encoding.hpp"
#include "latentadv/errors.hpp"
#include "latentadv/rng.hpp"

using namespace latentadv;

namespace {

Eigen::MatrixXd rows_from_indices(const std::vector<int>& idx, int width) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(idx.size()), width);
  for (std::size_t t = 0; t < idx.size(); ++t) m(static_cast<Eigen::Index>(t), idx[t]) = 1.0;
  return m;
}

}  // namespace

TEST_CASE("vocabulary layout") {
  EventLog log;
  Trace t;
  t.case_id = "c";
  t.events = {{"c", "a", 0, 1}, {"c", "b", 1, 2}, {"c", "a", 2, 3}};
  log.traces = {t};
  normalize(log);
  const ActivityVocabulary v = build_vocabulary(log);
  CHECK(v.index_of("a") == 2);
  CHECK(v.index_of("b") == 3);
  CHECK(v.size() == 4);
  CHECK(build_vocabulary(log) == v);
  CHECK(build_vocabulary(EventLog{}).size() == 2);
  CHECK_THROWS_AS(v.index_of("zzz"), EncodingError);
}

TEST_CASE("aggregation encoding") {
  const ActivityVocabulary v({"a", "b", "c"});
  CHECK(aggregate_encode(ActivitySequence{"a", "b", "a"}, v).counts == std::vector<int>{2, 1, 0});
  CHECK(aggregate_encode(ActivitySequence{}, v).counts == std::vector<int>{0, 0, 0});
  CHECK_THROWS_AS(aggregate_encode(ActivitySequence{"q"}, v), EncodingError);
}

TEST_CASE("one-hot encoding") {
  const ActivityVocabulary v({"a", "b"});
  const SequenceMatrix m = onehot_encode(ActivitySequence{"a"}, v, 3);
  CHECK(m.rows.rows() == 4);
  CHECK(m.valid_length == 2);
  CHECK(m.rows == rows_from_indices({2, 1, 0, 0}, 4));
  CHECK(m.mask == std::vector<bool>{true, true, false, false});

  const SequenceMatrix full = onehot_encode(ActivitySequence{"a", "b", "a"}, v, 3);
  CHECK(full.rows == rows_from_indices({2, 3, 2, 1}, 4));
  CHECK_THROWS_AS(onehot_encode(ActivitySequence{"a", "a", "a", "a"}, v, 3), EncodingError);
}

TEST_CASE("decode rules") {
  const ActivityVocabulary v({"a", "b"});
  auto decode_idx = [&](std::vector<int> idx) { return decode_sequence(idx, v); };
  CHECK(decode_idx({2, 3, 1, 3}).activities == ActivitySequence{"a", "b"});
  CHECK(decode_idx({1, 2, 2}).activities.empty());
  const auto pad = decode_idx({2, 0, 3});
  CHECK(pad.activities == ActivitySequence{"a"});
  CHECK(pad.termination == Termination::kIrregularPad);
  const auto open = decode_idx({2, 3, 2, 3});
  CHECK(open.activities == ActivitySequence{"a", "b", "a"});
  CHECK(open.termination == Termination::kUnterminated);

  // Probabilistic rows: compare with a direct argmax loop.
  Eigen::MatrixXd probs(4, 4);
  probs << 0.1, 0.1, 0.7, 0.1,  //
      0.2, 0.1, 0.6, 0.1,       //
      0.0, 0.3, 0.2, 0.5,       //
      0.1, 0.6, 0.2, 0.1;
  std::vector<int> oracle;
  for (int r = 0; r < 4; ++r) {
    int best = 0;
    for (int c = 1; c < 4; ++c) {
      if (probs(r, c) > probs(r, best)) best = c;
    }
    oracle.push_back(best);
  }
  CHECK(decode_sequence(probs, v).activities == decode_idx(oracle).activities);
  CHECK(decode_sequence(probs, v).activities == ActivitySequence{"a", "a", "b"});

  Eigen::RowVectorXd tie(4);
  tie << 0.3, 0.3, 0.2, 0.2;
  CHECK(argmax_row(tie) == 0);
}

TEST_CASE("one-hot round trip over random prefixes") {
  const ActivityVocabulary v({"a", "b", "c", "x", "y"});
  Rng rng(11);
  for (int i = 0; i < 1000; ++i) {
    ActivitySequence s;
    const auto len = rng.uniform_index(11);
    for (std::size_t k = 0; k < len; ++k) s.push_back(v.activities()[rng.uniform_index(5)]);
    const auto d = decode_sequence(onehot_encode(s, v, 10).rows, v);
    CHECK(d.activities == s);
    CHECK(d.termination == Termination::kEos);
  }
}
