#include "latentadv/encoding.hpp"

#include "latentadv/errors.hpp"
#include "latentadv/rng.hpp"

namespace latentadv {

ActivityVocabulary::ActivityVocabulary(std::vector<std::string> activities)
    : activities_(std::move(activities)) {
  for (std::size_t i = 0; i < activities_.size(); ++i) {
    if (!index_.emplace(activities_[i], static_cast<int>(i) + kReserved).second) {
      throw EncodingError("duplicate activity '" + activities_[i] + "' in vocabulary");
    }
  }
}

int ActivityVocabulary::index_of(const std::string& activity) const {
  const auto it = index_.find(activity);
  if (it == index_.end()) throw EncodingError("unknown activity '" + activity + "'");
  return it->second;
}

const std::string& ActivityVocabulary::activity_at(int index) const {
  if (index < kReserved || index >= size()) {
    throw EncodingError("index " + std::to_string(index) + " is not a real activity");
  }
  return activities_[static_cast<std::size_t>(index - kReserved)];
}

std::uint64_t ActivityVocabulary::hash() const {
  std::uint64_t h = fnv1a("vocab");
  for (const auto& a : activities_) {
    h = fnv1a(a, h);
    h = fnv1a(std::string_view("\x1f", 1), h);
  }
  return h;
}

ActivityVocabulary build_vocabulary(const EventLog& log) {
  std::vector<std::string> activities;
  std::unordered_map<std::string, bool> seen;
  for (const auto& trace : log.traces) {
    for (const auto& e : trace.events) {
      if (seen.emplace(e.activity, true).second) activities.push_back(e.activity);
    }
  }
  return ActivityVocabulary(std::move(activities));
}

AggregatedVector aggregate_encode(const ActivitySequence& activities,
                                  const ActivityVocabulary& vocab) {
  AggregatedVector out;
  out.counts.assign(static_cast<std::size_t>(vocab.activity_count()), 0);
  for (const auto& a : activities) {
    ++out.counts[static_cast<std::size_t>(vocab.index_of(a) - ActivityVocabulary::kReserved)];
  }
  return out;
}

AggregatedVector aggregate_encode(const Prefix& prefix, const ActivityVocabulary& vocab) {
  return aggregate_encode(prefix.activities(), vocab);
}

SequenceMatrix onehot_encode(const ActivitySequence& activities, const ActivityVocabulary& vocab,
                             int max_len) {
  const int len = static_cast<int>(activities.size());
  if (len > max_len) {
    throw EncodingError("prefix of length " + std::to_string(len) + " exceeds max_len " +
                        std::to_string(max_len));
  }
  SequenceMatrix m;
  m.rows = Eigen::MatrixXd::Zero(max_len + 1, vocab.size());
  m.valid_length = len + 1;
  m.mask.assign(static_cast<std::size_t>(max_len + 1), false);
  for (int t = 0; t < len; ++t) {
    m.rows(t, vocab.index_of(activities[static_cast<std::size_t>(t)])) = 1.0;
    m.mask[static_cast<std::size_t>(t)] = true;
  }
  m.rows(len, ActivityVocabulary::kEos) = 1.0;
  m.mask[static_cast<std::size_t>(len)] = true;
  for (int t = len + 1; t <= max_len; ++t) m.rows(t, ActivityVocabulary::kPad) = 1.0;
  return m;
}

SequenceMatrix onehot_encode(const Prefix& prefix, const ActivityVocabulary& vocab, int max_len) {
  return onehot_encode(prefix.activities(), vocab, max_len);
}

int argmax_row(const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  int best = 0;
  for (int j = 1; j < row.size(); ++j) {
    if (row(j) > row(best)) best = j;
  }
  return best;
}

DecodedSequence decode_sequence(const std::vector<int>& indices, const ActivityVocabulary& vocab) {
  DecodedSequence out;
  for (int idx : indices) {
    if (idx == ActivityVocabulary::kEos) {
      out.termination = Termination::kEos;
      return out;
    }
    if (idx == ActivityVocabulary::kPad) {
      out.termination = Termination::kIrregularPad;
      return out;
    }
    out.activities.push_back(vocab.activity_at(idx));
  }
  out.termination = Termination::kUnterminated;
  if (!out.activities.empty() && indices.size() > 1) {
    out.activities.resize(indices.size() - 1);
  }
  return out;
}

DecodedSequence decode_sequence(const Eigen::MatrixXd& rows, const ActivityVocabulary& vocab) {
  if (rows.cols() != vocab.size()) {
    throw EncodingError("decode: matrix has " + std::to_string(rows.cols()) +
                        " columns, vocabulary needs " + std::to_string(vocab.size()));
  }
  std::vector<int> indices(static_cast<std::size_t>(rows.rows()));
  for (Eigen::Index t = 0; t < rows.rows(); ++t) indices[static_cast<std::size_t>(t)] = argmax_row(rows.row(t));
  return decode_sequence(indices, vocab);
}

}  // namespace latentadv
