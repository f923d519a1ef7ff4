#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "latentadv/eventlog.hpp"

namespace latentadv {

// Maps activities to column indices of the one-hot encoding. Index 0 is PAD,
// index 1 is EOS, real activities start at 2 in first-occurrence order.
class ActivityVocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kEos = 1;
  static constexpr int kReserved = 2;

  ActivityVocabulary() = default;
  explicit ActivityVocabulary(std::vector<std::string> activities);

  const std::vector<std::string>& activities() const { return activities_; }
  // Number of real activities.
  int activity_count() const { return static_cast<int>(activities_.size()); }
  // Width of the one-hot encoding (activities plus PAD and EOS).
  int size() const { return activity_count() + kReserved; }
  bool contains(const std::string& activity) const { return index_.contains(activity); }
  // Throws EncodingError for unknown activities.
  int index_of(const std::string& activity) const;
  const std::string& activity_at(int index) const;
  // FNV-1a over the ordered activity list; stored in model artifacts.
  std::uint64_t hash() const;

  bool operator==(const ActivityVocabulary& other) const { return activities_ == other.activities_; }

 private:
  std::vector<std::string> activities_;
  std::unordered_map<std::string, int> index_;
};

struct AggregatedVector {
  std::vector<int> counts;  // one entry per real activity, vocabulary order

  bool operator==(const AggregatedVector&) const = default;
};

struct SequenceMatrix {
  Eigen::MatrixXd rows;     // (max_len + 1) x vocab.size(), one-hot
  int valid_length = 0;     // activities + 1 (the EOS row)
  std::vector<bool> mask;   // true on rows 0..valid_length-1
};

enum class Termination {
  kEos,          // stopped at the first EOS
  kIrregularPad, // stopped at a PAD that appeared before any EOS
  kUnterminated, // neither EOS nor PAD; truncated to max_len activities
};

struct DecodedSequence {
  ActivitySequence activities;
  Termination termination = Termination::kEos;
};

ActivityVocabulary build_vocabulary(const EventLog& log);

AggregatedVector aggregate_encode(const ActivitySequence& activities, const ActivityVocabulary& vocab);
AggregatedVector aggregate_encode(const Prefix& prefix, const ActivityVocabulary& vocab);

SequenceMatrix onehot_encode(const ActivitySequence& activities, const ActivityVocabulary& vocab,
                             int max_len);
SequenceMatrix onehot_encode(const Prefix& prefix, const ActivityVocabulary& vocab, int max_len);

// Row-wise argmax (ties to the lowest index), truncated at the first EOS. A
// PAD before any EOS also terminates. Without either, the sequence is cut to
// rows - 1 activities and flagged unterminated.
DecodedSequence decode_sequence(const Eigen::MatrixXd& rows, const ActivityVocabulary& vocab);
DecodedSequence decode_sequence(const std::vector<int>& indices, const ActivityVocabulary& vocab);

// Index of the largest entry of a row, lowest index on ties.
int argmax_row(const Eigen::Ref<const Eigen::RowVectorXd>& row);

}  // namespace latentadv
