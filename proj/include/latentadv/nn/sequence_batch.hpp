#pragma once

#include <vector>

#include "latentadv/encoding.hpp"
#include "latentadv/nn/tape.hpp"

namespace latentadv::nn {

// Time-major view of a batch of sequence matrices: steps[t] is B x V holding
// row t of every member, masks[t] is B x 1 with 1 on non-PAD rows.
struct SequenceBatch {
  std::vector<Matrix> steps;
  std::vector<Matrix> masks;

  std::size_t batch_size() const { return steps.empty() ? 0 : static_cast<std::size_t>(steps.front().rows()); }
  std::size_t length() const { return steps.size(); }
};

inline SequenceBatch make_batch(const std::vector<const SequenceMatrix*>& members) {
  SequenceBatch batch;
  if (members.empty()) return batch;
  const auto rows = members.front()->rows.rows();
  const auto cols = members.front()->rows.cols();
  const auto b = static_cast<Eigen::Index>(members.size());
  batch.steps.assign(static_cast<std::size_t>(rows), Matrix(b, cols));
  batch.masks.assign(static_cast<std::size_t>(rows), Matrix(b, 1));
  for (Eigen::Index i = 0; i < b; ++i) {
    const SequenceMatrix& m = *members[static_cast<std::size_t>(i)];
    for (Eigen::Index t = 0; t < rows; ++t) {
      batch.steps[static_cast<std::size_t>(t)].row(i) = m.rows.row(t);
      batch.masks[static_cast<std::size_t>(t)](i, 0) = m.mask[static_cast<std::size_t>(t)] ? 1.0 : 0.0;
    }
  }
  return batch;
}

}  // namespace latentadv::nn
