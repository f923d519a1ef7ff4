#pragma once

#include <utility>
#include <vector>

#include "latentadv/attacks.hpp"
#include "latentadv/encoding.hpp"
#include "latentadv/manifold.hpp"

namespace latentadv {

struct MetricPanel {
  double latent_euclidean = 0.0;
  double l1 = 0.0;
  double l2 = 0.0;
  double emd = 0.0;
  int dl_edit = 0;
  int lcp = 0;
};

// Flipped rows over all rows; 0 for an empty collection.
double success_rate(const std::vector<AdversarialResult>& results);

// Minkowski L1 and L2 norms of a - b. Throws MetricError on a length mismatch.
std::pair<double, double> l1_l2(const AggregatedVector& a, const AggregatedVector& b);

// Earth mover's distance between the activity-count histograms, with ground
// distance |i - j| over vocabulary order: sum_k |cumsum(a - b)(k)|.
double emd(const ActivitySequence& a, const ActivitySequence& b, const ActivityVocabulary& vocab);
double emd_counts(const std::vector<int>& a, const std::vector<int>& b);

// Unrestricted Damerau-Levenshtein distance (insert, delete, substitute,
// adjacent transposition with later edits allowed in between).
int dl_edit(const ActivitySequence& a, const ActivitySequence& b);

int lcp(const ActivitySequence& a, const ActivitySequence& b);

// ||a.mu - b.mu||. Throws MetricError on a dimension mismatch.
double latent_euclidean(const LatentPoint& a, const LatentPoint& b);

// Input-space panel for one pair; latent_euclidean is passed through.
MetricPanel metric_panel(const ActivitySequence& original, const ActivitySequence& adversarial,
                         const ActivityVocabulary& vocab, double latent_distance);

}  // namespace latentadv
