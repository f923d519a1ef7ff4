#include "latentadv/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "latentadv/errors.hpp"

namespace latentadv {

double success_rate(const std::vector<AdversarialResult>& results) {
  if (results.empty()) return 0.0;
  const auto flipped = std::count_if(results.begin(), results.end(), [](const auto& r) { return r.flipped; });
  return static_cast<double>(flipped) / static_cast<double>(results.size());
}

std::pair<double, double> l1_l2(const AggregatedVector& a, const AggregatedVector& b) {
  if (a.counts.size() != b.counts.size()) {
    throw MetricError("aggregated vectors have different lengths (" + std::to_string(a.counts.size()) + " vs " +
                      std::to_string(b.counts.size()) + ")");
  }
  double l1 = 0.0, sq = 0.0;
  for (std::size_t i = 0; i < a.counts.size(); ++i) {
    const double d = a.counts[i] - b.counts[i];
    l1 += std::abs(d);
    sq += d * d;
  }
  return {l1, std::sqrt(sq)};
}

double emd_counts(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size()) throw MetricError("histograms have different lengths");
  double total = 0.0;
  long running = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    running += a[k] - b[k];
    total += static_cast<double>(std::labs(running));
  }
  return total;
}

double emd(const ActivitySequence& a, const ActivitySequence& b, const ActivityVocabulary& vocab) {
  return emd_counts(aggregate_encode(a, vocab).counts, aggregate_encode(b, vocab).counts);
}

int dl_edit(const ActivitySequence& a, const ActivitySequence& b) {
  const int n = static_cast<int>(a.size());
  const int m = static_cast<int>(b.size());
  const int inf = n + m;
  // Lowrance-Wagner table with a sentinel row/column.
  std::vector<std::vector<int>> d(static_cast<std::size_t>(n + 2), std::vector<int>(static_cast<std::size_t>(m + 2)));
  auto at = [&](int i, int j) -> int& { return d[static_cast<std::size_t>(i + 1)][static_cast<std::size_t>(j + 1)]; };
  at(-1, -1) = inf;
  for (int i = 0; i <= n; ++i) {
    at(i, -1) = inf;
    at(i, 0) = i;
  }
  for (int j = 0; j <= m; ++j) {
    at(-1, j) = inf;
    at(0, j) = j;
  }
  std::map<std::string, int> last_row;
  for (int i = 1; i <= n; ++i) {
    int last_col = 0;
    for (int j = 1; j <= m; ++j) {
      auto it = last_row.find(b[static_cast<std::size_t>(j - 1)]);
      const int i1 = it == last_row.end() ? 0 : it->second;
      const int j1 = last_col;
      const int cost = a[static_cast<std::size_t>(i - 1)] == b[static_cast<std::size_t>(j - 1)] ? 0 : 1;
      if (cost == 0) last_col = j;
      at(i, j) = std::min({at(i - 1, j - 1) + cost, at(i, j - 1) + 1, at(i - 1, j) + 1,
                           at(i1 - 1, j1 - 1) + (i - i1 - 1) + 1 + (j - j1 - 1)});
    }
    last_row[a[static_cast<std::size_t>(i - 1)]] = i;
  }
  return at(n, m);
}

int lcp(const ActivitySequence& a, const ActivitySequence& b) {
  const auto limit = std::min(a.size(), b.size());
  std::size_t k = 0;
  while (k < limit && a[k] == b[k]) ++k;
  return static_cast<int>(k);
}

double latent_euclidean(const LatentPoint& a, const LatentPoint& b) {
  if (a.mu.size() != b.mu.size()) {
    throw MetricError("latent points have different dimensions (" + std::to_string(a.mu.size()) + " vs " +
                      std::to_string(b.mu.size()) + ")");
  }
  return (a.mu - b.mu).norm();
}

MetricPanel metric_panel(const ActivitySequence& original, const ActivitySequence& adversarial,
                         const ActivityVocabulary& vocab, double latent_distance) {
  MetricPanel p;
  p.latent_euclidean = latent_distance;
  const auto ca = aggregate_encode(original, vocab);
  const auto cb = aggregate_encode(adversarial, vocab);
  std::tie(p.l1, p.l2) = l1_l2(ca, cb);
  p.emd = emd_counts(ca.counts, cb.counts);
  p.dl_edit = dl_edit(original, adversarial);
  p.lcp = lcp(original, adversarial);
  return p;
}

}  // namespace latentadv
