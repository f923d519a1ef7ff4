#include <doctest.h>

#include <cmath>

#include "../oracles.hpp"
#include "latentadv/errors.hpp"
#include "latentadv/metrics.hpp"
#include "latentadv/rng.hpp"

using namespace latentadv;

TEST_CASE("success rate") {
  std::vector<AdversarialResult> rows(10);
  CHECK(success_rate(rows) == 0.0);
  for (int i = 0; i < 5; ++i) rows[static_cast<std::size_t>(i)].flipped = true;
  CHECK(success_rate(rows) == 0.5);
  CHECK(success_rate({}) == 0.0);
}

TEST_CASE("aggregated norms") {
  const ActivityVocabulary v({"a", "b", "c"});
  const auto a = aggregate_encode(ActivitySequence{"a", "b", "c"}, v);
  const auto b = aggregate_encode(ActivitySequence{"a", "b", "a"}, v);
  const auto [l1, l2] = l1_l2(a, b);
  CHECK(l1 == 2.0);
  CHECK(std::abs(l2 - std::sqrt(2.0)) < 1e-12);
  CHECK(l1_l2(a, a) == std::pair<double, double>{0.0, 0.0});
  CHECK_THROWS_AS(l1_l2(a, AggregatedVector{{1, 2}}), MetricError);

  Rng rng(5);
  for (int i = 0; i < 100; ++i) {
    AggregatedVector x, y;
    for (int k = 0; k < 6; ++k) {
      x.counts.push_back(static_cast<int>(rng.uniform_index(5)));
      y.counts.push_back(static_cast<int>(rng.uniform_index(5)));
    }
    double s1 = 0, s2 = 0;
    for (int k = 0; k < 6; ++k) {
      const double d = x.counts[static_cast<std::size_t>(k)] - y.counts[static_cast<std::size_t>(k)];
      s1 += std::abs(d);
      s2 += d * d;
    }
    const auto [n1, n2] = l1_l2(x, y);
    CHECK(n1 == doctest::Approx(s1));
    CHECK(n2 == doctest::Approx(std::sqrt(s2)));
  }
}

TEST_CASE("emd") {
  const ActivityVocabulary v({"a", "b", "c"});
  CHECK(emd(ActivitySequence{"a", "b"}, ActivitySequence{"b", "a"}, v) == 0.0);
  CHECK(emd(ActivitySequence{"a"}, ActivitySequence{"b"}, v) == 1.0);
  CHECK(emd(ActivitySequence{"a"}, ActivitySequence{"c"}, v) == 2.0);

  Rng rng(9);
  for (int i = 0; i < 200; ++i) {
    const std::size_t bins = 1 + rng.uniform_index(6);
    std::vector<int> a(bins, 0), b(bins, 0);
    const auto ma = rng.uniform_index(7), mb = rng.uniform_index(7);
    for (std::size_t k = 0; k < ma; ++k) ++a[rng.uniform_index(bins)];
    for (std::size_t k = 0; k < mb; ++k) ++b[rng.uniform_index(bins)];
    CHECK(emd_counts(a, b) == oracle::transport_cost(a, b));
  }
}

TEST_CASE("damerau-levenshtein") {
  using S = ActivitySequence;
  CHECK(dl_edit(S{"a", "b", "c"}, S{"a", "c", "b"}) == 1);
  CHECK(dl_edit(S{"a", "b", "c"}, S{"a", "b", "x"}) == 1);
  CHECK(dl_edit(S{"a", "b"}, S{"a", "b"}) == 0);
  // Transposition followed by an insertion between the swapped symbols.
  CHECK(dl_edit(S{"c", "a"}, S{"a", "b", "c"}) == 2);
  CHECK(dl_edit(S{}, S{"a", "b"}) == 2);

  Rng rng(3);
  const auto strings = oracle::all_strings("abc", 4);
  for (int i = 0; i < 300; ++i) {
    const auto& s = strings[rng.uniform_index(strings.size())];
    const auto& t = strings[rng.uniform_index(strings.size())];
    CHECK(dl_edit(oracle::to_sequence(s), oracle::to_sequence(t)) ==
          dl_edit(oracle::to_sequence(t), oracle::to_sequence(s)));
  }
}

TEST_CASE("dl matches breadth-first edit search on a sample") {
  const oracle::EditGraph graph("abc", 6);
  const auto strings = oracle::all_strings("abc", 3);
  for (const std::string src : {"", "ab", "cab", "abc"}) {
    const auto dist = graph.distances_from(src);
    for (const auto& dst : strings) {
      CHECK(dl_edit(oracle::to_sequence(src), oracle::to_sequence(dst)) == dist[graph.code(dst)]);
    }
  }
}

TEST_CASE("longest common prefix") {
  using S = ActivitySequence;
  CHECK(lcp(S{"a", "b", "c"}, S{"a", "b", "c"}) == 3);
  CHECK(lcp(S{"a", "b"}, S{"b", "b"}) == 0);
  S orig(31, "a");
  S adv = orig;
  adv.back() = "b";
  CHECK(lcp(orig, adv) == 30);
  CHECK(dl_edit(orig, adv) == 1);
}

TEST_CASE("latent euclidean") {
  LatentPoint a{Eigen::Vector2d(0, 0), Eigen::Vector2d(1, 1)};
  LatentPoint b{Eigen::Vector2d(3, 4), Eigen::Vector2d(1, 1)};
  CHECK(latent_euclidean(a, b) == 5.0);
  CHECK(latent_euclidean(a, a) == 0.0);
  LatentPoint c{Eigen::Vector3d(0, 0, 0), Eigen::Vector3d(1, 1, 1)};
  CHECK_THROWS_AS(latent_euclidean(a, c), MetricError);
}
