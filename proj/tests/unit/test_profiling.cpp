#include <doctest.h>

#include <algorithm>

#include "latentadv/errors.hpp"
#include "latentadv/profiling.hpp"
#include "latentadv/rng.hpp"

using namespace latentadv;

TEST_CASE("inclusive quartiles") {
  std::vector<NormalizedAttackMetrics> pop;
  for (double v : {1.0, 2.0, 3.0, 4.0}) pop.push_back({v, v, true});
  const auto t = compute_quartiles(pop);
  CHECK(t.dl_q1 == 1.75);
  CHECK(t.dl_med == 2.5);
  CHECK(t.dl_q3 == 3.25);
  CHECK(t.emd_q1 == 1.75);

  std::vector<NormalizedAttackMetrics> flat(6, {0.3, 0.3, false});
  const auto f = compute_quartiles(flat);
  CHECK(f.dl_q1 == f.dl_med);
  CHECK(f.dl_med == f.dl_q3);

  CHECK_THROWS_AS(compute_quartiles(std::vector<NormalizedAttackMetrics>(3)), ProfilingError);
}

TEST_CASE("quartiles do not decrease when a maximum is added") {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> v;
    for (int i = 0; i < 4 + trial; ++i) v.push_back(rng.uniform());
    auto w = v;
    w.push_back(*std::max_element(v.begin(), v.end()) + 1.0);
    for (double q : {0.25, 0.5, 0.75}) CHECK(quantile_inclusive(w, q) >= quantile_inclusive(v, q));
  }
}

TEST_CASE("normalization") {
  const auto m = normalize_metrics(2, 3.0, 4, true);
  CHECK(m.dl_norm == 0.5);
  CHECK(m.emd_norm == 0.75);
  CHECK_THROWS_AS(normalize_metrics(1, 1.0, 0, false), ProfilingError);
}

TEST_CASE("extreme points") {
  std::vector<NormalizedAttackMetrics> pop;
  for (int i = 0; i < 20; ++i) pop.push_back({0.05 * (i + 1), 0.05 * (i + 1), false});
  pop.push_back({0.0, 0.0, false});
  pop.push_back({2.0, 2.0, true});
  const auto p = assign_profiles(pop);
  CHECK(p[20] == ClusterProfile::kSubtle);
  CHECK(p[21] == ClusterProfile::kAggressive);
}

TEST_CASE("sequence perturbation point") {
  // dl spread 0.05..0.95, emd spread 0.05..0.95 on the other points.
  std::vector<NormalizedAttackMetrics> pop;
  for (int i = 0; i < 19; ++i) pop.push_back({0.05 * (i + 1), 0.05 * (19 - i), false});
  pop.push_back({0.0, 0.0, false});
  QuartileThresholds t;
  assign_profiles(pop, &t);
  NormalizedAttackMetrics probe{t.dl_q3, t.emd_med - 0.01, true};
  CHECK(assign_profile(probe, t) == ClusterProfile::kSequencePerturbation);
  NormalizedAttackMetrics shift{t.dl_q3 - 0.01, t.emd_q3, true};
  CHECK(assign_profile(shift, t) == ClusterProfile::kDistributionShift);
}

TEST_CASE("names round trip") {
  for (auto p : all_profiles()) CHECK(parse_profile(to_string(p)) == p);
  CHECK(all_profiles().size() == 5);
}
