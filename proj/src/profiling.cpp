#include "latentadv/profiling.hpp"

#include <algorithm>
#include <cmath>

#include "latentadv/errors.hpp"

namespace latentadv {

std::string to_string(ClusterProfile profile) {
  switch (profile) {
    case ClusterProfile::kSubtle: return "Subtle";
    case ClusterProfile::kAggressive: return "Aggressive";
    case ClusterProfile::kSequencePerturbation: return "SequencePerturbation";
    case ClusterProfile::kDistributionShift: return "DistributionShift";
    case ClusterProfile::kOthers: return "Others";
  }
  return "Others";
}

ClusterProfile parse_profile(const std::string& name) {
  for (auto p : all_profiles()) {
    if (to_string(p) == name) return p;
  }
  throw ProfilingError("unknown profile '" + name + "'");
}

std::vector<ClusterProfile> all_profiles() {
  return {ClusterProfile::kAggressive, ClusterProfile::kSubtle, ClusterProfile::kSequencePerturbation,
          ClusterProfile::kDistributionShift, ClusterProfile::kOthers};
}

NormalizedAttackMetrics normalize_metrics(int dl_edit, double emd, int prefix_length, bool success) {
  if (prefix_length < 1) throw ProfilingError("prefix length must be positive");
  const double len = prefix_length;
  return {dl_edit / len, emd / len, success};
}

double quantile_inclusive(std::vector<double> values, double q) {
  if (values.empty()) throw ProfilingError("quantile of an empty population");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

QuartileThresholds compute_quartiles(const std::vector<NormalizedAttackMetrics>& population) {
  if (population.size() < 4) {
    throw ProfilingError("quartiles need at least 4 results, got " + std::to_string(population.size()));
  }
  std::vector<double> dl, em;
  for (const auto& m : population) {
    dl.push_back(m.dl_norm);
    em.push_back(m.emd_norm);
  }
  return {quantile_inclusive(dl, 0.25), quantile_inclusive(dl, 0.5), quantile_inclusive(dl, 0.75),
          quantile_inclusive(em, 0.25), quantile_inclusive(em, 0.5), quantile_inclusive(em, 0.75)};
}

ClusterProfile assign_profile(const NormalizedAttackMetrics& m, const QuartileThresholds& t) {
  if (m.dl_norm <= t.dl_q1 && m.emd_norm <= t.emd_q1) return ClusterProfile::kSubtle;
  if (m.dl_norm >= t.dl_q3 && m.emd_norm >= t.emd_q3) return ClusterProfile::kAggressive;
  if (m.dl_norm >= t.dl_q3 && m.emd_norm < t.emd_med) return ClusterProfile::kSequencePerturbation;
  if (m.emd_norm >= t.emd_q3 && m.dl_norm < t.dl_q3) return ClusterProfile::kDistributionShift;
  return ClusterProfile::kOthers;
}

std::vector<ClusterProfile> assign_profiles(const std::vector<NormalizedAttackMetrics>& population,
                                            QuartileThresholds* thresholds) {
  const QuartileThresholds t = compute_quartiles(population);
  if (thresholds != nullptr) *thresholds = t;
  std::vector<ClusterProfile> out;
  out.reserve(population.size());
  for (const auto& m : population) out.push_back(assign_profile(m, t));
  return out;
}

}  // namespace latentadv
