#pragma once

#include <string>
#include <vector>

namespace latentadv {

enum class ClusterProfile { kSubtle, kAggressive, kSequencePerturbation, kDistributionShift, kOthers };

std::string to_string(ClusterProfile profile);
ClusterProfile parse_profile(const std::string& name);
std::vector<ClusterProfile> all_profiles();

struct NormalizedAttackMetrics {
  double dl_norm = 0.0;
  double emd_norm = 0.0;
  bool success = false;
};

// dl / length and emd / length. Throws ProfilingError for length < 1.
NormalizedAttackMetrics normalize_metrics(int dl_edit, double emd, int prefix_length, bool success);

struct QuartileThresholds {
  double dl_q1 = 0.0;
  double dl_med = 0.0;
  double dl_q3 = 0.0;
  double emd_q1 = 0.0;
  double emd_med = 0.0;
  double emd_q3 = 0.0;
};

// Linear interpolation between order statistics at position q * (n - 1).
double quantile_inclusive(std::vector<double> values, double q);

// Throws ProfilingError for fewer than 4 members.
QuartileThresholds compute_quartiles(const std::vector<NormalizedAttackMetrics>& population);

// Rules in order: Subtle, Aggressive, SequencePerturbation, DistributionShift,
// otherwise Others.
ClusterProfile assign_profile(const NormalizedAttackMetrics& m, const QuartileThresholds& t);

std::vector<ClusterProfile> assign_profiles(const std::vector<NormalizedAttackMetrics>& population,
                                            QuartileThresholds* thresholds = nullptr);

}  // namespace latentadv
