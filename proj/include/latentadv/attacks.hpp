#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "latentadv/classifiers.hpp"
#include "latentadv/encoding.hpp"
#include "latentadv/eventlog.hpp"
#include "latentadv/manifold.hpp"
#include "latentadv/rng.hpp"

namespace latentadv {

enum class Strategy { kRegular, kProjected, kLatentSampled, kGradientBased };
enum class AttackType { kLastEvent, kAllEvent, kKEvent };

std::string to_string(Strategy strategy);
std::string to_string(AttackType type);
Strategy parse_strategy(const std::string& name);
AttackType parse_attack_type(const std::string& name);

struct AttackConfig {
  Strategy strategy = Strategy::kRegular;
  AttackType attack_type = AttackType::kLastEvent;  // regular and projected only
  int nr_adv = 16;
  int k_events = 3;
  int max_iters = 1500;
  double step_size = 0.2;
  double lambda_dist = 0.1;
  std::uint64_t seed = 0;

  // Stable identifier, e.g. regular_last_event, projected_3_event,
  // latent_sampling, gradient_steps.
  std::string name() const;
  // Throws ConfigError on out-of-range values.
  void validate() const;
};

// The eight methods with default settings.
std::vector<AttackConfig> all_attack_methods(std::uint64_t seed = 0);

// (1-based position, activity) pairs seen in training prefixes.
class PositionActivityTable {
 public:
  void add(int position, const std::string& activity);
  bool contains(int position, const std::string& activity) const { return pairs_.contains({position, activity}); }
  // Activities seen at a position in first-observation order.
  const std::vector<std::string>& at(int position) const;
  const std::set<std::pair<int, std::string>>& pairs() const { return pairs_; }
  std::size_t size() const { return pairs_.size(); }

 private:
  std::set<std::pair<int, std::string>> pairs_;
  std::map<int, std::vector<std::string>> by_position_;
  std::vector<std::string> empty_;
};

PositionActivityTable build_position_activity_table(const PrefixLog& train);
PositionActivityTable build_position_activity_table(const EventLog& train);

using Candidates = std::vector<ActivitySequence>;

// A1: replace the last activity. Every other vocabulary activity is used when
// nr_adv covers them all (vocabulary order), otherwise a random subset.
Candidates permute_last_event(const ActivitySequence& prefix, const ActivityVocabulary& vocab, Rng& rng,
                              int nr_adv);
// A2: nr_adv draws replacing every activity uniformly by a different one;
// duplicates dropped.
Candidates permute_all_events(const ActivitySequence& prefix, const ActivityVocabulary& vocab, Rng& rng,
                              int nr_adv);
// A3: per candidate, up to k admissible (position, activity) tuples from the
// table at distinct positions; duplicates dropped.
Candidates permute_k_events(const ActivitySequence& prefix, int k, const PositionActivityTable& table, Rng& rng,
                            int nr_adv);

// decode(encode(candidate).mu)
ActivitySequence project(const ClassManifold& manifold, const ActivitySequence& candidate);
Candidates project_all(const ClassManifold& manifold, const Candidates& candidates);

// Decodes mu + eps * sigma for each eps; drops results equal to the original
// and duplicates.
Candidates latent_sampling_candidates(const ClassManifold& manifold, const ActivitySequence& prefix,
                                      const std::vector<Eigen::VectorXd>& eps);
Candidates latent_sampling_attack(const ClassManifold& manifold, const ActivitySequence& prefix, int nr_adv,
                                  Rng& rng);

struct DescentResult {
  Eigen::VectorXd z;
  int iterations = 0;
};

// Plain gradient descent from z0; after every step `flipped` is asked about
// the new point. Returns the first flipping point, or nothing when max_iters
// steps pass without a flip.
std::optional<DescentResult> latent_gradient_descent(
    const Eigen::VectorXd& z0, const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& gradient,
    const std::function<bool(const Eigen::VectorXd&)>& flipped, int max_iters, double step_size);

struct GradientAttackResult {
  ActivitySequence adversarial;
  int iterations = 0;
};

// Moves z from encode(prefix).mu toward the other label. Throws
// UnsupportedOperation unless the classifier is recurrent.
std::optional<GradientAttackResult> gradient_steps_attack(const ClassManifold& manifold, const Classifier& classifier,
                                                          const ActivitySequence& prefix, int original_label,
                                                          int max_iters, double step_size, double lambda_dist);

struct Selection {
  std::size_t index = 0;
  ActivitySequence sequence;
  double distance = 0.0;
};

// Candidate whose posterior mean is closest to the original's; first on ties.
// Throws SelectionError on an empty set.
Selection select_closest(const ActivitySequence& original, const Candidates& candidates,
                         const ClassManifold& manifold);

enum class AttackStatus { kOk, kNoCandidates, kBudgetExhausted, kError };
std::string to_string(AttackStatus status);
AttackStatus parse_attack_status(const std::string& name);

struct AdversarialResult {
  std::string case_id;
  int prefix_length = 0;
  int label = 0;
  ActivitySequence original;
  ActivitySequence adversarial;
  std::string attack;
  Strategy strategy = Strategy::kRegular;
  AttackStatus status = AttackStatus::kOk;
  std::string message;
  double original_prob = 0.0;
  double adversarial_prob = 0.0;
  bool flipped = false;
  double latent_distance = 0.0;
  int candidate_count = 0;
};

struct GenerateOptions {
  // Per-prefix work is split over this many threads; results keep input order.
  int threads = 1;
  // 0 means no cap; otherwise only the first max_prefixes gated prefixes.
  std::size_t max_prefixes = 0;
};

// Attacks every correctly predicted prefix with one method, using the manifold
// of the prefix's true label. Failures are reported per row.
std::vector<AdversarialResult> generate_adversarials(const std::vector<Prefix>& prefixes, const Classifier& classifier,
                                                     const ClassManifold& manifold0, const ClassManifold& manifold1,
                                                     const PositionActivityTable& table, const AttackConfig& config,
                                                     const GenerateOptions& options = {});

}  // namespace latentadv
