#include "latentadv/attacks.hpp"

#include <algorithm>
#include <atomic>
#include <thread>

#include "latentadv/errors.hpp"

namespace latentadv {

std::string to_string(Strategy strategy) {
  switch (strategy) {
    case Strategy::kRegular: return "regular";
    case Strategy::kProjected: return "projected";
    case Strategy::kLatentSampled: return "latent_sampled";
    case Strategy::kGradientBased: return "gradient_based";
  }
  return "unknown";
}

std::string to_string(AttackType type) {
  switch (type) {
    case AttackType::kLastEvent: return "last_event";
    case AttackType::kAllEvent: return "all_event";
    case AttackType::kKEvent: return "k_event";
  }
  return "unknown";
}

Strategy parse_strategy(const std::string& name) {
  if (name == "regular") return Strategy::kRegular;
  if (name == "projected") return Strategy::kProjected;
  if (name == "latent_sampled" || name == "latent_sampling") return Strategy::kLatentSampled;
  if (name == "gradient_based" || name == "gradient_steps") return Strategy::kGradientBased;
  throw ConfigError("unknown attack strategy '" + name + "'");
}

AttackType parse_attack_type(const std::string& name) {
  if (name == "last_event") return AttackType::kLastEvent;
  if (name == "all_event") return AttackType::kAllEvent;
  if (name == "k_event") return AttackType::kKEvent;
  throw ConfigError("unknown attack type '" + name + "'");
}

std::string AttackConfig::name() const {
  switch (strategy) {
    case Strategy::kLatentSampled: return "latent_sampling";
    case Strategy::kGradientBased: return "gradient_steps";
    default: break;
  }
  const std::string type = attack_type == AttackType::kKEvent ? std::to_string(k_events) + "_event"
                                                               : to_string(attack_type);
  return to_string(strategy) + "_" + type;
}

void AttackConfig::validate() const {
  if (nr_adv < 1) throw ConfigError("nr_adv must be at least 1");
  if (k_events < 1) throw ConfigError("k_events must be at least 1");
  if (max_iters < 0) throw ConfigError("max_iters must be non-negative");
  if (step_size < 0.0) throw ConfigError("step_size must be non-negative");
  if (lambda_dist < 0.0) throw ConfigError("lambda_dist must be non-negative");
}

std::vector<AttackConfig> all_attack_methods(std::uint64_t seed) {
  std::vector<AttackConfig> out;
  for (Strategy s : {Strategy::kRegular, Strategy::kProjected}) {
    for (AttackType t : {AttackType::kLastEvent, AttackType::kAllEvent, AttackType::kKEvent}) {
      AttackConfig c;
      c.strategy = s;
      c.attack_type = t;
      c.seed = seed;
      out.push_back(c);
    }
  }
  for (Strategy s : {Strategy::kLatentSampled, Strategy::kGradientBased}) {
    AttackConfig c;
    c.strategy = s;
    c.seed = seed;
    out.push_back(c);
  }
  return out;
}

void PositionActivityTable::add(int position, const std::string& activity) {
  if (pairs_.emplace(position, activity).second) by_position_[position].push_back(activity);
}

const std::vector<std::string>& PositionActivityTable::at(int position) const {
  auto it = by_position_.find(position);
  return it == by_position_.end() ? empty_ : it->second;
}

PositionActivityTable build_position_activity_table(const PrefixLog& train) {
  PositionActivityTable table;
  for (const auto& p : train.prefixes) {
    for (std::size_t i = 0; i < p.events.size(); ++i) table.add(static_cast<int>(i) + 1, p.events[i].activity);
  }
  return table;
}

PositionActivityTable build_position_activity_table(const EventLog& train) {
  PositionActivityTable table;
  for (const auto& t : train.traces) {
    for (std::size_t i = 0; i < t.events.size(); ++i) table.add(static_cast<int>(i) + 1, t.events[i].activity);
  }
  return table;
}

namespace {

void push_unique(Candidates& out, ActivitySequence candidate) {
  if (std::find(out.begin(), out.end(), candidate) == out.end()) out.push_back(std::move(candidate));
}

}  // namespace

Candidates permute_last_event(const ActivitySequence& prefix, const ActivityVocabulary& vocab, Rng& rng,
                              int nr_adv) {
  if (prefix.empty()) throw std::invalid_argument("permute_last_event: empty prefix");
  std::vector<std::string> substitutes;
  for (const auto& a : vocab.activities()) {
    if (a != prefix.back()) substitutes.push_back(a);
  }
  if (static_cast<int>(substitutes.size()) > nr_adv) {
    rng.shuffle(substitutes);
    substitutes.resize(static_cast<std::size_t>(nr_adv));
  }
  Candidates out;
  for (const auto& a : substitutes) {
    ActivitySequence c = prefix;
    c.back() = a;
    out.push_back(std::move(c));
  }
  return out;
}

Candidates permute_all_events(const ActivitySequence& prefix, const ActivityVocabulary& vocab, Rng& rng,
                              int nr_adv) {
  if (prefix.empty()) throw std::invalid_argument("permute_all_events: empty prefix");
  const auto& acts = vocab.activities();
  if (acts.size() < 2) return {};
  Candidates out;
  for (int n = 0; n < nr_adv; ++n) {
    ActivitySequence c = prefix;
    for (auto& a : c) {
      // Uniform over the vocabulary without the current activity.
      const int current = vocab.index_of(a) - ActivityVocabulary::kReserved;
      auto pick = static_cast<int>(rng.uniform_index(acts.size() - 1));
      if (pick >= current) ++pick;
      a = acts[static_cast<std::size_t>(pick)];
    }
    push_unique(out, std::move(c));
  }
  return out;
}

Candidates permute_k_events(const ActivitySequence& prefix, int k, const PositionActivityTable& table, Rng& rng,
                            int nr_adv) {
  if (k < 1) throw std::invalid_argument("permute_k_events: k must be at least 1");
  std::vector<std::pair<int, std::string>> admissible;
  for (int pos = 1; pos <= static_cast<int>(prefix.size()); ++pos) {
    for (const auto& a : table.at(pos)) {
      if (a != prefix[static_cast<std::size_t>(pos - 1)]) admissible.emplace_back(pos, a);
    }
  }
  if (admissible.empty()) return {};
  Candidates out;
  for (int n = 0; n < nr_adv; ++n) {
    auto tuples = admissible;
    rng.shuffle(tuples);
    ActivitySequence c = prefix;
    std::set<int> modified;
    for (const auto& [pos, act] : tuples) {
      if (static_cast<int>(modified.size()) == k) break;
      if (!modified.insert(pos).second) continue;
      c[static_cast<std::size_t>(pos - 1)] = act;
    }
    push_unique(out, std::move(c));
  }
  return out;
}

ActivitySequence project(const ClassManifold& manifold, const ActivitySequence& candidate) {
  return manifold.decode(manifold.encode(candidate).mu).activities;
}

Candidates project_all(const ClassManifold& manifold, const Candidates& candidates) {
  if (candidates.empty()) return {};
  const auto points = manifold.encode_batch(candidates);
  Eigen::MatrixXd z(static_cast<Eigen::Index>(points.size()), manifold.latent_dim());
  for (std::size_t i = 0; i < points.size(); ++i) z.row(static_cast<Eigen::Index>(i)) = points[i].mu.transpose();
  Candidates out;
  for (auto& d : manifold.decode_batch(z)) out.push_back(std::move(d.activities));
  return out;
}

Candidates latent_sampling_candidates(const ClassManifold& manifold, const ActivitySequence& prefix,
                                      const std::vector<Eigen::VectorXd>& eps) {
  if (eps.empty()) return {};
  const LatentPoint point = manifold.encode(prefix);
  Eigen::MatrixXd z(static_cast<Eigen::Index>(eps.size()), manifold.latent_dim());
  for (std::size_t i = 0; i < eps.size(); ++i) {
    z.row(static_cast<Eigen::Index>(i)) = reparameterize(point, eps[i]).transpose();
  }
  Candidates out;
  for (auto& d : manifold.decode_batch(z)) {
    if (d.activities != prefix) push_unique(out, std::move(d.activities));
  }
  return out;
}

Candidates latent_sampling_attack(const ClassManifold& manifold, const ActivitySequence& prefix, int nr_adv,
                                  Rng& rng) {
  std::vector<Eigen::VectorXd> eps(static_cast<std::size_t>(nr_adv), Eigen::VectorXd(manifold.latent_dim()));
  for (auto& e : eps) {
    for (Eigen::Index j = 0; j < e.size(); ++j) e(j) = rng.normal();
  }
  return latent_sampling_candidates(manifold, prefix, eps);
}

std::optional<DescentResult> latent_gradient_descent(
    const Eigen::VectorXd& z0, const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& gradient,
    const std::function<bool(const Eigen::VectorXd&)>& flipped, int max_iters, double step_size) {
  Eigen::VectorXd z = z0;
  for (int it = 1; it <= max_iters; ++it) {
    z -= step_size * gradient(z);
    if (flipped(z)) return DescentResult{z, it};
  }
  return std::nullopt;
}

std::optional<GradientAttackResult> gradient_steps_attack(const ClassManifold& manifold, const Classifier& classifier,
                                                          const ActivitySequence& prefix, int original_label,
                                                          int max_iters, double step_size, double lambda_dist) {
  if (classifier.kind() != ClassifierKind::kRecurrent) {
    throw UnsupportedOperation("gradient steps need a recurrent classifier, got " + to_string(classifier.kind()));
  }
  const Eigen::VectorXd z0 = manifold.encode(prefix).mu;
  const int target = 1 - original_label;
  ActivitySequence last;
  auto grad = [&](const Eigen::VectorXd& z) {
    return loss_and_gradient_wrt_latent(classifier, manifold, z, z0, target, lambda_dist).gradient;
  };
  auto flipped = [&](const Eigen::VectorXd& z) {
    last = manifold.decode(z).activities;
    return classifier.predict(last).label != original_label;
  };
  const auto found = latent_gradient_descent(z0, grad, flipped, max_iters, step_size);
  if (!found) return std::nullopt;
  return GradientAttackResult{last, found->iterations};
}

Selection select_closest(const ActivitySequence& original, const Candidates& candidates,
                         const ClassManifold& manifold) {
  if (candidates.empty()) throw SelectionError("no candidates to select from");
  Candidates all;
  all.reserve(candidates.size() + 1);
  all.push_back(original);
  all.insert(all.end(), candidates.begin(), candidates.end());
  const auto points = manifold.encode_batch(all);
  Selection best;
  best.distance = -1.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const double d = (points[i + 1].mu - points[0].mu).norm();
    if (best.distance < 0.0 || d < best.distance) {
      best.index = i;
      best.distance = d;
    }
  }
  best.sequence = candidates[best.index];
  return best;
}

std::string to_string(AttackStatus status) {
  switch (status) {
    case AttackStatus::kOk: return "ok";
    case AttackStatus::kNoCandidates: return "no_candidates";
    case AttackStatus::kBudgetExhausted: return "budget_exhausted";
    case AttackStatus::kError: return "error";
  }
  return "unknown";
}

AttackStatus parse_attack_status(const std::string& name) {
  if (name == "ok") return AttackStatus::kOk;
  if (name == "no_candidates") return AttackStatus::kNoCandidates;
  if (name == "budget_exhausted") return AttackStatus::kBudgetExhausted;
  if (name == "error") return AttackStatus::kError;
  throw ArtifactError("unknown attack status '" + name + "'");
}

namespace {

void attack_one(AdversarialResult& row, const Classifier& classifier, const ClassManifold& manifold,
                const ActivityVocabulary& vocab, const PositionActivityTable& table, const AttackConfig& config) {
  Rng rng = Rng::derive(config.seed, "attack", row.case_id,
                        {static_cast<std::uint64_t>(row.prefix_length), fnv1a(row.attack)});
  Candidates candidates;
  switch (config.strategy) {
    case Strategy::kRegular:
    case Strategy::kProjected:
      switch (config.attack_type) {
        case AttackType::kLastEvent: candidates = permute_last_event(row.original, vocab, rng, config.nr_adv); break;
        case AttackType::kAllEvent: candidates = permute_all_events(row.original, vocab, rng, config.nr_adv); break;
        case AttackType::kKEvent:
          candidates = permute_k_events(row.original, config.k_events, table, rng, config.nr_adv);
          break;
      }
      if (config.strategy == Strategy::kProjected) {
        Candidates projected;
        for (auto& c : project_all(manifold, candidates)) {
          if (c != row.original && std::find(projected.begin(), projected.end(), c) == projected.end()) {
            projected.push_back(std::move(c));
          }
        }
        candidates = std::move(projected);
      }
      break;
    case Strategy::kLatentSampled:
      candidates = latent_sampling_attack(manifold, row.original, config.nr_adv, rng);
      break;
    case Strategy::kGradientBased: {
      const auto found = gradient_steps_attack(manifold, classifier, row.original, row.label, config.max_iters,
                                               config.step_size, config.lambda_dist);
      if (!found) {
        row.status = AttackStatus::kBudgetExhausted;
        row.message = "no flip within " + std::to_string(config.max_iters) + " iterations";
        return;
      }
      candidates = {found->adversarial};
      break;
    }
  }
  row.candidate_count = static_cast<int>(candidates.size());
  if (candidates.empty()) {
    row.status = AttackStatus::kNoCandidates;
    row.message = "no attack produced";
    return;
  }
  const Selection sel = select_closest(row.original, candidates, manifold);
  row.adversarial = sel.sequence;
  row.latent_distance = sel.distance;
  row.adversarial_prob = classifier.predict_proba(row.adversarial);
  row.flipped = classifier.label_for(row.adversarial_prob) != classifier.label_for(row.original_prob);
  row.status = AttackStatus::kOk;
}

}  // namespace

std::vector<AdversarialResult> generate_adversarials(const std::vector<Prefix>& prefixes, const Classifier& classifier,
                                                     const ClassManifold& manifold0, const ClassManifold& manifold1,
                                                     const PositionActivityTable& table, const AttackConfig& config,
                                                     const GenerateOptions& options) {
  config.validate();
  const ActivityVocabulary& vocab = classifier.vocabulary();
  if (!(manifold0.vocabulary() == vocab) || !(manifold1.vocabulary() == vocab)) {
    throw std::invalid_argument("classifier and manifolds must share the vocabulary");
  }
  if (manifold0.class_label() != 0 || manifold1.class_label() != 1) {
    throw std::invalid_argument("manifolds must be passed in class order 0, 1");
  }
  if (config.strategy == Strategy::kGradientBased && classifier.kind() != ClassifierKind::kRecurrent) {
    throw UnsupportedOperation("gradient steps need a recurrent classifier, got " + to_string(classifier.kind()));
  }

  std::vector<ActivitySequence> originals;
  for (const auto& p : prefixes) originals.push_back(p.activities());
  const auto probs = classifier.predict_proba(originals);

  std::vector<AdversarialResult> rows;
  for (std::size_t i = 0; i < prefixes.size(); ++i) {
    if (classifier.label_for(probs[i]) != prefixes[i].label) continue;
    if (options.max_prefixes > 0 && rows.size() >= options.max_prefixes) break;
    AdversarialResult row;
    row.case_id = prefixes[i].case_id;
    row.prefix_length = static_cast<int>(prefixes[i].length());
    row.label = prefixes[i].label;
    row.original = originals[i];
    row.attack = config.name();
    row.strategy = config.strategy;
    row.original_prob = probs[i];
    rows.push_back(std::move(row));
  }

  auto work = [&](AdversarialResult& row) {
    const ClassManifold& manifold = row.label == 1 ? manifold1 : manifold0;
    try {
      attack_one(row, classifier, manifold, vocab, table, config);
    } catch (const std::exception& e) {
      row.status = AttackStatus::kError;
      row.message = e.what();
      row.adversarial.clear();
      row.flipped = false;
    }
  };

  const int threads = std::max(1, std::min<int>(options.threads, static_cast<int>(rows.size())));
  if (threads <= 1) {
    for (auto& row : rows) work(row);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < rows.size(); i = next++) work(rows[i]);
      });
    }
    for (auto& th : pool) th.join();
  }
  return rows;
}

}  // namespace latentadv
