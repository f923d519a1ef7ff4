#include <doctest.h>

#include <set>

#include "../oracles.hpp"
#include "fixture.hpp"
#include "latentadv/attacks.hpp"
#include "latentadv/errors.hpp"
#include "latentadv/metrics.hpp"

using namespace latentadv;

namespace {

EventLog two_trace_log() {
  EventLog log;
  Trace t1, t2;
  t1.case_id = "1";
  t1.events = {{"1", "a", 0, 1}, {"1", "b", 1, 2}};
  t2.case_id = "2";
  t2.label = 1;
  t2.events = {{"2", "a", 5, 1}, {"2", "c", 6, 2}};
  log.traces = {t1, t2};
  normalize(log);
  return log;
}

}  // namespace

TEST_CASE("position activity table") {
  const auto table = build_position_activity_table(two_trace_log());
  CHECK(table.pairs() == std::set<std::pair<int, std::string>>{{1, "a"}, {2, "b"}, {2, "c"}});
  CHECK(table.at(1) == std::vector<std::string>{"a"});
  CHECK(table.at(7).empty());

  // Oracle: brute-force scan over the events of a larger log.
  const auto& w = small_world();
  const auto big = build_position_activity_table(w.log);
  std::set<std::pair<int, std::string>> seen;
  for (const auto& t : w.log.traces) {
    for (const auto& e : t.events) seen.insert({e.position, e.activity});
  }
  CHECK(big.pairs() == seen);
}

TEST_CASE("last event permutation") {
  const ActivityVocabulary v({"a", "b", "c"});
  Rng rng(1);
  const auto c = permute_last_event({"a", "b"}, v, rng, 2);
  CHECK(c == Candidates{{"a", "a"}, {"a", "c"}});
  Rng rng2(1);
  const auto d = permute_last_event({"a", "b"}, v, rng2, 1);
  CHECK(d.size() == 1);
  Rng rng3(1);
  CHECK(permute_last_event({"a"}, ActivityVocabulary({"a"}), rng3, 4).empty());

  std::vector<std::string> acts(31, "a");
  const ActivityVocabulary big({"a", "b", "c", "d"});
  Rng rng4(2);
  for (const auto& cand : permute_last_event(acts, big, rng4, 10)) {
    CHECK(lcp(acts, cand) == 30);
    CHECK(dl_edit(acts, cand) == 1);
  }
}

TEST_CASE("all event permutation") {
  Rng rng(4);
  CHECK(permute_all_events({"a", "b"}, ActivityVocabulary({"a", "b"}), rng, 5) == Candidates{{"b", "a"}});
  const ActivityVocabulary v({"a", "b", "c", "d"});
  const ActivitySequence orig = {"a", "b", "c", "d", "a"};
  Rng r1(9), r2(9);
  const auto c1 = permute_all_events(orig, v, r1, 8);
  CHECK(c1 == permute_all_events(orig, v, r2, 8));
  std::set<ActivitySequence> uniq(c1.begin(), c1.end());
  CHECK(uniq.size() == c1.size());
  for (const auto& c : c1) {
    for (std::size_t i = 0; i < orig.size(); ++i) CHECK(c[i] != orig[i]);
    CHECK(lcp(orig, c) == 0);
  }
}

TEST_CASE("k event permutation respects the table") {
  PositionActivityTable table;
  table.add(1, "a");
  table.add(2, "b");
  table.add(2, "c");
  table.add(3, "c");
  Rng rng(2);
  const ActivitySequence orig = {"a", "b", "c"};
  const auto cands = permute_k_events(orig, 3, table, rng, 10);
  REQUIRE(!cands.empty());
  for (const auto& c : cands) {
    int changed = 0;
    for (std::size_t i = 0; i < orig.size(); ++i) {
      if (c[i] != orig[i]) {
        ++changed;
        CHECK(table.contains(static_cast<int>(i) + 1, c[i]));
      }
    }
    CHECK(changed == 1);
  }
  Rng rng2(2);
  CHECK(permute_k_events({"a"}, 3, table, rng2, 10).empty());
}

TEST_CASE("projection and latent sampling") {
  const auto& w = small_world();
  const auto& m = w.manifold0;
  const auto seq = w.class0.prefixes[5].activities();
  CHECK(project(m, seq) == project(m, seq));
  CHECK(project_all(m, {seq, seq}) == Candidates{project(m, seq), project(m, seq)});

  const auto point = m.encode(seq);
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(m.latent_dim());
  CHECK(reparameterize(point, zero) == point.mu);
  const auto projected = project(m, seq);
  const auto from_zero = latent_sampling_candidates(m, seq, {zero, zero});
  if (projected == seq) {
    CHECK(from_zero.empty());
  } else {
    CHECK(from_zero == Candidates{projected});
  }

  Rng r1(3), r2(3);
  const auto a = latent_sampling_attack(m, seq, 20, r1);
  CHECK(a == latent_sampling_attack(m, seq, 20, r2));
  std::set<ActivitySequence> uniq(a.begin(), a.end());
  CHECK(uniq.size() == a.size());
  for (const auto& c : a) {
    CHECK(c != seq);
    CHECK(static_cast<int>(c.size()) <= m.max_len());
    for (const auto& act : c) CHECK(w.vocab.contains(act));
  }
}

TEST_CASE("select closest") {
  const auto& w = small_world();
  Rng rng(12);
  for (int trial = 0; trial < 10; ++trial) {
    const auto& orig = w.class0.prefixes[rng.uniform_index(w.class0.prefixes.size())].activities();
    Candidates cands;
    for (int i = 0; i < 10; ++i) cands.push_back(w.train.prefixes[rng.uniform_index(w.train.prefixes.size())].activities());
    const auto sel = select_closest(orig, cands, w.manifold0);
    CHECK(sel.index == oracle::closest_index(orig, cands, w.manifold0));
    CHECK(sel.sequence == cands[sel.index]);
  }
  const ActivitySequence only = {"a", "x"};
  CHECK(select_closest(only, {only}, w.manifold0).distance == 0.0);
  CHECK(select_closest(only, {{"a"}, only}, w.manifold0).index == 1);
  CHECK_THROWS_AS(select_closest(only, {}, w.manifold0), SelectionError);
}

TEST_CASE("latent gradient descent on a toy boundary") {
  // Boundary z[0] = 1 with loss gradient pointing along -e0 toward it.
  const Eigen::VectorXd z0 = Eigen::Vector2d(0.0, 0.5);
  auto grad = [](const Eigen::VectorXd&) { return Eigen::VectorXd(Eigen::Vector2d(-1.0, 0.0)); };
  auto flipped = [](const Eigen::VectorXd& z) { return z[0] > 1.0; };
  const auto r = latent_gradient_descent(z0, grad, flipped, 100, 0.3);
  REQUIRE(r.has_value());
  CHECK(r->iterations == 4);
  CHECK(r->z[1] == 0.5);
  CHECK(!latent_gradient_descent(z0, grad, flipped, 100, 0.0).has_value());
}

TEST_CASE("generation gating and statuses") {
  const auto& w = small_world();
  const auto table = build_position_activity_table(w.train);
  AttackConfig cfg;
  cfg.seed = 4;
  GenerateOptions opts;
  opts.max_prefixes = 25;
  const auto rows = generate_adversarials(w.test.prefixes, w.recurrent, w.manifold0, w.manifold1, table, cfg, opts);
  CHECK(rows.size() <= 25);
  std::size_t correct = 0;
  for (const auto& p : w.test.prefixes) correct += w.recurrent.predict(p.activities()).label == p.label ? 1 : 0;
  CHECK(rows.size() <= correct);
  for (const auto& r : rows) {
    CHECK(w.recurrent.label_for(r.original_prob) == r.label);
    if (r.status == AttackStatus::kOk) {
      CHECK(r.flipped == (w.recurrent.label_for(r.adversarial_prob) != r.label));
      CHECK(dl_edit(r.original, r.adversarial) == 1);
    }
  }

  opts.threads = 3;
  const auto threaded = generate_adversarials(w.test.prefixes, w.recurrent, w.manifold0, w.manifold1, table, cfg, opts);
  REQUIRE(threaded.size() == rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) CHECK(threaded[i].adversarial == rows[i].adversarial);

  std::vector<Prefix> wrong;
  for (const auto& p : w.test.prefixes) {
    if (w.recurrent.predict(p.activities()).label != p.label) wrong.push_back(p);
  }
  CHECK(generate_adversarials(wrong, w.recurrent, w.manifold0, w.manifold1, table, cfg).empty());
}

TEST_CASE("attack names and validation") {
  const auto all = all_attack_methods();
  std::set<std::string> names;
  for (const auto& a : all) names.insert(a.name());
  CHECK(names == std::set<std::string>{"regular_last_event", "regular_all_event", "regular_3_event",
                                       "projected_last_event", "projected_all_event", "projected_3_event",
                                       "latent_sampling", "gradient_steps"});
  AttackConfig bad;
  bad.nr_adv = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}
