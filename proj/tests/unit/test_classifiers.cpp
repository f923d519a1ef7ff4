#include <doctest.h>

#include <cmath>

#include "../oracles.hpp"
#include "fixture.hpp"
#include "latentadv/classifiers.hpp"
#include "latentadv/errors.hpp"
#include "latentadv/rng.hpp"

using namespace latentadv;

namespace {

struct Data {
  ActivityVocabulary vocab;
  PrefixLog train;
  PrefixLog test;
};

const Data& pattern_data() {
  static const Data d = [] {
    Data out;
    const auto split = temporal_split(generate_synthetic_log(class_pattern_spec(500), 7), 0.8);
    out.vocab = build_vocabulary(split.train);
    out.train = deduplicate(extract_prefixes(split.train, 1, 10), true);
    out.test = extract_prefixes(split.test, 1, 10);
    return out;
  }();
  return d;
}

}  // namespace

TEST_CASE("aggregate classifiers separate the class-pattern log") {
  const auto& d = pattern_data();
  const auto train = encode_dataset(d.train, d.vocab, InputMode::kAggregated, 10);
  const auto test = encode_dataset(d.test, d.vocab, InputMode::kAggregated, 10);
  ClassifierHyperparams hp;
  hp.forest.trees = 50;
  for (auto kind : {ClassifierKind::kLinear, ClassifierKind::kBaggedTrees, ClassifierKind::kBoostedTrees}) {
    CAPTURE(to_string(kind));
    const Classifier c = train_classifier(kind, train, d.vocab, 10, hp, 1);
    const auto p = c.predict_proba(test);
    CHECK(auc_score(p, test.labels) > 0.9);
    CHECK(auc_score(p, test.labels) == doctest::Approx(oracle::pairwise_auc(p, test.labels)));
  }
}

TEST_CASE("separable data is fit exactly") {
  const ActivityVocabulary v({"x", "y"});
  std::vector<ActivitySequence> seqs;
  std::vector<int> labels;
  for (int nx = 0; nx < 4; ++nx) {
    for (int ny = 0; ny < 4; ++ny) {
      if (nx == ny) continue;
      ActivitySequence s(static_cast<std::size_t>(nx), "x");
      s.insert(s.end(), static_cast<std::size_t>(ny), "y");
      seqs.push_back(s);
      labels.push_back(ny > nx ? 1 : 0);
    }
  }
  const auto data = encode_dataset(seqs, labels, v, InputMode::kAggregated, 8);
  ClassifierHyperparams hp;
  hp.linear.l2 = 1e-6;
  Classifier c = train_classifier(ClassifierKind::kLinear, data, v, 8, hp, 0);
  c.set_threshold(DecisionThreshold{});
  const auto preds = c.predict(data);
  for (std::size_t i = 0; i < preds.size(); ++i) CHECK(preds[i].label == labels[i]);
}

TEST_CASE("training preconditions") {
  const ActivityVocabulary v({"a", "b"});
  const auto one_class = encode_dataset({{"a"}, {"b"}}, {1, 1}, v, InputMode::kAggregated, 4);
  CHECK_THROWS_AS(train_classifier(ClassifierKind::kLinear, one_class, v, 4, {}, 0), TrainingError);
  const auto seq = encode_dataset({{"a"}, {"b"}}, {0, 1}, v, InputMode::kSequence, 4);
  CHECK_THROWS_AS(train_classifier(ClassifierKind::kLinear, seq, v, 4, {}, 0), TrainingError);
}

TEST_CASE("determinism, batch consistency and persistence") {
  const auto& d = pattern_data();
  const auto train = encode_dataset(d.train, d.vocab, InputMode::kAggregated, 10);
  const auto test = encode_dataset(d.test, d.vocab, InputMode::kAggregated, 10);
  ClassifierHyperparams hp;
  hp.forest.trees = 20;
  for (auto kind : {ClassifierKind::kBaggedTrees, ClassifierKind::kBoostedTrees, ClassifierKind::kLinear}) {
    CAPTURE(to_string(kind));
    const Classifier a = train_classifier(kind, train, d.vocab, 10, hp, 42);
    const Classifier b = train_classifier(kind, train, d.vocab, 10, hp, 42);
    const auto pa = a.predict_proba(test);
    CHECK(pa == b.predict_proba(test));
    for (std::size_t i = 0; i < 30; ++i) CHECK(a.predict_proba(d.test.prefixes[i].activities()) == pa[i]);
    const Classifier loaded = Classifier::from_json(a.to_json(), d.vocab);
    CHECK(loaded.predict_proba(test) == pa);
    CHECK_THROWS_AS(Classifier::from_json(a.to_json(), ActivityVocabulary({"q"})), ArtifactError);
  }
  const auto& w = small_world();
  const auto seq = encode_dataset(w.test, w.vocab, InputMode::kSequence, 8);
  const auto batch = w.recurrent.predict_proba(seq);
  for (std::size_t i = 0; i < 20; ++i) {
    CHECK(w.recurrent.predict_proba(w.test.prefixes[i].activities()) == doctest::Approx(batch[i]).epsilon(1e-12));
  }
  const Classifier loaded = Classifier::from_json(w.recurrent.to_json(), w.vocab);
  CHECK(loaded.predict_proba(seq) == batch);
  CHECK(loaded.tau() == w.recurrent.tau());
}

TEST_CASE("prediction shape mismatch") {
  const auto& w = small_world();
  const auto agg = encode_dataset(w.test, w.vocab, InputMode::kAggregated, 8);
  CHECK_THROWS_AS(w.recurrent.predict_proba(agg), PredictionError);
}

TEST_CASE("threshold selection") {
  SUBCASE("hand-built validation set") {
    const std::vector<double> p = {0.1, 0.35, 0.4, 0.6, 0.8, 0.9};
    const std::vector<int> y = {0, 1, 0, 1, 1, 1};
    const auto t = select_threshold(p, y);
    CHECK(t.tau == doctest::Approx(0.225));
    CHECK(oracle::f1_at(p, y, t.tau) == doctest::Approx(oracle::best_f1_scan(p, y)));
  }
  SUBCASE("separated") {
    CHECK(select_threshold({0.1, 0.9}, {0, 1}).tau == doctest::Approx(0.5));
  }
  SUBCASE("constant probabilities") {
    const auto t = select_threshold({0.5, 0.5, 0.5}, {0, 1, 1});
    CHECK(t.tau == 0.5);
    CHECK(!t.warning.empty());
  }
  SUBCASE("random sets reach the scanned optimum") {
    Rng rng(8);
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<double> p;
      std::vector<int> y;
      for (int i = 0; i < 12; ++i) {
        p.push_back(std::round(rng.uniform() * 1000.0) / 1000.0 + 0.0001);
        y.push_back(i % 3 == 0 ? 1 : static_cast<int>(rng.uniform_index(2)));
      }
      y[1] = 0;
      const auto t = select_threshold(p, y);
      CHECK(oracle::f1_at(p, y, t.tau) == doctest::Approx(oracle::best_f1_scan(p, y)));
    }
  }
  CHECK_THROWS_AS(select_threshold({0.2, 0.3}, {1, 1}), EvaluationError);
}

TEST_CASE("decision rule at the boundary") {
  Classifier c;
  c.set_threshold(DecisionThreshold{0.5, "f1", "test", ""});
  CHECK(c.label_for(0.7) == 1);
  CHECK(c.label_for(0.5) == 1);
  CHECK(c.label_for(0.49) == 0);
}

TEST_CASE("auc") {
  CHECK(auc_score({0.1, 0.2, 0.8, 0.9}, {0, 0, 1, 1}) == 1.0);
  CHECK(auc_score({0.9, 0.8, 0.2, 0.1}, {0, 0, 1, 1}) == 0.0);
  CHECK(auc_score({0.5, 0.5}, {0, 1}) == 0.5);
  CHECK_THROWS_AS(auc_score({0.1, 0.2}, {1, 1}), EvaluationError);

  Rng rng(77);
  std::vector<double> s;
  std::vector<int> y;
  for (int i = 0; i < 10000; ++i) {
    s.push_back(rng.uniform());
    y.push_back(i % 2);
  }
  CHECK(std::abs(auc_score(s, y) - 0.5) < 0.05);

  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> ss;
    std::vector<int> yy = {0, 1};
    for (int i = 0; i < 40; ++i) {
      ss.push_back(static_cast<double>(rng.uniform_index(10)));
      if (i >= 2) yy.push_back(static_cast<int>(rng.uniform_index(2)));
    }
    CHECK(auc_score(ss, yy) == doctest::Approx(oracle::pairwise_auc(ss, yy)));
  }
}

TEST_CASE("latent loss") {
  const auto& w = small_world();
  const Eigen::VectorXd z0 = w.manifold0.encode(w.class0.prefixes[3].activities()).mu;
  const auto a = loss_and_gradient_wrt_latent(w.recurrent, w.manifold0, z0, z0, 1, 0.0);
  const auto b = loss_and_gradient_wrt_latent(w.recurrent, w.manifold0, z0, z0, 1, 5.0);
  CHECK((a.gradient - b.gradient).norm() < 1e-12);
  CHECK(a.loss == doctest::Approx(b.loss));

  const auto& d = pattern_data();
  const auto train = encode_dataset(d.train, d.vocab, InputMode::kAggregated, 10);
  const Classifier lin = train_classifier(ClassifierKind::kLinear, train, d.vocab, 10, {}, 0);
  CHECK_THROWS_AS(loss_and_gradient_wrt_latent(lin, w.manifold0, z0, z0, 1, 0.1), UnsupportedOperation);
}

TEST_CASE("grid search picks the best validation auc") {
  const auto& d = pattern_data();
  const auto split = temporal_split(generate_synthetic_log(class_pattern_spec(500), 7), 0.8);
  const auto inner = temporal_split(split.train, 0.8);
  const auto fit = encode_dataset(deduplicate(extract_prefixes(inner.train, 1, 10), true), d.vocab,
                                  InputMode::kAggregated, 10);
  const auto val = encode_dataset(deduplicate(extract_prefixes(inner.test, 1, 10), true), d.vocab,
                                  InputMode::kAggregated, 10);
  const auto grid = default_grid(ClassifierKind::kBoostedTrees);
  const auto r = train_with_grid(ClassifierKind::kBoostedTrees, fit, val, d.vocab, 10, grid, 2);
  REQUIRE(r.validation_auc.size() == grid.size());
  for (double auc : r.validation_auc) CHECK(r.validation_auc[r.selected] >= auc);
  CHECK(evaluate_auc(r.classifier, val) == doctest::Approx(r.validation_auc[r.selected]));
}
