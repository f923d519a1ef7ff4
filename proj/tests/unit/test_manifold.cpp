#include <doctest.h>

#include <cmath>
#include <set>

#include "fixture.hpp"
#include "latentadv/errors.hpp"
#include "latentadv/manifold.hpp"

using namespace latentadv;

TEST_CASE("reparameterization and kl by hand") {
  LatentPoint p{Eigen::Vector2d(0.5, -1.0), Eigen::Vector2d(2.0, 0.5)};
  const Eigen::VectorXd z = reparameterize(p, Eigen::Vector2d(1.0, -2.0));
  CHECK(z[0] == 2.5);
  CHECK(z[1] == -2.0);
  CHECK(reparameterize(p, Eigen::Vector2d::Zero()) == p.mu);
  CHECK(reparameterize(p, Eigen::Vector2d::Ones()) == p.mu + p.sigma);
  CHECK_THROWS(reparameterize(p, Eigen::Vector3d::Zero()));

  CHECK(gaussian_kl({Eigen::Vector2d(1, 0), Eigen::Vector2d(1, 1)}) == doctest::Approx(0.5));
  CHECK(gaussian_kl({Eigen::Vector2d(0, 0), Eigen::Vector2d(1, 1)}) == 0.0);
}

TEST_CASE("masked nll of a perfect reconstruction") {
  const ActivityVocabulary v({"a", "b"});
  const SequenceMatrix m = onehot_encode(ActivitySequence{"a", "b"}, v, 4);
  CHECK(masked_nll(m.rows, m) == 0.0);
  Eigen::MatrixXd half = m.rows * 0.5;
  half.col(0).array() += 0.5;
  CHECK(masked_nll(half, m) == doctest::Approx(3.0 * std::log(2.0)));
}

TEST_CASE("trained manifold behaviour") {
  const auto& w = small_world();
  const auto& m = w.manifold0;
  const auto& curve = m.training_curve();
  REQUIRE(curve.size() == 40);
  CHECK(curve.back().total < curve.front().total);
  for (const auto& e : curve) CHECK(e.kl >= 0.0);

  const auto seq = w.class0.prefixes[0].activities();
  const auto a = m.encode(seq);
  const auto b = m.encode(seq);
  CHECK(a.mu == b.mu);
  CHECK(a.mu.size() == m.latent_dim());
  CHECK((a.sigma.array() > 0.0).all());
  CHECK_THROWS_AS(m.encode({"nope"}), EncodingError);

  CHECK(m.decode(a.mu).activities == m.decode(a.mu).activities);
  const Eigen::MatrixXd probs = m.decode_probabilities(a.mu);
  CHECK(probs.rows() == m.max_len() + 1);
  CHECK(probs.cols() == w.vocab.size());
  for (Eigen::Index r = 0; r < probs.rows(); ++r) CHECK(probs.row(r).sum() == doctest::Approx(1.0));

  std::set<std::vector<double>> mus;
  std::set<ActivitySequence> seqs;
  for (const auto& p : w.class0.prefixes) {
    if (!seqs.insert(p.activities()).second) continue;
    const auto mu = m.encode(p.activities()).mu;
    mus.insert(std::vector<double>(mu.data(), mu.data() + mu.size()));
  }
  CHECK(mus.size() == seqs.size());

  double max_norm = 0.0;
  for (const auto& p : w.class0.prefixes) max_norm = std::max(max_norm, m.encode(p.activities()).mu.norm());
  const Eigen::VectorXd far = Eigen::VectorXd::Constant(m.latent_dim(), 10.0 * max_norm / std::sqrt(m.latent_dim()));
  const auto d = m.decode(far);
  CHECK(static_cast<int>(d.activities.size()) <= m.max_len());
  for (const auto& act : d.activities) CHECK(w.vocab.contains(act));

  const ClassManifold loaded = ClassManifold::from_json(m.to_json(), w.vocab);
  CHECK(loaded.encode(seq).mu == a.mu);
  CHECK(loaded.decode_probabilities(a.mu) == probs);
}

TEST_CASE("training is deterministic and reconstructs without kl") {
  const auto& w = small_world();
  PrefixLog subset = w.class0;
  subset.prefixes.resize(std::min<std::size_t>(subset.prefixes.size(), 120));
  VaeConfig vc;
  vc.max_len = 8;
  vc.epochs = 150;
  vc.kl_weight = 0.0;
  vc.seed = 9;
  const ClassManifold a = train_class_vae(subset, w.vocab, vc);
  const ClassManifold b = train_class_vae(subset, w.vocab, vc);
  REQUIRE(a.training_curve().size() == b.training_curve().size());
  for (std::size_t i = 0; i < a.training_curve().size(); ++i) {
    CHECK(a.training_curve()[i].total == b.training_curve()[i].total);
  }
  std::size_t correct = 0, total = 0;
  for (const auto& p : subset.prefixes) {
    const auto target = onehot_encode(p, w.vocab, 8);
    const auto probs = a.decode_probabilities(a.encode(p.activities()).mu);
    for (int t = 0; t < target.valid_length; ++t) {
      total += 1;
      correct += argmax_row(probs.row(t)) == argmax_row(target.rows.row(t)) ? 1 : 0;
    }
  }
  CHECK(static_cast<double>(correct) / static_cast<double>(total) >= 0.9);
}

TEST_CASE("training preconditions") {
  const auto& w = small_world();
  VaeConfig vc;
  vc.max_len = 8;
  CHECK_THROWS_AS(train_class_vae(PrefixLog{}, w.vocab, vc), TrainingError);
  PrefixLog mixed;
  mixed.prefixes = {w.train.prefixes[0], w.train.prefixes[0]};
  mixed.prefixes[1].label = 1 - mixed.prefixes[0].label;
  CHECK_THROWS_AS(train_class_vae(mixed, w.vocab, vc), TrainingError);
}
