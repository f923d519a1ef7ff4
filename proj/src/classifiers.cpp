#include "latentadv/classifiers.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include <json.hpp>

#include "latentadv/errors.hpp"
#include "latentadv/nn/sequence_batch.hpp"
#include "latentadv/nn/serialize.hpp"
#include "latentadv/rng.hpp"

namespace latentadv {

using nlohmann::json;
using nn::Matrix;
using nn::Tape;
using nn::Var;

std::string to_string(ClassifierKind kind) {
  switch (kind) {
    case ClassifierKind::kLinear: return "linear";
    case ClassifierKind::kBaggedTrees: return "bagged_trees";
    case ClassifierKind::kBoostedTrees: return "boosted_trees";
    case ClassifierKind::kRecurrent: return "recurrent";
  }
  return "unknown";
}

std::string to_string(InputMode mode) { return mode == InputMode::kAggregated ? "aggregated" : "sequence"; }

ClassifierKind parse_classifier_kind(const std::string& name) {
  if (name == "linear" || name == "lr") return ClassifierKind::kLinear;
  if (name == "bagged_trees" || name == "forest" || name == "rf") return ClassifierKind::kBaggedTrees;
  if (name == "boosted_trees" || name == "boosted" || name == "xgb") return ClassifierKind::kBoostedTrees;
  if (name == "recurrent" || name == "lstm") return ClassifierKind::kRecurrent;
  throw ConfigError("unknown classifier kind '" + name + "'");
}

InputMode input_mode_for(ClassifierKind kind) {
  return kind == ClassifierKind::kRecurrent ? InputMode::kSequence : InputMode::kAggregated;
}

EncodedDataset encode_dataset(const std::vector<ActivitySequence>& sequences, const std::vector<int>& labels,
                              const ActivityVocabulary& vocab, InputMode mode, int max_len) {
  if (sequences.size() != labels.size()) throw std::invalid_argument("encode_dataset: size mismatch");
  EncodedDataset out;
  out.mode = mode;
  out.labels = labels;
  if (mode == InputMode::kAggregated) {
    out.features = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(sequences.size()), vocab.activity_count());
    for (std::size_t i = 0; i < sequences.size(); ++i) {
      const auto counts = aggregate_encode(sequences[i], vocab).counts;
      for (std::size_t j = 0; j < counts.size(); ++j) {
        out.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = counts[j];
      }
    }
  } else {
    out.sequences.reserve(sequences.size());
    for (const auto& s : sequences) out.sequences.push_back(onehot_encode(s, vocab, max_len));
  }
  return out;
}

EncodedDataset encode_dataset(const PrefixLog& prefixes, const ActivityVocabulary& vocab, InputMode mode,
                              int max_len) {
  std::vector<ActivitySequence> seqs;
  std::vector<int> labels;
  for (const auto& p : prefixes.prefixes) {
    seqs.push_back(p.activities());
    labels.push_back(p.label);
  }
  return encode_dataset(seqs, labels, vocab, mode, max_len);
}

std::vector<ClassifierHyperparams> default_grid(ClassifierKind kind, const ClassifierHyperparams& base) {
  std::vector<ClassifierHyperparams> grid;
  switch (kind) {
    case ClassifierKind::kLinear:
      for (double l2 : {1e-3, 1e-1, 1.0}) {
        auto hp = base;
        hp.linear.l2 = l2;
        grid.push_back(hp);
      }
      break;
    case ClassifierKind::kBaggedTrees:
      for (int depth : {6, 12}) {
        auto hp = base;
        hp.forest.max_depth = depth;
        grid.push_back(hp);
      }
      break;
    case ClassifierKind::kBoostedTrees:
      for (int depth : {2, 4}) {
        auto hp = base;
        hp.boost.max_depth = depth;
        grid.push_back(hp);
      }
      break;
    case ClassifierKind::kRecurrent:
      for (double lr : {1e-2, 3e-3}) {
        auto hp = base;
        hp.recurrent.learning_rate = lr;
        grid.push_back(hp);
      }
      break;
  }
  return grid;
}

namespace detail {

class Model {
 public:
  virtual ~Model() = default;
  virtual std::vector<double> predict(const EncodedDataset& data) const = 0;
  virtual json to_json() const = 0;
};

namespace {

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// ---------------------------------------------------------------- linear

class LinearModel final : public Model {
 public:
  Eigen::VectorXd weights;
  double bias = 0.0;

  std::vector<double> predict(const EncodedDataset& data) const override {
    const Eigen::VectorXd s = (data.features * weights).array() + bias;
    std::vector<double> out(static_cast<std::size_t>(s.size()));
    for (Eigen::Index i = 0; i < s.size(); ++i) out[static_cast<std::size_t>(i)] = sigmoid(s(i));
    return out;
  }
  json to_json() const override {
    return {{"weights", std::vector<double>(weights.data(), weights.data() + weights.size())}, {"bias", bias}};
  }
  static std::shared_ptr<LinearModel> from_json(const json& j, int features) {
    auto m = std::make_shared<LinearModel>();
    const auto w = j.at("weights").get<std::vector<double>>();
    if (static_cast<int>(w.size()) != features) throw ArtifactError("linear weights have the wrong length");
    m->weights = Eigen::Map<const Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()));
    m->bias = j.at("bias").get<double>();
    return m;
  }
};

// Newton iterations on the L2-penalized log-likelihood (bias unpenalized).
std::shared_ptr<LinearModel> fit_linear(const EncodedDataset& data, const LinearParams& params) {
  const Eigen::Index n = data.features.rows();
  const Eigen::Index p = data.features.cols();
  Eigen::MatrixXd x(n, p + 1);
  x.leftCols(p) = data.features;
  x.col(p).setOnes();
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) y(i) = data.labels[static_cast<std::size_t>(i)];
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p + 1);
  Eigen::VectorXd penalty = Eigen::VectorXd::Constant(p + 1, params.l2);
  penalty(p) = 1e-9;

  for (int iter = 0; iter < params.max_iter; ++iter) {
    const Eigen::VectorXd s = x * beta;
    Eigen::VectorXd prob(n), w(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      prob(i) = sigmoid(s(i));
      w(i) = std::max(prob(i) * (1.0 - prob(i)), 1e-12);
    }
    const Eigen::VectorXd grad = x.transpose() * (prob - y) + penalty.cwiseProduct(beta);
    Eigen::MatrixXd hess = x.transpose() * w.asDiagonal() * x;
    hess.diagonal() += penalty;
    const Eigen::VectorXd step = hess.ldlt().solve(grad);
    if (!step.allFinite()) throw TrainingError("linear classifier diverged at iteration " + std::to_string(iter + 1));
    beta -= step;
    if (step.cwiseAbs().maxCoeff() < 1e-9) break;
  }
  auto m = std::make_shared<LinearModel>();
  m->weights = beta.head(p);
  m->bias = beta(p);
  return m;
}

// ---------------------------------------------------------------- trees

struct TreeNode {
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;
};
using Tree = std::vector<TreeNode>;

double tree_eval(const Tree& tree, const Eigen::MatrixXd& x, Eigen::Index row) {
  int k = 0;
  while (tree[static_cast<std::size_t>(k)].feature >= 0) {
    const auto& n = tree[static_cast<std::size_t>(k)];
    k = x(row, n.feature) <= n.threshold ? n.left : n.right;
  }
  return tree[static_cast<std::size_t>(k)].value;
}

json tree_to_json(const Tree& tree) {
  json out = json::array();
  for (const auto& n : tree) out.push_back({n.feature, n.threshold, n.left, n.right, n.value});
  return out;
}

Tree tree_from_json(const json& j, int features) {
  Tree tree;
  for (const auto& e : j) {
    TreeNode n{e.at(0).get<int>(), e.at(1).get<double>(), e.at(2).get<int>(), e.at(3).get<int>(),
               e.at(4).get<double>()};
    tree.push_back(n);
  }
  const int size = static_cast<int>(tree.size());
  if (size == 0) throw ArtifactError("empty tree in classifier artifact");
  for (const auto& n : tree) {
    if (n.feature >= features || (n.feature >= 0 && (n.left <= 0 || n.left >= size || n.right <= 0 ||
                                                     n.right >= size))) {
      throw ArtifactError("malformed tree in classifier artifact");
    }
  }
  return tree;
}

// Additive per-sample statistics (a, b) with a cost that a split minimizes.
struct SplitCriterion {
  std::vector<double> a;
  std::vector<double> b;
  std::function<double(double, double)> cost;
  std::function<double(double, double)> leaf;
  std::function<bool(double, double)> admissible;
};

class TreeBuilder {
 public:
  TreeBuilder(const Eigen::MatrixXd& x, const SplitCriterion& crit, int max_depth, int max_features, Rng& rng)
      : x_(x), crit_(crit), max_depth_(max_depth), max_features_(max_features), rng_(rng) {}

  Tree build(std::vector<Eigen::Index> rows) {
    tree_.clear();
    grow(std::move(rows), 0);
    return std::move(tree_);
  }

 private:
  int grow(std::vector<Eigen::Index> rows, int depth) {
    double a = 0.0, b = 0.0;
    for (auto r : rows) {
      a += crit_.a[static_cast<std::size_t>(r)];
      b += crit_.b[static_cast<std::size_t>(r)];
    }
    const int id = static_cast<int>(tree_.size());
    tree_.push_back(TreeNode{-1, 0.0, -1, -1, crit_.leaf(a, b)});
    if (depth >= max_depth_ || rows.size() < 2) return id;

    const double parent = crit_.cost(a, b);
    const int p = static_cast<int>(x_.cols());
    std::vector<int> features(static_cast<std::size_t>(p));
    std::iota(features.begin(), features.end(), 0);
    int tries = p;
    if (max_features_ > 0 && max_features_ < p) {
      for (int i = 0; i < max_features_; ++i) {
        std::swap(features[static_cast<std::size_t>(i)],
                  features[static_cast<std::size_t>(i) + rng_.uniform_index(static_cast<std::size_t>(p - i))]);
      }
      tries = max_features_;
    }

    double best_gain = 1e-12;
    int best_feature = -1;
    double best_threshold = 0.0;
    std::vector<Eigen::Index> sorted = rows;
    for (int fi = 0; fi < tries; ++fi) {
      const int f = features[static_cast<std::size_t>(fi)];
      std::stable_sort(sorted.begin(), sorted.end(),
                       [&](Eigen::Index l, Eigen::Index r) { return x_(l, f) < x_(r, f); });
      double la = 0.0, lb = 0.0;
      for (std::size_t k = 0; k + 1 < sorted.size(); ++k) {
        la += crit_.a[static_cast<std::size_t>(sorted[k])];
        lb += crit_.b[static_cast<std::size_t>(sorted[k])];
        const double here = x_(sorted[k], f);
        const double next = x_(sorted[k + 1], f);
        if (here == next) continue;
        const double ra = a - la, rb = b - lb;
        if (!crit_.admissible(la, lb) || !crit_.admissible(ra, rb)) continue;
        const double gain = parent - crit_.cost(la, lb) - crit_.cost(ra, rb);
        if (gain > best_gain) {
          best_gain = gain;
          best_feature = f;
          best_threshold = 0.5 * (here + next);
        }
      }
    }
    if (best_feature < 0) return id;

    std::vector<Eigen::Index> left, right;
    for (auto r : rows) (x_(r, best_feature) <= best_threshold ? left : right).push_back(r);
    const int l = grow(std::move(left), depth + 1);
    const int r = grow(std::move(right), depth + 1);
    tree_[static_cast<std::size_t>(id)].feature = best_feature;
    tree_[static_cast<std::size_t>(id)].threshold = best_threshold;
    tree_[static_cast<std::size_t>(id)].left = l;
    tree_[static_cast<std::size_t>(id)].right = r;
    return id;
  }

  const Eigen::MatrixXd& x_;
  const SplitCriterion& crit_;
  int max_depth_;
  int max_features_;
  Rng& rng_;
  Tree tree_;
};

class ForestModel final : public Model {
 public:
  std::vector<Tree> trees;

  std::vector<double> predict(const EncodedDataset& data) const override {
    std::vector<double> out(static_cast<std::size_t>(data.features.rows()), 0.0);
    for (Eigen::Index i = 0; i < data.features.rows(); ++i) {
      double s = 0.0;
      for (const auto& t : trees) s += tree_eval(t, data.features, i);
      out[static_cast<std::size_t>(i)] = s / static_cast<double>(trees.size());
    }
    return out;
  }
  json to_json() const override {
    json t = json::array();
    for (const auto& tree : trees) t.push_back(tree_to_json(tree));
    return {{"trees", t}};
  }
  static std::shared_ptr<ForestModel> from_json(const json& j, int features) {
    auto m = std::make_shared<ForestModel>();
    for (const auto& t : j.at("trees")) m->trees.push_back(tree_from_json(t, features));
    if (m->trees.empty()) throw ArtifactError("forest artifact has no trees");
    return m;
  }
};

std::shared_ptr<ForestModel> fit_forest(const EncodedDataset& data, const ForestParams& params, std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(data.features.rows());
  const int p = static_cast<int>(data.features.cols());
  SplitCriterion crit;
  crit.a.assign(n, 1.0);
  crit.b.resize(n);
  for (std::size_t i = 0; i < n; ++i) crit.b[i] = data.labels[i];
  // Count-weighted Gini impurity: n * (1 - q^2 - (1-q)^2).
  crit.cost = [](double count, double pos) { return count > 0 ? 2.0 * pos * (count - pos) / count : 0.0; };
  crit.leaf = [](double count, double pos) { return count > 0 ? pos / count : 0.5; };
  const double min_leaf = params.min_leaf;
  crit.admissible = [min_leaf](double count, double) { return count >= min_leaf; };
  const int max_features =
      params.max_features > 0 ? params.max_features : static_cast<int>(std::ceil(std::sqrt(static_cast<double>(p))));

  auto m = std::make_shared<ForestModel>();
  for (int t = 0; t < params.trees; ++t) {
    Rng rng = Rng::derive(seed, "forest", {static_cast<std::uint64_t>(t)});
    std::vector<Eigen::Index> rows(n);
    for (auto& r : rows) r = static_cast<Eigen::Index>(rng.uniform_index(n));
    TreeBuilder builder(data.features, crit, params.max_depth, max_features, rng);
    m->trees.push_back(builder.build(std::move(rows)));
  }
  return m;
}

class BoostModel final : public Model {
 public:
  double base_score = 0.0;
  std::vector<Tree> trees;  // leaf values already scaled by the learning rate

  double margin(const Eigen::MatrixXd& x, Eigen::Index row) const {
    double s = base_score;
    for (const auto& t : trees) s += tree_eval(t, x, row);
    return s;
  }
  std::vector<double> predict(const EncodedDataset& data) const override {
    std::vector<double> out(static_cast<std::size_t>(data.features.rows()));
    for (Eigen::Index i = 0; i < data.features.rows(); ++i) {
      out[static_cast<std::size_t>(i)] = sigmoid(margin(data.features, i));
    }
    return out;
  }
  json to_json() const override {
    json t = json::array();
    for (const auto& tree : trees) t.push_back(tree_to_json(tree));
    return {{"base_score", base_score}, {"trees", t}};
  }
  static std::shared_ptr<BoostModel> from_json(const json& j, int features) {
    auto m = std::make_shared<BoostModel>();
    m->base_score = j.at("base_score").get<double>();
    for (const auto& t : j.at("trees")) m->trees.push_back(tree_from_json(t, features));
    return m;
  }
};

// Second-order boosting of the logistic loss with L2-regularized leaves.
std::shared_ptr<BoostModel> fit_boost(const EncodedDataset& data, const BoostParams& params, std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(data.features.rows());
  double pos = 0.0;
  for (int y : data.labels) pos += y;
  auto m = std::make_shared<BoostModel>();
  m->base_score = std::log(pos / (static_cast<double>(n) - pos));

  const double lambda = params.lambda;
  const double eta = params.learning_rate;
  const double min_weight = params.min_child_weight;
  SplitCriterion crit;
  crit.a.resize(n);
  crit.b.resize(n);
  crit.cost = [lambda](double g, double h) { return -0.5 * g * g / (h + lambda); };
  crit.leaf = [lambda, eta](double g, double h) { return -eta * g / (h + lambda); };
  crit.admissible = [min_weight](double, double h) { return h >= min_weight; };

  std::vector<double> margin(n, m->base_score);
  std::vector<Eigen::Index> rows(n);
  std::iota(rows.begin(), rows.end(), 0);
  Rng rng = Rng::derive(seed, "boost");
  for (int round = 0; round < params.rounds; ++round) {
    for (std::size_t i = 0; i < n; ++i) {
      const double p = sigmoid(margin[i]);
      crit.a[i] = p - data.labels[i];
      crit.b[i] = p * (1.0 - p);
    }
    TreeBuilder builder(data.features, crit, params.max_depth, 0, rng);
    Tree tree = builder.build(rows);
    for (std::size_t i = 0; i < n; ++i) margin[i] += tree_eval(tree, data.features, static_cast<Eigen::Index>(i));
    if (!std::isfinite(margin[0])) throw TrainingError("boosting diverged at round " + std::to_string(round + 1));
    m->trees.push_back(std::move(tree));
  }
  return m;
}

// ---------------------------------------------------------------- recurrent

class RecurrentModel final : public Model {
 public:
  int vocab_size = 0;
  int embedding_dim = 0;
  nn::Parameter embedding;  // V x E when embedding_dim > 0
  nn::LstmCell cell;
  nn::Linear head;

  RecurrentModel() = default;
  RecurrentModel(int v, const RecurrentParams& params, Rng& rng) : vocab_size(v), embedding_dim(params.embedding_dim) {
    int in = v;
    if (embedding_dim > 0) {
      Matrix e(v, embedding_dim);
      const double scale = std::sqrt(6.0 / (v + embedding_dim));
      for (Eigen::Index i = 0; i < e.size(); ++i) e.data()[i] = (2.0 * rng.uniform() - 1.0) * scale;
      embedding = nn::Parameter(std::move(e));
      in = embedding_dim;
    }
    cell = nn::LstmCell(in, params.hidden_size, rng);
    head = nn::Linear(params.hidden_size, 1, rng);
  }

  std::vector<nn::Parameter*> parameters() {
    std::vector<nn::Parameter*> out;
    if (embedding_dim > 0) out.push_back(&embedding);
    for (auto* p : cell.parameters()) out.push_back(p);
    for (auto* p : head.parameters()) out.push_back(p);
    return out;
  }

  // Logit (B x 1) after reading every row, PAD rows included.
  Var logit(Tape& tape, const std::vector<Var>& rows) const {
    const Eigen::Index b = rows.front().rows();
    nn::LstmCell::State state{tape.constant(Matrix::Zero(b, cell.hidden)), tape.constant(Matrix::Zero(b, cell.hidden))};
    Var emb = embedding_dim > 0 ? tape.parameter(embedding) : Var();
    for (const Var& row : rows) {
      Var x = embedding_dim > 0 ? tape.matmul(row, emb) : row;
      state = cell.step(tape, x, state);
    }
    return head.forward(tape, state.h);
  }

  std::vector<double> predict(const EncodedDataset& data) const override {
    std::vector<double> out;
    out.reserve(data.size());
    constexpr std::size_t kChunk = 256;
    for (std::size_t start = 0; start < data.sequences.size(); start += kChunk) {
      const std::size_t end = std::min(data.sequences.size(), start + kChunk);
      std::vector<const SequenceMatrix*> members;
      for (std::size_t i = start; i < end; ++i) members.push_back(&data.sequences[i]);
      const auto sb = nn::make_batch(members);
      Tape tape;
      std::vector<Var> rows;
      for (const auto& s : sb.steps) rows.push_back(tape.constant(s));
      const Var l = logit(tape, rows);
      for (Eigen::Index i = 0; i < l.rows(); ++i) out.push_back(sigmoid(l.value()(i, 0)));
    }
    return out;
  }

  json to_json() const override {
    return {{"vocab_size", vocab_size},
            {"hidden_size", cell.hidden},
            {"embedding_dim", embedding_dim},
            {"parameters", nn::parameters_to_json(const_cast<RecurrentModel*>(this)->parameters())}};
  }
  static std::shared_ptr<RecurrentModel> from_json(const json& j, int vocab_size) {
    if (j.at("vocab_size").get<int>() != vocab_size) throw ArtifactError("recurrent model vocabulary width differs");
    RecurrentParams params;
    params.hidden_size = j.at("hidden_size").get<int>();
    params.embedding_dim = j.at("embedding_dim").get<int>();
    Rng rng(0);
    auto m = std::make_shared<RecurrentModel>(vocab_size, params, rng);
    nn::parameters_from_json(j.at("parameters"), m->parameters());
    return m;
  }
};

std::shared_ptr<RecurrentModel> fit_recurrent(const EncodedDataset& data, int vocab_size,
                                              const RecurrentParams& params, std::uint64_t seed,
                                              std::vector<double>& curve) {
  Rng init = Rng::derive(seed, "classifier-init");
  auto m = std::make_shared<RecurrentModel>(vocab_size, params, init);
  nn::Adam optimizer(m->parameters(), nn::AdamOptions{.learning_rate = params.learning_rate});
  Rng rng = Rng::derive(seed, "classifier-train");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < params.epochs; ++epoch) {
    rng.shuffle(order);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(params.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(params.batch_size));
      std::vector<const SequenceMatrix*> members;
      Matrix y(static_cast<Eigen::Index>(end - start), 1);
      for (std::size_t k = start; k < end; ++k) {
        members.push_back(&data.sequences[order[k]]);
        y(static_cast<Eigen::Index>(k - start), 0) = data.labels[order[k]];
      }
      const auto sb = nn::make_batch(members);
      Tape tape(/*track_parameters=*/true);
      std::vector<Var> rows;
      for (const auto& s : sb.steps) rows.push_back(tape.constant(s));
      const Var s = m->logit(tape, rows);
      const Var yv = tape.constant(y);
      const Var not_y = tape.constant(Matrix::Ones(y.rows(), 1) - y);
      // BCE with logits: y * softplus(-s) + (1 - y) * softplus(s).
      Var loss = tape.add(tape.mul(yv, tape.softplus(tape.affine(s, -1.0, 0.0))), tape.mul(not_y, tape.softplus(s)));
      loss = tape.affine(tape.sum(loss), 1.0 / static_cast<double>(y.rows()), 0.0);
      const double value = loss.value()(0, 0);
      if (!std::isfinite(value)) {
        throw TrainingError("recurrent classifier loss is non-finite at epoch " + std::to_string(epoch + 1));
      }
      optimizer.zero_grad();
      tape.backward(loss);
      optimizer.step();
      total += value * static_cast<double>(y.rows());
    }
    curve.push_back(total / static_cast<double>(data.size()));
  }
  return m;
}

}  // namespace
}  // namespace detail

namespace {

void check_dataset(const EncodedDataset& data, InputMode mode, const ActivityVocabulary& vocab, int max_len,
                   const char* what) {
  if (data.mode != mode) {
    throw PredictionError(std::string(what) + ": expected " + to_string(mode) + " input, got " +
                          to_string(data.mode));
  }
  if (mode == InputMode::kAggregated) {
    if (data.features.cols() != vocab.activity_count() ||
        static_cast<std::size_t>(data.features.rows()) != data.size()) {
      throw PredictionError(std::string(what) + ": aggregated input has " + std::to_string(data.features.cols()) +
                            " columns, expected " + std::to_string(vocab.activity_count()));
    }
  } else {
    if (data.sequences.size() != data.size()) throw PredictionError(std::string(what) + ": label count mismatch");
    for (const auto& s : data.sequences) {
      if (s.rows.rows() != max_len + 1 || s.rows.cols() != vocab.size()) {
        throw PredictionError(std::string(what) + ": sequence input has shape " + std::to_string(s.rows.rows()) +
                              "x" + std::to_string(s.rows.cols()) + ", expected " + std::to_string(max_len + 1) +
                              "x" + std::to_string(vocab.size()));
      }
    }
  }
}

}  // namespace

void Classifier::set_threshold(DecisionThreshold threshold) {
  if (!(threshold.tau > 0.0 && threshold.tau < 1.0)) throw std::invalid_argument("tau must lie in (0, 1)");
  threshold_ = std::move(threshold);
}

std::vector<double> Classifier::predict_proba(const EncodedDataset& data) const {
  if (!model_) throw PredictionError("classifier is not trained");
  check_dataset(data, input_mode(), vocab_, max_len_, "predict");
  if (data.size() == 0) return {};
  return model_->predict(data);
}

double Classifier::predict_proba(const AggregatedVector& x) const {
  if (input_mode() != InputMode::kAggregated) throw PredictionError("predict: classifier expects sequence input");
  EncodedDataset d;
  d.mode = InputMode::kAggregated;
  d.labels = {0};
  d.features.resize(1, static_cast<Eigen::Index>(x.counts.size()));
  for (std::size_t j = 0; j < x.counts.size(); ++j) d.features(0, static_cast<Eigen::Index>(j)) = x.counts[j];
  return predict_proba(d).front();
}

double Classifier::predict_proba(const SequenceMatrix& x) const {
  EncodedDataset d;
  d.mode = InputMode::kSequence;
  d.labels = {0};
  d.sequences = {x};
  return predict_proba(d).front();
}

std::vector<double> Classifier::predict_proba(const std::vector<ActivitySequence>& batch) const {
  return predict_proba(encode_dataset(batch, std::vector<int>(batch.size(), 0), vocab_, input_mode(), max_len_));
}

double Classifier::predict_proba(const ActivitySequence& activities) const {
  return predict_proba(std::vector<ActivitySequence>{activities}).front();
}

Prediction Classifier::predict(const ActivitySequence& activities) const {
  const double p = predict_proba(activities);
  return {p, label_for(p)};
}

std::vector<Prediction> Classifier::predict(const EncodedDataset& data) const {
  std::vector<Prediction> out;
  for (double p : predict_proba(data)) out.push_back({p, label_for(p)});
  return out;
}

Var Classifier::forward_rows(Tape& tape, const std::vector<Var>& rows) const {
  return tape.sigmoid(forward_logit(tape, rows));
}

Var Classifier::forward_logit(Tape& tape, const std::vector<Var>& rows) const {
  if (kind_ != ClassifierKind::kRecurrent) {
    throw UnsupportedOperation(to_string(kind_) + " classifier is not differentiable with respect to its input");
  }
  if (static_cast<int>(rows.size()) != max_len_ + 1) throw PredictionError("forward_rows: wrong number of rows");
  const auto& model = static_cast<const detail::RecurrentModel&>(*model_);
  return model.logit(tape, rows);
}

std::string Classifier::to_json() const {
  json j;
  j["format"] = "latentadv.classifier";
  j["version"] = 1;
  j["kind"] = to_string(kind_);
  j["vocab_hash"] = std::to_string(vocab_.hash());
  j["input_mode"] = to_string(input_mode());
  j["tau"] = threshold_.tau;
  j["seed"] = std::to_string(seed_);
  j["max_len"] = max_len_;
  j["vocabulary"] = vocab_.activities();
  j["threshold"] = {{"selection_metric", threshold_.selection_metric},
                    {"selected_on", threshold_.selected_on},
                    {"warning", threshold_.warning}};
  j["training_curve"] = curve_;
  j["model"] = model_ ? model_->to_json() : json();
  return j.dump();
}

Classifier Classifier::from_json(const std::string& text, const ActivityVocabulary& expected_vocab) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ArtifactError(std::string("classifier artifact is not valid JSON: ") + e.what());
  }
  if (j.value("format", "") != "latentadv.classifier") throw ArtifactError("not a classifier artifact");
  if (j.at("vocab_hash").get<std::string>() != std::to_string(expected_vocab.hash())) {
    throw ArtifactError("classifier artifact was trained on a different vocabulary");
  }
  Classifier c;
  try {
    c.kind_ = parse_classifier_kind(j.at("kind").get<std::string>());
  } catch (const ConfigError& e) {
    throw ArtifactError(e.what());
  }
  c.vocab_ = expected_vocab;
  c.max_len_ = j.at("max_len").get<int>();
  c.seed_ = std::stoull(j.at("seed").get<std::string>());
  c.threshold_.tau = j.at("tau").get<double>();
  const auto& t = j.at("threshold");
  c.threshold_.selection_metric = t.at("selection_metric").get<std::string>();
  c.threshold_.selected_on = t.at("selected_on").get<std::string>();
  c.threshold_.warning = t.at("warning").get<std::string>();
  c.curve_ = j.at("training_curve").get<std::vector<double>>();
  const auto& m = j.at("model");
  const int features = expected_vocab.activity_count();
  switch (c.kind_) {
    case ClassifierKind::kLinear: c.model_ = detail::LinearModel::from_json(m, features); break;
    case ClassifierKind::kBaggedTrees: c.model_ = detail::ForestModel::from_json(m, features); break;
    case ClassifierKind::kBoostedTrees: c.model_ = detail::BoostModel::from_json(m, features); break;
    case ClassifierKind::kRecurrent: c.model_ = detail::RecurrentModel::from_json(m, expected_vocab.size()); break;
  }
  return c;
}

Classifier train_classifier(ClassifierKind kind, const EncodedDataset& train, const ActivityVocabulary& vocab,
                            int max_len, const ClassifierHyperparams& hyperparams, std::uint64_t seed) {
  if (train.mode != input_mode_for(kind)) {
    throw TrainingError(to_string(kind) + " classifier needs " + to_string(input_mode_for(kind)) + " input");
  }
  try {
    check_dataset(train, train.mode, vocab, max_len, "train");
  } catch (const PredictionError& e) {
    throw TrainingError(e.what());
  }
  const auto pos = std::count(train.labels.begin(), train.labels.end(), 1);
  const auto neg = std::count(train.labels.begin(), train.labels.end(), 0);
  if (pos == 0 || neg == 0 || pos + neg != static_cast<long>(train.size())) {
    throw TrainingError("training set must contain both labels (got " + std::to_string(pos) + " positive, " +
                        std::to_string(neg) + " negative)");
  }
  Classifier c;
  c.kind_ = kind;
  c.vocab_ = vocab;
  c.max_len_ = max_len;
  c.seed_ = seed;
  c.hyperparams_ = hyperparams;
  switch (kind) {
    case ClassifierKind::kLinear: c.model_ = detail::fit_linear(train, hyperparams.linear); break;
    case ClassifierKind::kBaggedTrees: c.model_ = detail::fit_forest(train, hyperparams.forest, seed); break;
    case ClassifierKind::kBoostedTrees: c.model_ = detail::fit_boost(train, hyperparams.boost, seed); break;
    case ClassifierKind::kRecurrent:
      c.model_ = detail::fit_recurrent(train, vocab.size(), hyperparams.recurrent, seed, c.curve_);
      break;
  }
  return c;
}

GridSearchResult train_with_grid(ClassifierKind kind, const EncodedDataset& fit, const EncodedDataset& validation,
                                 const ActivityVocabulary& vocab, int max_len,
                                 const std::vector<ClassifierHyperparams>& grid, std::uint64_t seed) {
  if (grid.empty()) throw ConfigError("hyperparameter grid is empty");
  GridSearchResult result;
  double best = -1.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    Classifier c = train_classifier(kind, fit, vocab, max_len, grid[i], seed);
    const double auc = evaluate_auc(c, validation);
    result.validation_auc.push_back(auc);
    if (auc > best) {
      best = auc;
      result.selected = i;
      result.classifier = std::move(c);
    }
  }
  return result;
}

DecisionThreshold select_threshold(const std::vector<double>& probabilities, const std::vector<int>& labels,
                                   const std::string& selected_on) {
  if (probabilities.size() != labels.size()) throw std::invalid_argument("select_threshold: size mismatch");
  const auto pos = std::count(labels.begin(), labels.end(), 1);
  if (pos == 0 || pos == static_cast<long>(labels.size())) {
    throw EvaluationError("threshold selection needs both labels in the validation set");
  }
  DecisionThreshold out;
  out.selected_on = selected_on;
  std::vector<double> unique = probabilities;
  std::sort(unique.begin(), unique.end());
  unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
  if (unique.size() == 1) {
    out.tau = 0.5;
    out.warning = "constant validation probabilities; tau defaulted to 0.5";
    return out;
  }

  // Cut k predicts positive for p >= unique[k]; its admissible interval is
  // (unique[k-1], unique[k]] with unique[-1] = 0.
  std::vector<std::pair<double, int>> sorted;
  for (std::size_t i = 0; i < probabilities.size(); ++i) sorted.emplace_back(probabilities[i], labels[i]);
  std::sort(sorted.begin(), sorted.end());
  double best_f1 = -1.0;
  double best_tau = 0.5;
  std::size_t j = 0;
  long tp = pos, fp = static_cast<long>(labels.size()) - pos;
  for (std::size_t k = 0; k < unique.size(); ++k) {
    // Everything with p >= unique[k] is predicted positive.
    while (j < sorted.size() && sorted[j].first < unique[k]) {
      (sorted[j].second == 1 ? tp : fp) -= 1;
      ++j;
    }
    const double f1 = tp == 0 ? 0.0 : 2.0 * tp / (2.0 * tp + fp + (pos - tp));
    const double lower = k == 0 ? 0.0 : unique[k - 1];
    const double mid = 0.5 * (lower + unique[k]);
    constexpr double kEps = 1e-12;
    if (f1 > best_f1 + kEps || (std::abs(f1 - best_f1) <= kEps && std::abs(mid - 0.5) < std::abs(best_tau - 0.5))) {
      best_f1 = f1;
      best_tau = mid;
    }
  }
  out.tau = std::clamp(best_tau, 1e-9, 1.0 - 1e-9);
  return out;
}

DecisionThreshold select_threshold(const Classifier& classifier, const EncodedDataset& validation,
                                   const std::string& selected_on) {
  return select_threshold(classifier.predict_proba(validation), validation.labels, selected_on);
}

double auc_score(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("auc: size mismatch");
  const auto n = scores.size();
  const auto pos = static_cast<double>(std::count(labels.begin(), labels.end(), 1));
  const double neg = static_cast<double>(n) - pos;
  if (pos == 0 || neg == 0) throw EvaluationError("AUC needs both labels");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Sum of average ranks of positives (Mann-Whitney U).
  double rank_sum = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t k = i;
    while (k + 1 < n && scores[order[k + 1]] == scores[order[i]]) ++k;
    const double avg_rank = 0.5 * static_cast<double>(i + k) + 1.0;
    for (std::size_t m = i; m <= k; ++m) {
      if (labels[order[m]] == 1) rank_sum += avg_rank;
    }
    i = k + 1;
  }
  return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

double evaluate_auc(const Classifier& classifier, const EncodedDataset& test) {
  return auc_score(classifier.predict_proba(test), test.labels);
}

std::vector<Var> soft_sequence_rows(Tape& tape, const ClassManifold& manifold, Var z) {
  const auto probs = manifold.decode_rows(tape, z);
  const int v = manifold.vocabulary().size();
  const Eigen::Index b = z.rows();
  constexpr int kPad = ActivityVocabulary::kPad;
  constexpr int kEos = ActivityVocabulary::kEos;
  // Moves PAD mass onto EOS: a stray PAD terminates like EOS.
  Matrix fold = Matrix::Identity(v, v);
  fold(kPad, kPad) = 0.0;
  fold(kPad, kEos) = 1.0;
  const Var fold_v = tape.constant(fold);
  Matrix pad = Matrix::Zero(b, v);
  pad.col(kPad).setOnes();
  Matrix eos = Matrix::Zero(b, v);
  eos.col(kEos).setOnes();
  const Var pad_v = tape.constant(pad);
  const Var eos_v = tape.constant(eos);

  std::vector<Var> rows;
  Var alive = tape.constant(Matrix::Ones(b, 1));
  for (std::size_t t = 0; t < probs.size(); ++t) {
    const Var dead = tape.affine(alive, -1.0, 1.0);
    if (t + 1 == probs.size()) {
      rows.push_back(tape.add(tape.mul_col(eos_v, alive), tape.mul_col(pad_v, dead)));
      break;
    }
    const Var folded = tape.matmul(probs[t], fold_v);
    rows.push_back(tape.add(tape.mul_col(folded, alive), tape.mul_col(pad_v, dead)));
    const Var stop = tape.slice_cols(folded, kEos, 1);
    alive = tape.mul(alive, tape.affine(stop, -1.0, 1.0));
  }
  return rows;
}

LatentLoss loss_and_gradient_wrt_latent(const Classifier& classifier, const ClassManifold& manifold,
                                        const Eigen::VectorXd& z, const Eigen::VectorXd& z0, int target_label,
                                        double lambda_dist) {
  if (classifier.kind() != ClassifierKind::kRecurrent) {
    throw UnsupportedOperation(to_string(classifier.kind()) +
                               " classifier has no smooth decision boundary; gradient attacks need a recurrent model");
  }
  if (!(classifier.vocabulary() == manifold.vocabulary()) || classifier.max_len() != manifold.max_len()) {
    throw PredictionError("classifier and manifold disagree on vocabulary or max_len");
  }
  if (z.size() != manifold.latent_dim() || z0.size() != manifold.latent_dim()) {
    throw std::invalid_argument("latent loss: z has the wrong dimension");
  }
  Tape tape;
  const Var zv = tape.variable(z.transpose());
  const Var logit = classifier.forward_logit(tape, soft_sequence_rows(tape, manifold, zv));
  // BCE with logits: softplus(-s) toward 1, softplus(s) toward 0.
  const Var bce = tape.softplus(target_label == 1 ? tape.affine(logit, -1.0, 0.0) : logit);
  const Var diff = tape.sub(zv, tape.constant(z0.transpose()));
  const Var loss = tape.add(bce, tape.affine(tape.sum(tape.square(diff)), lambda_dist, 0.0));
  tape.backward(loss);

  LatentLoss out;
  out.loss = loss.value()(0, 0);
  const double s = logit.value()(0, 0);
  out.probability = s >= 0 ? 1.0 / (1.0 + std::exp(-s)) : std::exp(s) / (1.0 + std::exp(s));
  out.gradient = zv.grad().row(0).transpose();
  return out;
}

}  // namespace latentadv
