#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "latentadv/encoding.hpp"
#include "latentadv/eventlog.hpp"
#include "latentadv/manifold.hpp"
#include "latentadv/nn/tape.hpp"

namespace latentadv {

enum class ClassifierKind { kLinear, kBaggedTrees, kBoostedTrees, kRecurrent };
enum class InputMode { kAggregated, kSequence };

std::string to_string(ClassifierKind kind);
std::string to_string(InputMode mode);
// Accepts linear, bagged_trees, boosted_trees, recurrent (and the short
// names lr, rf, xgb, lstm). Throws ConfigError otherwise.
ClassifierKind parse_classifier_kind(const std::string& name);
InputMode input_mode_for(ClassifierKind kind);

// Prefixes encoded for one input mode. Aggregated rows hold activity counts;
// sequence entries hold the padded one-hot matrices.
struct EncodedDataset {
  InputMode mode = InputMode::kAggregated;
  Eigen::MatrixXd features;
  std::vector<SequenceMatrix> sequences;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
};

EncodedDataset encode_dataset(const std::vector<ActivitySequence>& sequences, const std::vector<int>& labels,
                              const ActivityVocabulary& vocab, InputMode mode, int max_len);
EncodedDataset encode_dataset(const PrefixLog& prefixes, const ActivityVocabulary& vocab, InputMode mode,
                              int max_len);

struct LinearParams {
  double l2 = 1e-3;
  int max_iter = 100;
};

struct ForestParams {
  int trees = 100;
  int max_depth = 10;
  int min_leaf = 1;
  // Features tried per split; 0 means ceil(sqrt(p)).
  int max_features = 0;
};

struct BoostParams {
  int rounds = 100;
  int max_depth = 3;
  double learning_rate = 0.1;
  double lambda = 1.0;
  double min_child_weight = 1e-3;
};

struct RecurrentParams {
  int hidden_size = 32;
  // 0 feeds one-hot rows straight into the LSTM; > 0 adds a learned linear
  // embedding of that width.
  int embedding_dim = 0;
  int epochs = 30;
  double learning_rate = 1e-2;
  int batch_size = 32;
};

struct ClassifierHyperparams {
  LinearParams linear;
  ForestParams forest;
  BoostParams boost;
  RecurrentParams recurrent;
};

// Small fixed search grid for one kind; entries only vary that kind's params.
std::vector<ClassifierHyperparams> default_grid(ClassifierKind kind, const ClassifierHyperparams& base = {});

struct DecisionThreshold {
  double tau = 0.5;
  std::string selection_metric = "f1";
  std::string selected_on;
  std::string warning;
};

struct Prediction {
  double probability = 0.0;
  int label = 0;
};

namespace detail {
class Model;
}

class Classifier {
 public:
  Classifier() = default;

  ClassifierKind kind() const { return kind_; }
  InputMode input_mode() const { return input_mode_for(kind_); }
  const ActivityVocabulary& vocabulary() const { return vocab_; }
  int max_len() const { return max_len_; }
  std::uint64_t seed() const { return seed_; }
  double tau() const { return threshold_.tau; }
  const DecisionThreshold& threshold() const { return threshold_; }
  void set_threshold(DecisionThreshold threshold);
  // Per-epoch mean training loss (recurrent only).
  const std::vector<double>& training_curve() const { return curve_; }
  const ClassifierHyperparams& hyperparams() const { return hyperparams_; }

  // Probabilities for every instance; throws PredictionError if the dataset
  // mode or shape does not fit this classifier.
  std::vector<double> predict_proba(const EncodedDataset& data) const;
  double predict_proba(const AggregatedVector& x) const;
  double predict_proba(const SequenceMatrix& x) const;
  // Encodes the activities for this classifier's input mode first.
  double predict_proba(const ActivitySequence& activities) const;
  std::vector<double> predict_proba(const std::vector<ActivitySequence>& batch) const;

  // label = 1 iff probability >= tau.
  Prediction predict(const ActivitySequence& activities) const;
  std::vector<Prediction> predict(const EncodedDataset& data) const;
  int label_for(double probability) const { return probability >= threshold_.tau ? 1 : 0; }

  // Recurrent only: probability for soft rows on a tape (each row B x V).
  nn::Var forward_rows(nn::Tape& tape, const std::vector<nn::Var>& rows) const;
  nn::Var forward_logit(nn::Tape& tape, const std::vector<nn::Var>& rows) const;

  std::string to_json() const;
  // Throws ArtifactError on malformed input or a vocabulary-hash mismatch.
  static Classifier from_json(const std::string& text, const ActivityVocabulary& expected_vocab);

 private:
  friend Classifier train_classifier(ClassifierKind, const EncodedDataset&, const ActivityVocabulary&, int,
                                     const ClassifierHyperparams&, std::uint64_t);

  ClassifierKind kind_ = ClassifierKind::kLinear;
  ActivityVocabulary vocab_;
  int max_len_ = 0;
  std::uint64_t seed_ = 0;
  DecisionThreshold threshold_;
  ClassifierHyperparams hyperparams_;
  std::vector<double> curve_;
  std::shared_ptr<const detail::Model> model_;
};

// Throws TrainingError if a label is missing, the encoding does not match the
// kind, or the loss becomes non-finite.
Classifier train_classifier(ClassifierKind kind, const EncodedDataset& train, const ActivityVocabulary& vocab,
                            int max_len, const ClassifierHyperparams& hyperparams, std::uint64_t seed);

struct GridSearchResult {
  Classifier classifier;
  std::size_t selected = 0;
  std::vector<double> validation_auc;
};

// Trains every grid entry on `fit` and keeps the one with the best validation
// AUC (first on ties).
GridSearchResult train_with_grid(ClassifierKind kind, const EncodedDataset& fit, const EncodedDataset& validation,
                                 const ActivityVocabulary& vocab, int max_len,
                                 const std::vector<ClassifierHyperparams>& grid, std::uint64_t seed);

// F1-maximizing cut over the unique probabilities. The returned tau is the
// midpoint of the best interval, ties going to the interval whose midpoint is
// closest to 0.5. Constant probabilities give 0.5 with a warning. Throws
// EvaluationError unless both labels are present.
DecisionThreshold select_threshold(const std::vector<double>& probabilities, const std::vector<int>& labels,
                                   const std::string& selected_on = "validation");
DecisionThreshold select_threshold(const Classifier& classifier, const EncodedDataset& validation,
                                   const std::string& selected_on = "validation");

// Rank statistic; ties count one half. Throws EvaluationError on a single class.
double auc_score(const std::vector<double>& scores, const std::vector<int>& labels);
double evaluate_auc(const Classifier& classifier, const EncodedDataset& test);

struct LatentLoss {
  double loss = 0.0;
  double probability = 0.0;
  Eigen::VectorXd gradient;
};

// Rows the classifier sees for a latent point: the decoder's softmax rows,
// with PAD mass counted as termination and every row after termination
// weighted toward PAD. The final row is forced to EOS/PAD as in the hard path.
std::vector<nn::Var> soft_sequence_rows(nn::Tape& tape, const ClassManifold& manifold, nn::Var z);

// BCE(classifier(soft rows of z), target) + lambda_dist * ||z - z0||^2 and its
// gradient with respect to z. Throws UnsupportedOperation for non-recurrent
// classifiers.
LatentLoss loss_and_gradient_wrt_latent(const Classifier& classifier, const ClassManifold& manifold,
                                        const Eigen::VectorXd& z, const Eigen::VectorXd& z0, int target_label,
                                        double lambda_dist);

}  // namespace latentadv
