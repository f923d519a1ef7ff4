#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "latentadv/encoding.hpp"
#include "latentadv/eventlog.hpp"
#include "latentadv/nn/tape.hpp"

namespace latentadv {

struct VaeConfig {
  int latent_dim = 8;
  int hidden_size = 32;
  int epochs = 120;
  double learning_rate = 1e-2;
  double kl_weight = 1.0;
  // The KL weight ramps linearly from kl_weight / warmup to kl_weight over
  // this many epochs; 0 applies the full weight from the start.
  int kl_warmup_epochs = 0;
  int batch_size = 32;
  std::uint64_t seed = 0;
  int max_len = 10;

  // Throws ConfigError unless 1 <= latent_dim <= (max_len + 1) * vocab_size.
  void validate(int vocab_size) const;
};

// Diagonal Gaussian posterior.
struct LatentPoint {
  Eigen::VectorXd mu;
  Eigen::VectorXd sigma;
};

struct EpochLoss {
  double nll = 0.0;
  double kl = 0.0;
  double total = 0.0;
};

struct ElboComponents {
  double nll = 0.0;
  double kl = 0.0;
};

// z = mu + eps * sigma, element-wise.
Eigen::VectorXd reparameterize(const LatentPoint& point, const Eigen::VectorXd& eps);

// 0.5 * sum(mu^2 + sigma^2 - 1 - ln sigma^2).
double gaussian_kl(const LatentPoint& point);

// Masked categorical cross-entropy: sum over rows with mask set of
// -log(probs(t, argmax target row t)).
double masked_nll(const Eigen::MatrixXd& probs, const SequenceMatrix& target);

// LSTM variational autoencoder trained on the prefixes of one outcome class.
//
// The encoder reads the one-hot rows up to and including EOS and maps its
// final state to (mu, log sigma^2). The decoder is an autoregressive LSTM over
// the max_len + 1 output positions: its initial state is tanh(W z + b) and each
// step sees z, the previous row and a position one-hot. Training feeds the
// target rows (teacher forcing), greedy decoding feeds back the argmax one-hot
// and the differentiable path feeds back the softmax row. Reconstruction loss
// ignores PAD positions.
class ClassManifold {
 public:
  ClassManifold() = default;
  ClassManifold(int class_label, ActivityVocabulary vocab, VaeConfig config);

  int class_label() const { return class_label_; }
  const ActivityVocabulary& vocabulary() const { return vocab_; }
  const VaeConfig& config() const { return config_; }
  int latent_dim() const { return config_.latent_dim; }
  int max_len() const { return config_.max_len; }
  const std::vector<EpochLoss>& training_curve() const { return curve_; }

  LatentPoint encode(const ActivitySequence& activities) const;
  std::vector<LatentPoint> encode_batch(const std::vector<ActivitySequence>& batch) const;

  // (max_len + 1) x vocab.size() row-stochastic matrix.
  Eigen::MatrixXd decode_probabilities(const Eigen::VectorXd& z) const;
  std::vector<Eigen::MatrixXd> decode_probabilities_batch(const Eigen::MatrixXd& z_rows) const;
  // Greedy (argmax) decode truncated at the first EOS.
  DecodedSequence decode(const Eigen::VectorXd& z) const;
  std::vector<DecodedSequence> decode_batch(const Eigen::MatrixXd& z_rows) const;

  // Differentiable decoder: z is B x r on the tape; returns max_len + 1 softmax
  // rows, each B x vocab.size(), with soft feedback between steps.
  std::vector<nn::Var> decode_rows(nn::Tape& tape, nn::Var z) const;

  // Masked NLL (teacher forced, decoded from the posterior mean) and KL,
  // both averaged over the batch.
  ElboComponents elbo_components(const std::vector<ActivitySequence>& batch) const;

  // Model artifact: class label, vocabulary (and its hash), config, parameters.
  std::string to_json() const;
  static ClassManifold from_json(const std::string& text, const ActivityVocabulary& expected_vocab);

 private:
  friend ClassManifold train_class_vae(const PrefixLog&, const ActivityVocabulary&, const VaeConfig&);

  struct EncoderOutput {
    nn::Var mu;
    nn::Var logvar;
  };
  EncoderOutput encoder_forward(nn::Tape& tape, const std::vector<Eigen::MatrixXd>& steps,
                                const std::vector<Eigen::MatrixXd>& masks) const;
  nn::Var decoder_input(nn::Tape& tape, nn::Var z, nn::Var previous, int t) const;
  nn::LstmCell::State decoder_start(nn::Tape& tape, nn::Var z) const;
  std::vector<nn::Var> decoder_logits_teacher(nn::Tape& tape, nn::Var z,
                                              const std::vector<Eigen::MatrixXd>& targets) const;
  std::vector<Eigen::MatrixXd> decode_greedy(const Eigen::MatrixXd& z_rows) const;
  std::vector<nn::Parameter*> parameters();

  int class_label_ = 0;
  ActivityVocabulary vocab_;
  VaeConfig config_;
  nn::LstmCell encoder_;
  nn::Linear to_mu_;
  nn::Linear to_logvar_;
  nn::Linear to_hidden_;
  nn::Linear to_cell_;
  nn::LstmCell decoder_;
  nn::Linear to_vocab_;
  std::vector<EpochLoss> curve_;
};

// Trains one manifold on prefixes that all carry the same label. Throws
// TrainingError on an empty set, mixed labels or a non-finite loss.
ClassManifold train_class_vae(const PrefixLog& prefixes, const ActivityVocabulary& vocab,
                              const VaeConfig& config);

}  // namespace latentadv
