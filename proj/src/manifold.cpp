#include "latentadv/manifold.hpp"

#include <cmath>
#include <numeric>

#include <json.hpp>

#include "latentadv/errors.hpp"
#include "latentadv/nn/sequence_batch.hpp"
#include "latentadv/nn/serialize.hpp"
#include "latentadv/rng.hpp"

namespace latentadv {

using nn::Matrix;
using nn::Tape;
using nn::Var;

void VaeConfig::validate(int vocab_size) const {
  const long flat = static_cast<long>(max_len + 1) * vocab_size;
  if (latent_dim < 1 || latent_dim > flat) {
    throw ConfigError("latent_dim must lie in [1, " + std::to_string(flat) + "], got " +
                      std::to_string(latent_dim));
  }
  if (hidden_size < 1 || epochs < 1 || batch_size < 1 || max_len < 1) {
    throw ConfigError("VAE hidden_size, epochs, batch_size and max_len must be positive");
  }
  if (!(learning_rate > 0.0)) throw ConfigError("VAE learning_rate must be positive");
  if (kl_weight < 0.0) throw ConfigError("VAE kl_weight must be non-negative");
  if (kl_warmup_epochs < 0) throw ConfigError("VAE kl_warmup_epochs must be non-negative");
}

Eigen::VectorXd reparameterize(const LatentPoint& point, const Eigen::VectorXd& eps) {
  if (eps.size() != point.mu.size() || point.sigma.size() != point.mu.size()) {
    throw std::invalid_argument("reparameterize: eps has length " + std::to_string(eps.size()) +
                                ", latent dimension is " + std::to_string(point.mu.size()));
  }
  return point.mu + eps.cwiseProduct(point.sigma);
}

double gaussian_kl(const LatentPoint& point) {
  double kl = 0.0;
  for (Eigen::Index i = 0; i < point.mu.size(); ++i) {
    const double var = point.sigma(i) * point.sigma(i);
    kl += point.mu(i) * point.mu(i) + var - 1.0 - std::log(var);
  }
  return 0.5 * kl;
}

double masked_nll(const Eigen::MatrixXd& probs, const SequenceMatrix& target) {
  if (probs.rows() != target.rows.rows() || probs.cols() != target.rows.cols()) {
    throw std::invalid_argument("masked_nll: shape mismatch");
  }
  double nll = 0.0;
  for (Eigen::Index t = 0; t < probs.rows(); ++t) {
    if (!target.mask[static_cast<std::size_t>(t)]) continue;
    nll -= std::log(probs(t, argmax_row(target.rows.row(t))));
  }
  return nll;
}

ClassManifold::ClassManifold(int class_label, ActivityVocabulary vocab, VaeConfig config)
    : class_label_(class_label), vocab_(std::move(vocab)), config_(config) {
  config_.validate(vocab_.size());
  Rng rng = Rng::derive(config_.seed, "vae-init", {static_cast<std::uint64_t>(class_label)});
  const int v = vocab_.size();
  const int h = config_.hidden_size;
  const int r = config_.latent_dim;
  encoder_ = nn::LstmCell(v, h, rng);
  to_mu_ = nn::Linear(h, r, rng);
  to_logvar_ = nn::Linear(h, r, rng);
  to_hidden_ = nn::Linear(r, h, rng);
  to_cell_ = nn::Linear(r, h, rng);
  decoder_ = nn::LstmCell(r + v + config_.max_len + 1, h, rng);
  to_vocab_ = nn::Linear(h, v, rng);
}

std::vector<nn::Parameter*> ClassManifold::parameters() {
  std::vector<nn::Parameter*> out = encoder_.parameters();
  for (auto* layer : {&to_mu_, &to_logvar_, &to_hidden_, &to_cell_}) {
    for (auto* p : layer->parameters()) out.push_back(p);
  }
  for (auto* p : decoder_.parameters()) out.push_back(p);
  for (auto* p : to_vocab_.parameters()) out.push_back(p);
  return out;
}

ClassManifold::EncoderOutput ClassManifold::encoder_forward(
    Tape& tape, const std::vector<Eigen::MatrixXd>& steps,
    const std::vector<Eigen::MatrixXd>& masks) const {
  const Eigen::Index b = steps.front().rows();
  nn::LstmCell::State state{tape.constant(Matrix::Zero(b, config_.hidden_size)),
                            tape.constant(Matrix::Zero(b, config_.hidden_size))};
  for (std::size_t t = 0; t < steps.size(); ++t) {
    // Rows past a member's EOS keep their previous state.
    if (masks[t].sum() == 0.0) break;
    auto next = encoder_.step(tape, tape.constant(steps[t]), state);
    Var mask = tape.constant(masks[t]);
    state.h = tape.add(state.h, tape.mul_col(tape.sub(next.h, state.h), mask));
    state.c = tape.add(state.c, tape.mul_col(tape.sub(next.c, state.c), mask));
  }
  return {to_mu_.forward(tape, state.h), to_logvar_.forward(tape, state.h)};
}

Var ClassManifold::decoder_input(Tape& tape, Var z, Var previous, int t) const {
  const int steps = config_.max_len + 1;
  Matrix position = Matrix::Zero(z.rows(), steps);
  position.col(t).setOnes();
  return tape.concat_cols(tape.concat_cols(z, previous), tape.constant(std::move(position)));
}

nn::LstmCell::State ClassManifold::decoder_start(Tape& tape, Var z) const {
  return {tape.tanh(to_hidden_.forward(tape, z)), tape.tanh(to_cell_.forward(tape, z))};
}

std::vector<Var> ClassManifold::decoder_logits_teacher(Tape& tape, Var z,
                                                       const std::vector<Matrix>& targets) const {
  auto state = decoder_start(tape, z);
  std::vector<Var> logits;
  Var previous = tape.constant(Matrix::Zero(z.rows(), vocab_.size()));
  for (int t = 0; t <= config_.max_len; ++t) {
    state = decoder_.step(tape, decoder_input(tape, z, previous, t), state);
    logits.push_back(to_vocab_.forward(tape, state.h));
    previous = tape.constant(targets[static_cast<std::size_t>(t)]);
  }
  return logits;
}

std::vector<Var> ClassManifold::decode_rows(Tape& tape, Var z) const {
  if (z.cols() != config_.latent_dim) {
    throw std::invalid_argument("decode: z has " + std::to_string(z.cols()) +
                                " columns, latent dimension is " + std::to_string(config_.latent_dim));
  }
  auto state = decoder_start(tape, z);
  std::vector<Var> rows;
  Var previous = tape.constant(Matrix::Zero(z.rows(), vocab_.size()));
  for (int t = 0; t <= config_.max_len; ++t) {
    state = decoder_.step(tape, decoder_input(tape, z, previous, t), state);
    Var probs = tape.softmax_rows(to_vocab_.forward(tape, state.h));
    rows.push_back(probs);
    previous = probs;
  }
  return rows;
}

std::vector<Matrix> ClassManifold::decode_greedy(const Matrix& z_rows) const {
  if (z_rows.cols() != config_.latent_dim) {
    throw std::invalid_argument("decode: z has " + std::to_string(z_rows.cols()) +
                                " columns, latent dimension is " + std::to_string(config_.latent_dim));
  }
  Tape tape;
  Var z = tape.constant(z_rows);
  auto state = decoder_start(tape, z);
  std::vector<Matrix> rows;
  Matrix previous = Matrix::Zero(z_rows.rows(), vocab_.size());
  for (int t = 0; t <= config_.max_len; ++t) {
    state = decoder_.step(tape, decoder_input(tape, z, tape.constant(previous), t), state);
    Var probs = tape.softmax_rows(to_vocab_.forward(tape, state.h));
    rows.push_back(probs.value());
    previous.setZero();
    for (Eigen::Index i = 0; i < z_rows.rows(); ++i) previous(i, argmax_row(probs.value().row(i))) = 1.0;
  }
  return rows;
}

std::vector<LatentPoint> ClassManifold::encode_batch(const std::vector<ActivitySequence>& batch) const {
  if (batch.empty()) return {};
  std::vector<SequenceMatrix> encoded;
  encoded.reserve(batch.size());
  for (const auto& seq : batch) encoded.push_back(onehot_encode(seq, vocab_, config_.max_len));
  std::vector<const SequenceMatrix*> members;
  for (const auto& m : encoded) members.push_back(&m);
  const nn::SequenceBatch sb = nn::make_batch(members);

  Tape tape;
  const auto out = encoder_forward(tape, sb.steps, sb.masks);
  std::vector<LatentPoint> points(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    points[i].mu = out.mu.value().row(row).transpose();
    points[i].sigma = (0.5 * out.logvar.value().row(row).array()).exp().matrix().transpose();
  }
  return points;
}

LatentPoint ClassManifold::encode(const ActivitySequence& activities) const {
  return encode_batch({activities}).front();
}

std::vector<Eigen::MatrixXd> ClassManifold::decode_probabilities_batch(const Eigen::MatrixXd& z_rows) const {
  const auto rows = decode_greedy(z_rows);
  std::vector<Eigen::MatrixXd> out(static_cast<std::size_t>(z_rows.rows()),
                                   Eigen::MatrixXd(config_.max_len + 1, vocab_.size()));
  for (std::size_t t = 0; t < rows.size(); ++t) {
    const Matrix& step = rows[t];
    for (Eigen::Index i = 0; i < z_rows.rows(); ++i) {
      out[static_cast<std::size_t>(i)].row(static_cast<Eigen::Index>(t)) = step.row(i);
    }
  }
  return out;
}

Eigen::MatrixXd ClassManifold::decode_probabilities(const Eigen::VectorXd& z) const {
  return decode_probabilities_batch(z.transpose()).front();
}

std::vector<DecodedSequence> ClassManifold::decode_batch(const Eigen::MatrixXd& z_rows) const {
  std::vector<DecodedSequence> out;
  for (const auto& probs : decode_probabilities_batch(z_rows)) {
    out.push_back(decode_sequence(probs, vocab_));
  }
  return out;
}

DecodedSequence ClassManifold::decode(const Eigen::VectorXd& z) const {
  if (z.size() != config_.latent_dim) {
    throw std::invalid_argument("decode: z has length " + std::to_string(z.size()) +
                                ", latent dimension is " + std::to_string(config_.latent_dim));
  }
  return decode_sequence(decode_probabilities(z), vocab_);
}

ElboComponents ClassManifold::elbo_components(const std::vector<ActivitySequence>& batch) const {
  if (batch.empty()) throw std::invalid_argument("elbo_components: empty batch");
  std::vector<SequenceMatrix> encoded;
  for (const auto& seq : batch) encoded.push_back(onehot_encode(seq, vocab_, config_.max_len));
  std::vector<const SequenceMatrix*> members;
  for (const auto& m : encoded) members.push_back(&m);
  const nn::SequenceBatch sb = nn::make_batch(members);

  Tape tape;
  const auto enc = encoder_forward(tape, sb.steps, sb.masks);
  const auto logits = decoder_logits_teacher(tape, enc.mu, sb.steps);
  ElboComponents out;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    Eigen::MatrixXd probs(config_.max_len + 1, vocab_.size());
    for (std::size_t t = 0; t < logits.size(); ++t) {
      const Eigen::RowVectorXd l = logits[t].value().row(row);
      const Eigen::RowVectorXd e = (l.array() - l.maxCoeff()).exp().matrix();
      probs.row(static_cast<Eigen::Index>(t)) = e / e.sum();
    }
    out.nll += masked_nll(probs, encoded[i]);
    LatentPoint point{enc.mu.value().row(row).transpose(),
                      (0.5 * enc.logvar.value().row(row).array()).exp().matrix().transpose()};
    out.kl += gaussian_kl(point);
  }
  out.nll /= static_cast<double>(batch.size());
  out.kl /= static_cast<double>(batch.size());
  return out;
}

ClassManifold train_class_vae(const PrefixLog& prefixes, const ActivityVocabulary& vocab,
                              const VaeConfig& config) {
  if (prefixes.prefixes.empty()) throw TrainingError("VAE training set is empty");
  const int label = prefixes.prefixes.front().label;
  for (const auto& p : prefixes.prefixes) {
    if (p.label != label) throw TrainingError("VAE training prefixes carry mixed labels");
  }

  ClassManifold model(label, vocab, config);
  std::vector<SequenceMatrix> data;
  data.reserve(prefixes.prefixes.size());
  for (const auto& p : prefixes.prefixes) data.push_back(onehot_encode(p, vocab, config.max_len));

  const int r = config.latent_dim;
  nn::Adam optimizer(model.parameters(), nn::AdamOptions{.learning_rate = config.learning_rate});
  Rng rng = Rng::derive(config.seed, "vae-train", {static_cast<std::uint64_t>(label)});
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double kl_scale =
        config.kl_warmup_epochs > 0
            ? std::min(1.0, static_cast<double>(epoch + 1) / config.kl_warmup_epochs)
            : 1.0;
    rng.shuffle(order);
    EpochLoss sums;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      std::vector<const SequenceMatrix*> members;
      for (std::size_t k = start; k < end; ++k) members.push_back(&data[order[k]]);
      const nn::SequenceBatch sb = nn::make_batch(members);
      const auto b = static_cast<Eigen::Index>(members.size());

      Matrix eps(b, r);
      for (Eigen::Index i = 0; i < b; ++i) {
        for (int j = 0; j < r; ++j) eps(i, j) = rng.normal();
      }

      Tape tape(/*track_parameters=*/true);
      const auto enc = model.encoder_forward(tape, sb.steps, sb.masks);
      Var sigma = tape.exp(tape.affine(enc.logvar, 0.5, 0.0));
      Var z = tape.add(enc.mu, tape.mul(tape.constant(eps), sigma));
      const auto logits = model.decoder_logits_teacher(tape, z, sb.steps);

      // Masked reconstruction term: one-hot targets times log-probabilities,
      // rows scaled by the non-PAD mask.
      Var nll;
      for (std::size_t t = 0; t < logits.size(); ++t) {
        Var logp = tape.log_softmax_rows(logits[t]);
        Var picked = tape.mul_col(tape.mul(logp, tape.constant(sb.steps[t])), tape.constant(sb.masks[t]));
        Var term = tape.sum(picked);
        nll = t == 0 ? term : tape.add(nll, term);
      }
      nll = tape.affine(nll, -1.0 / static_cast<double>(b), 0.0);
      Var kl_terms = tape.sub(tape.add(tape.square(enc.mu), tape.exp(enc.logvar)),
                              tape.affine(enc.logvar, 1.0, 1.0));
      Var kl = tape.affine(tape.sum(kl_terms), 0.5 / static_cast<double>(b), 0.0);
      Var loss = tape.add(nll, tape.affine(kl, config.kl_weight * kl_scale, 0.0));

      const double loss_value = loss.value()(0, 0);
      if (!std::isfinite(loss_value)) {
        throw TrainingError("VAE loss diverged (non-finite) at epoch " + std::to_string(epoch + 1));
      }
      optimizer.zero_grad();
      tape.backward(loss);
      optimizer.step();

      sums.nll += nll.value()(0, 0) * static_cast<double>(b);
      sums.kl += kl.value()(0, 0) * static_cast<double>(b);
    }
    const auto n = static_cast<double>(data.size());
    EpochLoss epoch_loss{sums.nll / n, sums.kl / n, 0.0};
    epoch_loss.total = epoch_loss.nll + config.kl_weight * epoch_loss.kl;
    model.curve_.push_back(epoch_loss);
  }
  return model;
}

std::string ClassManifold::to_json() const {
  nlohmann::json j;
  j["format"] = "latentadv.manifold";
  j["version"] = 1;
  j["class_label"] = class_label_;
  j["vocab_hash"] = std::to_string(vocab_.hash());
  j["vocabulary"] = vocab_.activities();
  j["config"] = {{"latent_dim", config_.latent_dim},   {"hidden_size", config_.hidden_size},
                 {"epochs", config_.epochs},           {"learning_rate", config_.learning_rate},
                 {"kl_weight", config_.kl_weight},     {"kl_warmup_epochs", config_.kl_warmup_epochs},
                 {"batch_size", config_.batch_size},
                 {"seed", std::to_string(config_.seed)}, {"max_len", config_.max_len}};
  nlohmann::json curve = nlohmann::json::array();
  for (const auto& e : curve_) curve.push_back({e.nll, e.kl, e.total});
  j["training_curve"] = curve;
  j["parameters"] = nn::parameters_to_json(const_cast<ClassManifold*>(this)->parameters());
  return j.dump();
}

ClassManifold ClassManifold::from_json(const std::string& text, const ActivityVocabulary& expected_vocab) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ArtifactError(std::string("manifold artifact is not valid JSON: ") + e.what());
  }
  if (j.value("format", "") != "latentadv.manifold") throw ArtifactError("not a manifold artifact");
  if (j.at("vocab_hash").get<std::string>() != std::to_string(expected_vocab.hash())) {
    throw ArtifactError("manifold artifact was trained on a different vocabulary");
  }
  const auto& c = j.at("config");
  VaeConfig config;
  config.latent_dim = c.at("latent_dim").get<int>();
  config.hidden_size = c.at("hidden_size").get<int>();
  config.epochs = c.at("epochs").get<int>();
  config.learning_rate = c.at("learning_rate").get<double>();
  config.kl_weight = c.at("kl_weight").get<double>();
  config.kl_warmup_epochs = c.at("kl_warmup_epochs").get<int>();
  config.batch_size = c.at("batch_size").get<int>();
  config.seed = std::stoull(c.at("seed").get<std::string>());
  config.max_len = c.at("max_len").get<int>();
  ClassManifold m(j.at("class_label").get<int>(), expected_vocab, config);
  nn::parameters_from_json(j.at("parameters"), m.parameters());
  for (const auto& e : j.at("training_curve")) {
    m.curve_.push_back({e[0].get<double>(), e[1].get<double>(), e[2].get<double>()});
  }
  return m;
}

}  // namespace latentadv
