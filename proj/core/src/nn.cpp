#include "leakage/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "leakage/error.hpp"
#include "leakage/random.hpp"

namespace leakage::nn {

std::string to_string(Activation a) {
  switch (a) {
    case Activation::kLeakyRelu: return "leaky_relu";
    case Activation::kRelu: return "relu";
    case Activation::kSigmoid: return "sigmoid";
    case Activation::kIdentity: return "identity";
    case Activation::kSoftmax: return "softmax";
  }
  return "identity";
}

Activation parse_activation(const std::string& s) {
  if (s == "leaky_relu") return Activation::kLeakyRelu;
  if (s == "relu") return Activation::kRelu;
  if (s == "sigmoid") return Activation::kSigmoid;
  if (s == "identity") return Activation::kIdentity;
  if (s == "softmax") return Activation::kSoftmax;
  throw ConfigError("unknown activation '" + s + "'");
}

std::vector<LayerSpec> chain(const std::vector<int>& widths, Activation hidden, Activation last) {
  if (widths.size() < 2) throw ConfigError("a network needs at least two widths");
  std::vector<LayerSpec> out;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    out.push_back({widths[i], widths[i + 1], i + 2 == widths.size() ? last : hidden});
  }
  return out;
}

Matrix sigmoid(const Matrix& z) {
  return z.unaryExpr([](double v) {
    if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
  });
}

Matrix softmax_rows(const Matrix& z) {
  Matrix out(z.rows(), z.cols());
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    const double mx = z.row(r).maxCoeff();
    out.row(r) = (z.row(r).array() - mx).exp().matrix();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

void apply_activation(Activation a, const Matrix& z, Matrix& out) {
  switch (a) {
    case Activation::kLeakyRelu:
      out = z.unaryExpr([](double v) { return v > 0.0 ? v : kLeakySlope * v; });
      break;
    case Activation::kRelu: out = z.cwiseMax(0.0); break;
    case Activation::kSigmoid: out = sigmoid(z); break;
    case Activation::kIdentity: out = z; break;
    case Activation::kSoftmax: out = softmax_rows(z); break;
  }
}

MLP::MLP(std::vector<LayerSpec> layers, std::uint64_t init_seed)
    : layers_(std::move(layers)), init_seed_(init_seed) {
  if (layers_.empty()) throw ConfigError("MLP needs at least one layer");
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& s = layers_[l];
    if (s.in_dim <= 0 || s.out_dim <= 0) throw ConfigError("layer dimensions must be positive");
    if (l > 0 && layers_[l - 1].out_dim != s.in_dim) throw ConfigError("layer dimensions do not chain");
    if (s.activation == Activation::kSoftmax && l + 1 != layers_.size()) {
      throw ConfigError("softmax is only allowed on the final layer");
    }
  }
  // Uniform fan-in init: bound = gain * sqrt(3 / fan_in), gain sqrt(2) for rectifiers.
  Rng rng(init_seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (const auto& s : layers_) {
    const bool rect = s.activation == Activation::kRelu || s.activation == Activation::kLeakyRelu;
    const double bound = (rect ? std::sqrt(2.0) : 1.0) * std::sqrt(3.0 / s.in_dim);
    Matrix w(s.in_dim, s.out_dim);
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = bound * unit(rng);
    }
    weights_.push_back(std::move(w));
    biases_.push_back(RowVector::Zero(s.out_dim));
  }
}

ForwardCache MLP::forward(const Matrix& batch) const {
  if (batch.cols() != in_dim()) {
    throw ShapeError("forward: batch has " + std::to_string(batch.cols()) + " columns, expected " +
                     std::to_string(in_dim()));
  }
  ForwardCache cache;
  cache.pre.reserve(layers_.size());
  cache.post.reserve(layers_.size() + 1);
  cache.post.push_back(batch);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Matrix z = cache.post.back() * weights_[l];
    z.rowwise() += biases_[l];
    Matrix a;
    apply_activation(layers_[l].activation, z, a);
    cache.pre.push_back(std::move(z));
    cache.post.push_back(std::move(a));
  }
  return cache;
}

Matrix MLP::predict(const Matrix& batch) const { return forward(batch).post.back(); }

Gradients MLP::backward(const ForwardCache& cache, const Matrix& output_grad) const {
  if (cache.pre.size() != layers_.size()) throw ShapeError("backward: cache from a different network");
  const Matrix& out = cache.post.back();
  if (output_grad.rows() != out.rows() || output_grad.cols() != out.cols()) {
    throw ShapeError("backward: gradient shape does not match network output");
  }
  Gradients g;
  g.weights.resize(layers_.size());
  g.biases.resize(layers_.size());
  Matrix delta = output_grad;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    const Matrix& z = cache.pre[l];
    const Matrix& a = cache.post[l + 1];
    switch (layers_[l].activation) {
      case Activation::kLeakyRelu:
        delta = delta.cwiseProduct(z.unaryExpr([](double v) { return v > 0.0 ? 1.0 : kLeakySlope; }));
        break;
      case Activation::kRelu:
        delta = delta.cwiseProduct(z.unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; }));
        break;
      case Activation::kSigmoid:
        delta = delta.cwiseProduct(a.cwiseProduct((1.0 - a.array()).matrix()));
        break;
      case Activation::kIdentity: break;
      case Activation::kSoftmax: {
        // J^T g = a * (g - <g, a>) row by row
        const Eigen::VectorXd dot = delta.cwiseProduct(a).rowwise().sum();
        delta = a.cwiseProduct((delta.colwise() - dot));
        break;
      }
    }
    g.weights[l] = cache.post[l].transpose() * delta;
    g.biases[l] = delta.colwise().sum();
    delta = delta * weights_[l].transpose();
  }
  g.input = std::move(delta);
  return g;
}

std::size_t MLP::parameter_count() const {
  std::size_t n = 0;
  for (const auto& s : layers_) n += static_cast<std::size_t>(s.in_dim + 1) * static_cast<std::size_t>(s.out_dim);
  return n;
}

std::vector<double> MLP::flatten() const {
  std::vector<double> flat;
  flat.reserve(parameter_count());
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    for (Eigen::Index i = 0; i < weights_[l].rows(); ++i) {
      for (Eigen::Index j = 0; j < weights_[l].cols(); ++j) flat.push_back(weights_[l](i, j));
    }
    for (Eigen::Index j = 0; j < biases_[l].size(); ++j) flat.push_back(biases_[l](j));
  }
  return flat;
}

void MLP::unflatten(const std::vector<double>& flat) {
  if (flat.size() != parameter_count()) {
    throw ShapeError("unflatten: expected " + std::to_string(parameter_count()) + " values, got " +
                     std::to_string(flat.size()));
  }
  std::size_t p = 0;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    for (Eigen::Index i = 0; i < weights_[l].rows(); ++i) {
      for (Eigen::Index j = 0; j < weights_[l].cols(); ++j) weights_[l](i, j) = flat[p++];
    }
    for (Eigen::Index j = 0; j < biases_[l].size(); ++j) biases_[l](j) = flat[p++];
  }
}

nlohmann::json MLP::architecture() const {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& s : layers_) {
    layers.push_back({{"in", s.in_dim}, {"out", s.out_dim}, {"activation", to_string(s.activation)}});
  }
  return {{"layers", layers}, {"init_seed", init_seed_}};
}

MLP MLP::from_architecture(const nlohmann::json& j) {
  std::vector<LayerSpec> specs;
  try {
    for (const auto& l : j.at("layers")) {
      specs.push_back({l.at("in").get<int>(), l.at("out").get<int>(),
                       parse_activation(l.at("activation").get<std::string>())});
    }
    return MLP(std::move(specs), j.value("init_seed", std::uint64_t{0}));
  } catch (const nlohmann::json::exception& e) {
    throw MissingFieldError(std::string("network architecture: ") + e.what());
  }
}

// ---------------------------------------------------------------------------

namespace {

void check_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(what) + ": prediction and target shapes differ");
  }
}

void check_binary_targets(const Matrix& t) {
  if ((t.array() < 0.0).any() || (t.array() > 1.0).any()) {
    throw DomainError("binary cross-entropy targets must lie in [0, 1]");
  }
}

void check_labels(const std::vector<int>& labels, Eigen::Index rows, Eigen::Index classes) {
  if (static_cast<Eigen::Index>(labels.size()) != rows) throw ShapeError("cross-entropy: label count differs from rows");
  for (int y : labels) {
    if (y < 0 || y >= classes) {
      throw DomainError("cross-entropy: label " + std::to_string(y) + " outside 0.." +
                        std::to_string(classes - 1));
    }
  }
}

}  // namespace

LossResult bce_with_logits(const Matrix& logits, const Matrix& targets) {
  check_same_shape(logits, targets, "bce_with_logits");
  check_binary_targets(targets);
  const auto count = static_cast<double>(logits.size());
  double total = 0.0;
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    const double z = logits.data()[i];
    const double t = targets.data()[i];
    total += std::max(z, 0.0) - z * t + std::log1p(std::exp(-std::fabs(z)));
  }
  return {total / count, (sigmoid(logits) - targets) / count};
}

LossResult bce_on_probabilities(const Matrix& probs, const Matrix& targets) {
  check_same_shape(probs, targets, "bce_on_probabilities");
  check_binary_targets(targets);
  const auto count = static_cast<double>(probs.size());
  LossResult r;
  r.grad.resize(probs.rows(), probs.cols());
  double total = 0.0;
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    const double raw = probs.data()[i];
    const double p = std::clamp(raw, kProbClip, 1.0 - kProbClip);
    const double t = targets.data()[i];
    total -= t * std::log(p) + (1.0 - t) * std::log(1.0 - p);
    const bool clipped = raw != p;
    r.grad.data()[i] = clipped ? 0.0 : (p - t) / (p * (1.0 - p)) / count;
  }
  r.loss = total / count;
  return r;
}

LossResult ce_with_logits(const Matrix& logits, const std::vector<int>& labels) {
  check_labels(labels, logits.rows(), logits.cols());
  const auto n = static_cast<double>(logits.rows());
  LossResult r;
  r.grad = softmax_rows(logits);
  double total = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double mx = logits.row(i).maxCoeff();
    const double lse = mx + std::log((logits.row(i).array() - mx).exp().sum());
    const int y = labels[static_cast<std::size_t>(i)];
    total += lse - logits(i, y);
    r.grad(i, y) -= 1.0;
  }
  r.grad /= n;
  r.loss = total / n;
  return r;
}

LossResult ce_on_probabilities(const Matrix& probs, const std::vector<int>& labels) {
  check_labels(labels, probs.rows(), probs.cols());
  const auto n = static_cast<double>(probs.rows());
  LossResult r;
  r.grad = Matrix::Zero(probs.rows(), probs.cols());
  double total = 0.0;
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    const double raw = probs(i, y);
    const double p = std::clamp(raw, kProbClip, 1.0);
    total -= std::log(p);
    if (raw == p) r.grad(i, y) = -1.0 / (p * n);
  }
  r.loss = total / n;
  return r;
}

LossResult mse(const Matrix& pred, const Matrix& targets) {
  check_same_shape(pred, targets, "mse");
  const auto count = static_cast<double>(pred.size());
  const Matrix diff = pred - targets;
  return {diff.squaredNorm() / count, 2.0 * diff / count};
}

// ---------------------------------------------------------------------------

OptimizerState::OptimizerState(const MLP& model, AdamOptions opts) : options(opts) {
  if (opts.beta1 < 0.0 || opts.beta1 >= 1.0 || opts.beta2 < 0.0 || opts.beta2 >= 1.0) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  for (std::size_t l = 0; l < model.weights().size(); ++l) {
    m_w.push_back(Matrix::Zero(model.weights()[l].rows(), model.weights()[l].cols()));
    v_w.push_back(m_w.back());
    m_b.push_back(RowVector::Zero(model.biases()[l].size()));
    v_b.push_back(m_b.back());
  }
}

namespace {

template <typename P>
void adam_update(P& param, const P& grad, P& m, P& v, const AdamOptions& o, double c1, double c2) {
  m = o.beta1 * m + (1.0 - o.beta1) * grad;
  v = o.beta2 * v + (1.0 - o.beta2) * grad.cwiseProduct(grad);
  param.array() -= o.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + o.epsilon);
}

}  // namespace

void adam_step(MLP& model, const Gradients& grads, OptimizerState& state) {
  if (grads.weights.size() != model.weights().size() || state.m_w.size() != model.weights().size()) {
    throw ShapeError("adam_step: gradient/state layer count does not match the model");
  }
  ++state.step;
  const auto& o = state.options;
  const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(state.step));
  for (std::size_t l = 0; l < model.weights().size(); ++l) {
    if (grads.weights[l].rows() != model.weights()[l].rows() ||
        grads.weights[l].cols() != model.weights()[l].cols()) {
      throw ShapeError("adam_step: gradient shape mismatch in layer " + std::to_string(l));
    }
    adam_update(model.weights()[l], grads.weights[l], state.m_w[l], state.v_w[l], o, c1, c2);
    adam_update(model.biases()[l], grads.biases[l], state.m_b[l], state.v_b[l], o, c1, c2);
  }
}

// ---------------------------------------------------------------------------

std::vector<Eigen::Index> epoch_permutation(Eigen::Index n, std::uint64_t seed, int epoch) {
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  Rng rng(derive_seed(seed, static_cast<std::uint64_t>(epoch)));
  std::shuffle(perm.begin(), perm.end(), rng);
  return perm;
}

Matrix gather_rows(const Matrix& m, const std::vector<Eigen::Index>& perm, Eigen::Index begin,
                   Eigen::Index end) {
  Matrix out(end - begin, m.cols());
  for (Eigen::Index r = begin; r < end; ++r) out.row(r - begin) = m.row(perm[static_cast<std::size_t>(r)]);
  return out;
}

TrainingLog train(MLP& model, const Matrix& inputs, const Matrix& targets, LossKind loss,
                  const TrainOptions& options) {
  if (inputs.rows() == 0) throw InsufficientSamplesError("train: empty dataset");
  if (targets.rows() != inputs.rows()) throw ShapeError("train: inputs and targets differ in rows");
  if (options.batch_size <= 0) throw ConfigError("train: batch size must be positive");

  OptimizerState state(model, options.adam);
  TrainingLog log;
  const Eigen::Index n = inputs.rows();
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    const auto perm = epoch_permutation(n, options.seed, epoch);
    double total = 0.0;
    for (Eigen::Index b = 0; b < n; b += options.batch_size) {
      const Eigen::Index e = std::min<Eigen::Index>(n, b + options.batch_size);
      const Matrix xb = gather_rows(inputs, perm, b, e);
      const Matrix tb = gather_rows(targets, perm, b, e);
      const ForwardCache cache = model.forward(xb);
      LossResult lr;
      switch (loss) {
        case LossKind::kBceLogits: lr = bce_with_logits(cache.output(), tb); break;
        case LossKind::kBceProbabilities: lr = bce_on_probabilities(cache.output(), tb); break;
        case LossKind::kMse: lr = mse(cache.output(), tb); break;
        case LossKind::kCeLogits:
        case LossKind::kCeProbabilities: {
          std::vector<int> labels(static_cast<std::size_t>(tb.rows()));
          for (Eigen::Index i = 0; i < tb.rows(); ++i) labels[static_cast<std::size_t>(i)] = static_cast<int>(tb(i, 0));
          lr = loss == LossKind::kCeLogits ? ce_with_logits(cache.output(), labels)
                                           : ce_on_probabilities(cache.output(), labels);
          break;
        }
      }
      adam_step(model, model.backward(cache, lr.grad), state);
      total += lr.loss * static_cast<double>(e - b);
    }
    log.epoch_loss.push_back(total / static_cast<double>(n));
  }
  return log;
}

}  // namespace leakage::nn
