#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

namespace leakage::nn {

using Matrix = Eigen::MatrixXd;   // batch rows x features
using RowVector = Eigen::RowVectorXd;

enum class Activation { kLeakyRelu, kRelu, kSigmoid, kIdentity, kSoftmax };

inline constexpr double kLeakySlope = 0.01;

std::string to_string(Activation a);
Activation parse_activation(const std::string& s);

struct LayerSpec {
  int in_dim = 0;
  int out_dim = 0;
  Activation activation = Activation::kIdentity;
};

/// Chains widths {w0, w1, ..., wn} with `hidden` between layers and `last` on the output layer.
std::vector<LayerSpec> chain(const std::vector<int>& widths, Activation hidden, Activation last);

struct ForwardCache {
  std::vector<Matrix> pre;   // z_l, one per layer
  std::vector<Matrix> post;  // post[0] = input, post[l+1] = activation(z_l)
  [[nodiscard]] const Matrix& output() const { return post.back(); }
};

struct Gradients {
  std::vector<Matrix> weights;  // same shapes as MLP::weights
  std::vector<RowVector> biases;
  Matrix input;                 // dL/dx
};

class MLP {
 public:
  MLP() = default;
  MLP(std::vector<LayerSpec> layers, std::uint64_t init_seed);

  [[nodiscard]] ForwardCache forward(const Matrix& batch) const;
  [[nodiscard]] Matrix predict(const Matrix& batch) const;

  /// Reverse pass given dL/d(output); `output_grad` has the shape of the network output.
  [[nodiscard]] Gradients backward(const ForwardCache& cache, const Matrix& output_grad) const;

  [[nodiscard]] const std::vector<LayerSpec>& layers() const noexcept { return layers_; }
  [[nodiscard]] int in_dim() const { return layers_.front().in_dim; }
  [[nodiscard]] int out_dim() const { return layers_.back().out_dim; }
  [[nodiscard]] std::uint64_t init_seed() const noexcept { return init_seed_; }
  [[nodiscard]] std::size_t parameter_count() const;

  std::vector<Matrix>& weights() noexcept { return weights_; }
  std::vector<RowVector>& biases() noexcept { return biases_; }
  [[nodiscard]] const std::vector<Matrix>& weights() const noexcept { return weights_; }
  [[nodiscard]] const std::vector<RowVector>& biases() const noexcept { return biases_; }

  /// Parameters in layer order, each layer as W (row-major, in x out) then b.
  [[nodiscard]] std::vector<double> flatten() const;
  void unflatten(const std::vector<double>& flat);

  [[nodiscard]] nlohmann::json architecture() const;
  static MLP from_architecture(const nlohmann::json& j);

 private:
  std::vector<LayerSpec> layers_;
  std::vector<Matrix> weights_;  // in x out
  std::vector<RowVector> biases_;
  std::uint64_t init_seed_ = 0;
};

void apply_activation(Activation a, const Matrix& z, Matrix& out);

// ---------------------------------------------------------------------------
// Losses: mean over every element (BCE, MSE) or over rows (CE). The gradient is w.r.t.
// the argument passed in.

struct LossResult {
  double loss = 0.0;
  Matrix grad;
};

inline constexpr double kProbClip = 1e-7;

LossResult bce_with_logits(const Matrix& logits, const Matrix& targets);
LossResult bce_on_probabilities(const Matrix& probs, const Matrix& targets);
LossResult ce_with_logits(const Matrix& logits, const std::vector<int>& labels);
LossResult ce_on_probabilities(const Matrix& probs, const std::vector<int>& labels);
LossResult mse(const Matrix& pred, const Matrix& targets);

Matrix sigmoid(const Matrix& z);
Matrix softmax_rows(const Matrix& z);

// ---------------------------------------------------------------------------

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct OptimizerState {
  AdamOptions options;
  std::vector<Matrix> m_w, v_w;
  std::vector<RowVector> m_b, v_b;
  std::int64_t step = 0;

  OptimizerState() = default;
  OptimizerState(const MLP& model, AdamOptions opts = {});
};

void adam_step(MLP& model, const Gradients& grads, OptimizerState& state);

// ---------------------------------------------------------------------------

enum class LossKind { kBceLogits, kBceProbabilities, kCeLogits, kCeProbabilities, kMse };

struct TrainOptions {
  int epochs = 200;
  int batch_size = 512;
  std::uint64_t seed = 0;
  AdamOptions adam;
};

struct TrainingLog {
  std::vector<double> epoch_loss;
};

/// Row-shuffled minibatch Adam. For the CE losses `targets` is an N x 1 matrix of class ids.
TrainingLog train(MLP& model, const Matrix& inputs, const Matrix& targets, LossKind loss,
                  const TrainOptions& options);

/// Seeded permutation of 0..n-1 for the given epoch.
std::vector<Eigen::Index> epoch_permutation(Eigen::Index n, std::uint64_t seed, int epoch);

Matrix gather_rows(const Matrix& m, const std::vector<Eigen::Index>& perm, Eigen::Index begin,
                   Eigen::Index end);

}  // namespace leakage::nn
