#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "leakage/error.hpp"
#include "leakage/nn.hpp"

using namespace leakage;
using namespace leakage::nn;

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

}  // namespace

TEST(Mlp, IdentityLayer) {
  MLP net({{3, 3, Activation::kIdentity}}, 1);
  net.weights()[0] = Matrix::Identity(3, 3);
  net.biases()[0].setZero();
  const Matrix x = random_matrix(5, 3, 2);
  EXPECT_EQ(net.predict(x), x);
}

TEST(Mlp, Activations) {
  Matrix z(1, 3);
  z << 0.0, -1.0, 2.0;
  Matrix out;
  apply_activation(Activation::kSigmoid, z, out);
  EXPECT_DOUBLE_EQ(out(0, 0), 0.5);
  apply_activation(Activation::kLeakyRelu, z, out);
  EXPECT_DOUBLE_EQ(out(0, 1), -0.01);
  EXPECT_DOUBLE_EQ(out(0, 2), 2.0);
  apply_activation(Activation::kRelu, z, out);
  EXPECT_DOUBLE_EQ(out(0, 1), 0.0);
  apply_activation(Activation::kSoftmax, z, out);
  EXPECT_NEAR(out.sum(), 1.0, 1e-15);
}

TEST(Mlp, ShapeMismatch) {
  EXPECT_THROW(MLP({{3, 4, Activation::kIdentity}, {5, 1, Activation::kIdentity}}, 1), ConfigError);
  MLP net({{3, 2, Activation::kIdentity}}, 1);
  EXPECT_THROW((void)net.predict(Matrix::Zero(2, 4)), ShapeError);
}

TEST(Mlp, ZeroOutputGradientGivesZeroGradients) {
  MLP net(chain({4, 6, 3}, Activation::kLeakyRelu, Activation::kIdentity), 3);
  const auto cache = net.forward(random_matrix(7, 4, 4));
  const auto g = net.backward(cache, Matrix::Zero(7, 3));
  for (const auto& w : g.weights) EXPECT_EQ(w.cwiseAbs().maxCoeff(), 0.0);
  for (const auto& b : g.biases) EXPECT_EQ(b.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Mlp, FlattenRoundTrip) {
  MLP a(chain({3, 5, 2}, Activation::kSigmoid, Activation::kIdentity), 5);
  MLP b(a.layers(), 99);
  b.unflatten(a.flatten());
  EXPECT_EQ(a.flatten(), b.flatten());
  EXPECT_EQ(a.flatten().size(), a.parameter_count());
  EXPECT_THROW(b.unflatten(std::vector<double>(3)), ShapeError);
  const MLP c = MLP::from_architecture(a.architecture());
  EXPECT_EQ(c.layers().size(), a.layers().size());
}

TEST(Mlp, FiniteDifferenceSpotCheck) {
  MLP net(chain({3, 5, 4, 2}, Activation::kLeakyRelu, Activation::kIdentity), 6);
  const Matrix x = random_matrix(6, 3, 7);
  const std::vector<int> labels = {0, 1, 1, 0, 1, 0};
  const auto g = net.backward(net.forward(x), ce_with_logits(net.forward(x).output(), labels).grad);
  const double h = 1e-6;
  for (std::size_t l = 0; l < net.weights().size(); ++l) {
    for (Eigen::Index i = 0; i < net.weights()[l].size(); ++i) {
      MLP p = net, m = net;
      p.weights()[l].data()[i] += h;
      m.weights()[l].data()[i] -= h;
      const double num =
          (ce_with_logits(p.predict(x), labels).loss - ce_with_logits(m.predict(x), labels).loss) / (2 * h);
      EXPECT_NEAR(g.weights[l].data()[i], num, 1e-7 + 1e-5 * std::abs(num));
    }
  }
}

TEST(Losses, KnownValues) {
  const Matrix half = Matrix::Constant(3, 2, 0.5);
  const Matrix t = (Matrix(3, 2) << 0, 1, 1, 0, 1, 1).finished();
  EXPECT_NEAR(bce_on_probabilities(half, t).loss, std::log(2.0), 1e-12);
  EXPECT_NEAR(bce_with_logits(Matrix::Zero(3, 2), t).loss, std::log(2.0), 1e-12);
  EXPECT_NEAR(ce_with_logits(Matrix::Zero(2, 4), {0, 3}).loss, std::log(4.0), 1e-12);
  EXPECT_NEAR(ce_on_probabilities(Matrix::Constant(2, 4, 0.25), {1, 2}).loss, std::log(4.0), 1e-12);
  EXPECT_NEAR(bce_on_probabilities(t, t).loss, 0.0, 1e-6);
  EXPECT_NEAR(mse(t, t).loss, 0.0, 0.0);
}

TEST(Losses, DomainErrors) {
  EXPECT_THROW(ce_with_logits(Matrix::Zero(2, 3), {0, 3}), DomainError);
  EXPECT_THROW(bce_with_logits(Matrix::Zero(1, 1), Matrix::Constant(1, 1, 2.0)), DomainError);
  EXPECT_THROW(mse(Matrix::Zero(2, 2), Matrix::Zero(2, 3)), ShapeError);
}

TEST(Losses, SoftmaxRowsStable) {
  const Matrix z = (Matrix(1, 3) << 1000.0, 1000.0, -1000.0).finished();
  const Matrix p = softmax_rows(z);
  EXPECT_NEAR(p(0, 0), 0.5, 1e-12);
  EXPECT_TRUE(p.allFinite());
}

TEST(Adam, ZeroGradientsKeepParameters) {
  MLP net(chain({2, 3, 1}, Activation::kLeakyRelu, Activation::kIdentity), 8);
  const auto before = net.flatten();
  OptimizerState st(net);
  st.m_w[0].setConstant(1.0);
  Gradients g;
  for (const auto& w : net.weights()) g.weights.push_back(Matrix::Zero(w.rows(), w.cols()));
  for (const auto& b : net.biases()) g.biases.push_back(RowVector::Zero(b.size()));
  // With zero first moments nothing moves; non-zero moments only decay.
  st.m_w[0].setZero();
  adam_step(net, g, st);
  EXPECT_EQ(net.flatten(), before);
  EXPECT_EQ(st.step, 1);
}

TEST(Adam, Deterministic) {
  auto run = [] {
    MLP net(chain({2, 4, 1}, Activation::kLeakyRelu, Activation::kIdentity), 9);
    OptimizerState st(net);
    const Matrix x = random_matrix(8, 2, 10);
    const Matrix y = random_matrix(8, 1, 11);
    for (int i = 0; i < 5; ++i) adam_step(net, net.backward(net.forward(x), mse(net.predict(x), y).grad), st);
    return net.flatten();
  };
  EXPECT_EQ(run(), run());
}

TEST(Train, ZeroEpochsLeavesModel) {
  MLP net(chain({2, 4, 1}, Activation::kLeakyRelu, Activation::kIdentity), 12);
  const auto before = net.flatten();
  TrainOptions o;
  o.epochs = 0;
  train(net, random_matrix(10, 2, 1), random_matrix(10, 1, 2), LossKind::kMse, o);
  EXPECT_EQ(net.flatten(), before);
}

TEST(Train, LearnsXor) {
  const Matrix x = (Matrix(4, 2) << 0, 0, 0, 1, 1, 0, 1, 1).finished();
  const Matrix y = (Matrix(4, 1) << 0, 1, 1, 0).finished();
  MLP net(chain({2, 8, 8, 1}, Activation::kSigmoid, Activation::kSigmoid), 13);
  TrainOptions o;
  o.epochs = 2000;
  o.batch_size = 4;
  o.adam.learning_rate = 1e-2;
  train(net, x, y, LossKind::kBceProbabilities, o);
  const Matrix p = net.predict(x);
  for (int r = 0; r < 4; ++r) EXPECT_EQ(p(r, 0) > 0.5 ? 1.0 : 0.0, y(r, 0)) << r;
}

TEST(Train, SameSeedBitIdentical) {
  auto run = [] {
    MLP net(chain({3, 6, 2}, Activation::kLeakyRelu, Activation::kIdentity), 14);
    Matrix labels(40, 1);
    for (int r = 0; r < 40; ++r) labels(r, 0) = r % 2;
    TrainOptions o;
    o.epochs = 5;
    o.batch_size = 16;
    o.seed = 3;
    train(net, random_matrix(40, 3, 15), labels, LossKind::kCeLogits, o);
    return net.flatten();
  };
  EXPECT_EQ(run(), run());
}
