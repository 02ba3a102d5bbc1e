#include <cmath>

#include <gtest/gtest.h>

#include "leakage/cbm.hpp"
#include "leakage/error.hpp"
#include "leakage/metrics.hpp"
#include "leakage/text_io.hpp"
#include "oracles.hpp"

using namespace leakage;

namespace {

Dataset small_toy(std::uint64_t seed = 1, TaskVariant v = TaskVariant::kOriginal) {
  TabularToyConfig cfg;
  cfg.n = 1500;
  cfg.seed = seed;
  cfg.variant = v;
  return gen_tabular_toy(cfg);
}

CBMConfig quick_cbm(Encoding e, double lambda) {
  CBMConfig c;
  c.encoding = e;
  c.strategy = e == Encoding::kHard ? Strategy::kIndependent : Strategy::kJoint;
  c.lambda = lambda;
  c.epochs = 30;
  c.head_epochs = 30;
  c.batch_size = 128;
  c.seed = 4;
  return c;
}

CEMConfig quick_cem() {
  CEMConfig c;
  c.embedding_dim = 4;
  c.epochs = 5;
  c.batch_size = 128;
  c.p_int = 0.25;
  c.seed = 5;
  return c;
}

}  // namespace

TEST(CbmConfig, Validation) {
  CBMConfig c;
  c.encoding = Encoding::kHard;
  c.strategy = Strategy::kJoint;
  EXPECT_THROW(validate(c), ConfigError);
  c.encoding = Encoding::kSoft;
  c.lambda = -1.0;
  EXPECT_THROW(validate(c), ConfigError);
  c.lambda = 0.0;
  EXPECT_NO_THROW(validate(c));
  CEMConfig e;
  e.p_int = 1.0;
  EXPECT_THROW(validate(e), ConfigError);
  EXPECT_THROW(parse_encoding("fuzzy"), ConfigError);
}

TEST(CbmConfig, JsonRoundTrip) {
  CBMConfig c = quick_cbm(Encoding::kLogit, 5.0);
  c.logit_intervention = LogitIntervention::kPercentile;
  const CBMConfig back = cbm_config_from_json(to_json(c));
  EXPECT_EQ(back.encoding, c.encoding);
  EXPECT_EQ(back.lambda, c.lambda);
  EXPECT_EQ(back.epochs, c.epochs);
  EXPECT_EQ(back.logit_intervention, LogitIntervention::kPercentile);
  const CEMConfig e = cem_config_from_json(to_json(quick_cem()));
  EXPECT_EQ(e.embedding_dim, 4);
  EXPECT_EQ(e.p_int, 0.25);
}

TEST(Cbm, JointLossDecomposes) {
  const Dataset ds = small_toy();
  for (double lambda : {0.0, 0.5, 5.0}) {
    const TrainedModel m = init_cbm(quick_cbm(Encoding::kSoft, lambda), 7, 3, 2);
    const Dataset batch = ds.subset(std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6, 7});
    const auto g = cbm_joint_gradients(m, batch.inputs, batch.concepts, batch.labels);
    const nn::Matrix logits = m.encoder.predict(batch.inputs);
    const double lc = nn::bce_with_logits(logits, batch.concepts_real()).loss;
    const double ly = nn::ce_with_logits(m.head.predict(nn::sigmoid(logits)), batch.labels).loss;
    EXPECT_NEAR(g.concept_loss, lc, 1e-12);
    EXPECT_NEAR(g.task_loss, ly, 1e-12);
    EXPECT_NEAR(g.loss, lambda * lc + ly, 1e-12);
  }
}

TEST(Cbm, ZeroLambdaIgnoresConcepts) {
  const Dataset ds = small_toy();
  const TrainedModel m = init_cbm(quick_cbm(Encoding::kSoft, 0.0), 7, 3, 2);
  const Dataset b = ds.subset(std::vector<std::size_t>{0, 1, 2, 3});
  ConceptMatrix flipped = (1 - b.concepts.array()).matrix();
  const auto g1 = cbm_joint_gradients(m, b.inputs, b.concepts, b.labels);
  const auto g2 = cbm_joint_gradients(m, b.inputs, flipped, b.labels);
  EXPECT_EQ(g1.loss, g2.loss);
  EXPECT_EQ(g1.encoder.weights[0], g2.encoder.weights[0]);
}

TEST(Cbm, HardDumpIsBinaryAndSelfReferenceGivesZeroSint) {
  const Dataset ds = small_toy(2);
  // A head that has converged on true concepts; an undertrained one need not improve with fixes.
  CBMConfig c = quick_cbm(Encoding::kHard, 1.0);
  c.head_epochs = 400;
  const TrainedModel m = train_cbm(c, ds);
  const Dataset test = ds.subset(Split::kTest);
  const auto dump = predict(m, test, ds.splits.test);
  for (Eigen::Index i = 0; i < dump.activations.size(); ++i) {
    const double v = dump.activations.data()[i];
    EXPECT_TRUE(v == 0.0 || v == 1.0);
  }
  const auto r = intervene(m, test, 17);
  for (std::size_t t = 1; t < r.accuracy_curve.size(); ++t) {
    EXPECT_GE(r.accuracy_curve[t], r.accuracy_curve[t - 1] - 1e-12);
  }
  // The independent head is the reference head: fully intervened accuracy is the reference.
  const ConceptMatrix all = ConceptMatrix::Ones(test.size(), 3);
  const auto p = task_probabilities(m, test.inputs, test.concepts, all);
  std::vector<int> yhat;
  for (Eigen::Index row = 0; row < p.rows(); ++row) yhat.push_back(p(row, 1) > p(row, 0) ? 1 : 0);
  EXPECT_EQ(accuracy(yhat, test.labels) - r.accuracy_curve.back(), 0.0);
}

TEST(Intervention, ZeroInterventionsIsPlainAccuracy) {
  const Dataset ds = small_toy(3);
  const TrainedModel m = train_cbm(quick_cbm(Encoding::kSoft, 1.0), ds);
  const Dataset test = ds.subset(Split::kTest);
  const auto r = intervene(m, test, 5, 0.9);
  ASSERT_EQ(r.accuracy_curve.size(), 4U);
  EXPECT_DOUBLE_EQ(r.accuracy_curve[0], evaluate(m, test).y_acc);
  ASSERT_TRUE(r.s_int.has_value());
  EXPECT_DOUBLE_EQ(*r.s_int, 0.9 - r.accuracy_curve.back());
  // The end point is order-independent.
  EXPECT_DOUBLE_EQ(intervene(m, test, 6).accuracy_curve.back(), r.accuracy_curve.back());
}

TEST(Intervention, LogitModesDiffer) {
  const Dataset ds = small_toy(4);
  CBMConfig c = quick_cbm(Encoding::kLogit, 1.0);
  TrainedModel m = train_cbm(c, ds);
  EXPECT_GT(m.logit_intervention, 0.0);
  const Dataset test = ds.subset(Split::kTest);
  const ConceptMatrix all = ConceptMatrix::Ones(test.size(), 3);
  const auto p0 = task_probabilities(m, test.inputs, test.concepts, all);
  m.cbm.logit_intervention = LogitIntervention::kPercentile;
  const auto p1 = task_probabilities(m, test.inputs, test.concepts, all);
  EXPECT_GT((p0 - p1).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Cem, MixingIdentity) {
  const Dataset ds = small_toy(5);
  const TrainedModel m = train_cem(quick_cem(), ds);
  const Dataset test = ds.subset(Split::kTest);
  const auto dump = predict(m, test);
  ASSERT_TRUE(dump.embeddings.has_value());
  const auto& e = *dump.embeddings;
  for (Eigen::Index r = 0; r < 20; ++r) {
    for (int i = 0; i < 3; ++i) {
      const double p = dump.activations(r, i);
      for (int t = 0; t < e.d; ++t) {
        const Eigen::Index col = static_cast<Eigen::Index>(i) * e.d + t;
        EXPECT_NEAR(e.mixed(r, col), p * e.positive(r, col) + (1 - p) * e.negative(r, col), 1e-12);
      }
    }
  }
}

TEST(Cem, JointLossDecomposes) {
  const Dataset ds = small_toy(6);
  CEMConfig cfg = quick_cem();
  cfg.lambda = 2.0;
  const TrainedModel m = init_cem(cfg, 7, 3, 2);
  const Dataset b = ds.subset(std::vector<std::size_t>{0, 1, 2, 3, 4});
  const auto g = cem_gradients(m, b.inputs, b.concepts, b.labels, ConceptMatrix());
  const auto dump = predict(m, b);
  const double lc = nn::bce_on_probabilities(dump.activations, b.concepts_real()).loss;
  EXPECT_NEAR(g.concept_loss, lc, 1e-6);
  EXPECT_NEAR(g.loss, 2.0 * g.concept_loss + g.task_loss, 1e-12);
}

TEST(Checkpoint, RoundTripPredictsIdentically) {
  const auto dir = oracle::scratch_dir("checkpoint");
  const Dataset ds = small_toy(7);
  for (const TrainedModel& m : {train_cbm(quick_cbm(Encoding::kLogit, 5.0), ds), train_cem(quick_cem(), ds)}) {
    save_checkpoint(m, dir / "m.json");
    const TrainedModel back = load_checkpoint(dir / "m.json");
    EXPECT_EQ(back.encoder.flatten(), m.encoder.flatten());
    EXPECT_EQ(back.head.flatten(), m.head.flatten());
    EXPECT_EQ(back.logit_intervention, m.logit_intervention);
    EXPECT_EQ(back.log.total, m.log.total);
    EXPECT_EQ(predict(back, ds).activations, predict(m, ds).activations);
  }
}

TEST(Checkpoint, TruncatedWeightsRejected) {
  const auto dir = oracle::scratch_dir("checkpoint_bad");
  const TrainedModel m = init_cbm(quick_cbm(Encoding::kSoft, 1.0), 7, 3, 2);
  save_checkpoint(m, dir / "m.json");
  auto bytes = read_binary(dir / "m.bin");
  bytes.resize(bytes.size() - 8);
  write_binary(dir / "m.bin", bytes);
  EXPECT_THROW(load_checkpoint(dir / "m.json"), Error);
  EXPECT_THROW(load_checkpoint(dir / "missing.json"), Error);
}

TEST(Dump, RoundTripWithEmbeddings) {
  const auto dir = oracle::scratch_dir("dump");
  const Dataset ds = small_toy(8);
  const TrainedModel m = init_cem(quick_cem(), 7, 3, 2);
  const auto dump = predict(m, ds.subset(Split::kTest), ds.splits.test);
  write_dump(dump, dir / "d.csv");
  EXPECT_TRUE(std::filesystem::exists(embedding_sidecar_path(dir / "d.csv")));
  const auto back = read_dump(dir / "d.csv");
  EXPECT_EQ(back.sample_ids, dump.sample_ids);
  EXPECT_EQ(back.activations, dump.activations);
  EXPECT_EQ(back.labels, dump.labels);
  EXPECT_EQ(back.concepts, dump.concepts);
  ASSERT_TRUE(back.embeddings.has_value());
  EXPECT_EQ(back.embeddings->mixed, dump.embeddings->mixed);
  EXPECT_EQ(back.embeddings->negative, dump.embeddings->negative);

  const TrainedModel c = init_cbm(quick_cbm(Encoding::kSoft, 1.0), 7, 3, 2);
  write_dump(predict(c, ds), dir / "d.csv");
  EXPECT_FALSE(std::filesystem::exists(embedding_sidecar_path(dir / "d.csv")));
  EXPECT_FALSE(read_dump(dir / "d.csv").embeddings.has_value());
}

TEST(Metrics, Examples) {
  std::vector<double> s = {0.1, 0.4, 0.35, 0.8};
  std::vector<int> y = {0, 0, 1, 1};
  EXPECT_DOUBLE_EQ(auc(s, y), oracle::pairwise_auc(s, y));
  EXPECT_DOUBLE_EQ(auc(s, y), 0.75);
  EXPECT_DOUBLE_EQ(auc(std::vector<double>{0.1, 0.2, 0.9}, std::vector<int>{0, 0, 1}), 1.0);
  EXPECT_THROW(auc(s, std::vector<int>{1, 1, 1, 1}), DegenerateVariableError);
  std::vector<int> balanced = {0, 1, 0, 1};
  EXPECT_DOUBLE_EQ(accuracy(std::vector<int>{0, 0, 0, 0}, balanced), 0.5);
  EXPECT_DOUBLE_EQ(auc(std::vector<double>(4, 0.3), balanced), 0.5);
  EXPECT_DOUBLE_EQ(f1_binary(balanced, balanced), 1.0);
  EXPECT_DOUBLE_EQ(f1_macro(balanced, balanced, 2), 1.0);
}

TEST(Metrics, AucMatchesBruteForceOnTies) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> v(0, 4);
  std::vector<double> s(200);
  std::vector<int> y(200);
  for (std::size_t i = 0; i < 200; ++i) {
    s[i] = v(rng) * 0.25;
    y[i] = (v(rng) + static_cast<int>(s[i] * 2)) > 3 ? 1 : 0;
  }
  EXPECT_NEAR(auc(s, y), oracle::pairwise_auc(s, y), 1e-12);
}

TEST(ReferenceHead, CompleteConceptsAreLinearlySolvable) {
  TabularToyConfig cfg;
  cfg.seed = 9;
  const Dataset ds = gen_tabular_toy(cfg);
  EXPECT_DOUBLE_EQ(train_reference_head({}, ds, 200, 512, 1).y_acc, 1.0);
}
