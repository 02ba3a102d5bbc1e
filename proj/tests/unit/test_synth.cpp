#include <cmath>
#include <fstream>

#include <gtest/gtest.h>

#include "leakage/error.hpp"
#include "leakage/synth.hpp"
#include "leakage/text_io.hpp"
#include "oracles.hpp"

using namespace leakage;

namespace {

double mean_col(const ConceptMatrix& c, int i) { return c.col(i).cast<double>().mean(); }

double corr(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const Eigen::ArrayXd x = a.array() - a.mean();
  const Eigen::ArrayXd y = b.array() - b.mean();
  return (x * y).sum() / std::sqrt((x * x).sum() * (y * y).sum());
}

}  // namespace

TEST(TabularToy, IndependentConceptsAreFairCoins) {
  TabularToyConfig cfg;
  cfg.delta = 0.0;
  cfg.seed = 3;
  const Dataset ds = gen_tabular_toy(cfg);
  ASSERT_EQ(ds.size(), 10000U);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(mean_col(ds.concepts, i), 0.5, 0.02);
  double y = 0.0;
  for (int v : ds.labels) y += v;
  EXPECT_NEAR(y / 10000.0, 0.5, 0.02);
}

TEST(TabularToy, LatentCorrelation) {
  TabularToyConfig cfg;
  cfg.seed = 4;
  const Dataset ds = gen_tabular_toy(cfg);
  // The latent is recoverable from (sin z, cos z) up to wrapping beyond pi, which is rare.
  Eigen::VectorXd z1(ds.size()), z2(ds.size());
  for (Eigen::Index r = 0; r < ds.inputs.rows(); ++r) {
    z1(r) = std::atan2(ds.inputs(r, 0), ds.inputs(r, 1));
    z2(r) = std::atan2(ds.inputs(r, 2), ds.inputs(r, 3));
  }
  EXPECT_NEAR(corr(z1, z2), 0.25, 0.03);
}

TEST(TabularToy, LabelsFollowVariantRules) {
  for (auto v : {TaskVariant::kOriginal, TaskVariant::kTwoConcept, TaskVariant::kMisspecified}) {
    TabularToyConfig cfg;
    cfg.variant = v;
    cfg.n = 2000;
    const Dataset ds = gen_tabular_toy(cfg);
    for (std::size_t r = 0; r < ds.size(); ++r) {
      const auto row = static_cast<Eigen::Index>(r);
      int expect = 0;
      if (v == TaskVariant::kTwoConcept) {
        expect = ds.concepts(row, 0) | ds.concepts(row, 1);
      } else if (v == TaskVariant::kOriginal) {
        expect = ds.concepts.row(row).sum() >= 2;
      } else {
        expect = ds.concepts(row, 2) & (ds.concepts(row, 0) | ds.concepts(row, 1));
      }
      ASSERT_EQ(ds.labels[r], expect) << to_string(v) << " row " << r;
    }
  }
}

TEST(TabularToy, Shapes) {
  TabularToyConfig cfg;
  cfg.n = 100;
  EXPECT_EQ(gen_tabular_toy(cfg).input_dim(), 7);
  EXPECT_EQ(gen_tabular_toy(cfg).num_concepts(), 3);
  cfg.variant = TaskVariant::kTwoConcept;
  EXPECT_EQ(gen_tabular_toy(cfg).input_dim(), 5);
  EXPECT_EQ(gen_tabular_toy(cfg).num_concepts(), 2);
}

TEST(TabularToy, IncompleteDropsThirdConcept) {
  TabularToyConfig cfg;
  cfg.n = 500;
  cfg.seed = 8;
  const Dataset full = gen_tabular_toy(cfg);
  cfg.variant = TaskVariant::kIncomplete;
  const Dataset inc = gen_tabular_toy(cfg);
  EXPECT_EQ(inc.num_concepts(), 2);
  EXPECT_EQ(inc.labels, full.labels);
  EXPECT_EQ(inc.concepts, full.concepts.leftCols(2));
  EXPECT_EQ(inc.inputs, full.inputs);
}

TEST(TabularToy, NotPositiveDefinite) {
  TabularToyConfig cfg;
  cfg.delta = -0.6;
  EXPECT_THROW(gen_tabular_toy(cfg), ConfigError);
  cfg.delta = 1.0;
  EXPECT_THROW(gen_tabular_toy(cfg), ConfigError);
}

TEST(TabularToy, DeterministicPerSeed) {
  TabularToyConfig cfg;
  cfg.n = 300;
  cfg.seed = 11;
  const Dataset a = gen_tabular_toy(cfg);
  const Dataset b = gen_tabular_toy(cfg);
  EXPECT_EQ(a.inputs, b.inputs);
  EXPECT_EQ(a.splits.test, b.splits.test);
  cfg.seed = 12;
  EXPECT_NE(gen_tabular_toy(cfg).inputs, a.inputs);
}

TEST(Splits, SizesAndDeterminism) {
  const auto s = make_splits(10, {0.7, 0.2, 0.1}, 1);
  EXPECT_EQ(s.train.size(), 7U);
  EXPECT_EQ(s.val.size(), 2U);
  EXPECT_EQ(s.test.size(), 1U);
  const auto t = make_splits(10, {0.7, 0.2, 0.1}, 1);
  EXPECT_EQ(s.train, t.train);
  EXPECT_EQ(s.test, t.test);
  std::vector<std::size_t> all = s.train;
  all.insert(all.end(), s.val.begin(), s.val.end());
  all.insert(all.end(), s.test.begin(), s.test.end());
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(all[i], i);
}

TEST(Splits, EmptySplitIsConfigError) {
  EXPECT_THROW(make_splits(3, {0.9, 0.05, 0.05}, 1), ConfigError);
  EXPECT_THROW(make_splits(10, {0.5, 0.5, 0.1}, 1), ConfigError);
}

TEST(DatasetIo, RoundTripAndByteStable) {
  const auto dir = oracle::scratch_dir("dataset_io");
  TabularToyConfig cfg;
  cfg.n = 400;
  cfg.seed = 5;
  const Dataset ds = gen_tabular_toy(cfg);
  write_dataset(ds, dir / "a.csv");
  const Dataset back = read_dataset(dir / "a.csv");
  EXPECT_EQ(back.inputs, ds.inputs);
  EXPECT_EQ(back.concepts, ds.concepts);
  EXPECT_EQ(back.labels, ds.labels);
  EXPECT_EQ(back.splits.train, ds.splits.train);
  EXPECT_EQ(back.splits.test, ds.splits.test);
  write_dataset(gen_tabular_toy(cfg), dir / "b.csv");
  EXPECT_EQ(read_text(dir / "a.csv"), read_text(dir / "b.csv"));
  EXPECT_TRUE(std::filesystem::exists(sidecar_path(dir / "a.csv")));
  // Header plus one row per sample; 7 inputs + 3 concepts + y + split.
  const std::string text = read_text(dir / "a.csv");
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 401);
  EXPECT_EQ(split_csv_line(text.substr(0, text.find('\n'))).size(), 12U);
}

TEST(GaussianBench, ZeroCorrelation) {
  GaussianBenchConfig cfg;
  cfg.d = 3;
  cfg.rho = 0.0;
  const auto [x, y] = gen_gaussian_bench(cfg);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) EXPECT_NEAR(corr(x.col(i), y.col(j)), 0.0, 0.03);
  }
  const auto cf = closed_form_gaussian(cfg);
  EXPECT_EQ(cf.mi, 0.0);
  EXPECT_EQ(cf.normalized_mi, 0.0);
}

TEST(GaussianBench, KsgMatchesClosedForm) {
  GaussianBenchConfig a;
  a.rho = 0.6;
  auto [x, y] = gen_gaussian_bench(a);
  EXPECT_NEAR(ksg_mi(x, y, {}).value, oracle::gaussian_mi(0.6), 0.02);

  GaussianBenchConfig b;
  b.mode = GaussianMode::kConceptsTask;
  b.d = 2;
  b.rho = 0.5;
  auto [u, v] = gen_gaussian_bench(b);
  EXPECT_EQ(v.cols(), 1);
  EXPECT_NEAR(ksg_mi(u, v, {}).value, -0.5 * std::log(1.0 - 2 * 0.25), 0.03);
}

TEST(GaussianBench, ClosedForms) {
  GaussianBenchConfig c;
  c.d = 3;
  c.rho = 0.6;
  EXPECT_NEAR(closed_form_gaussian(c).mi, -1.5 * std::log(0.64), 1e-12);
  EXPECT_NEAR(closed_form_gaussian(c).mi, 0.6694, 1e-4);
  c.d = 1;
  EXPECT_NEAR(closed_form_gaussian(c).entropy, 1.41894, 1e-5);
}

TEST(GaussianBench, InvalidRho) {
  GaussianBenchConfig c;
  c.rho = 1.0;
  EXPECT_THROW(gen_gaussian_bench(c), ConfigError);
  c.mode = GaussianMode::kConceptsTask;
  c.d = 4;
  c.rho = 0.6;
  EXPECT_THROW(closed_form_gaussian(c), ConfigError);
}
