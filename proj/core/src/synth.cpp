#include "leakage/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include <Eigen/Cholesky>

#include "leakage/error.hpp"
#include "leakage/random.hpp"

namespace leakage {

namespace {

Eigen::MatrixXd cholesky_or_throw(const Eigen::MatrixXd& sigma, const char* what) {
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success) {
    throw ConfigError(std::string(what) + ": covariance is not positive-definite");
  }
  return llt.matrixL();
}

// One row of correlated normals per sample, drawn in a fixed sequential order.
Eigen::MatrixXd sample_gaussian(const Eigen::MatrixXd& lower, std::size_t n, Rng& rng) {
  const auto dim = lower.rows();
  Eigen::MatrixXd z(static_cast<Eigen::Index>(n), dim);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd g(dim);
  for (std::size_t r = 0; r < n; ++r) {
    for (Eigen::Index c = 0; c < dim; ++c) g(c) = normal(rng);
    z.row(static_cast<Eigen::Index>(r)) = (lower * g).transpose();
  }
  return z;
}

}  // namespace

std::string to_string(TaskVariant v) {
  switch (v) {
    case TaskVariant::kOriginal: return "original";
    case TaskVariant::kTwoConcept: return "two_concept";
    case TaskVariant::kIncomplete: return "incomplete";
    case TaskVariant::kMisspecified: return "misspecified";
  }
  return "original";
}

TaskVariant parse_task_variant(const std::string& s) {
  if (s == "original") return TaskVariant::kOriginal;
  if (s == "two_concept") return TaskVariant::kTwoConcept;
  if (s == "incomplete") return TaskVariant::kIncomplete;
  if (s == "misspecified") return TaskVariant::kMisspecified;
  throw ConfigError("unknown task variant '" + s + "'");
}

nlohmann::json to_json(const TabularToyConfig& c) {
  return {{"delta", c.delta},
          {"n", c.n},
          {"seed", c.seed},
          {"variant", to_string(c.variant)},
          {"split_ratios", c.split_ratios}};
}

TabularToyConfig tabular_toy_config_from_json(const nlohmann::json& j) {
  TabularToyConfig c;
  if (!j.is_object()) throw ConfigError("dataset config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key != "delta" && key != "n" && key != "seed" && key != "variant" && key != "split_ratios") {
      throw ConfigError("dataset config: unknown key '" + key + "'");
    }
  }
  try {
    c.delta = j.value("delta", c.delta);
    c.n = j.value("n", c.n);
    c.seed = j.value("seed", c.seed);
    c.variant = parse_task_variant(j.value("variant", std::string("original")));
    if (j.contains("split_ratios")) c.split_ratios = j.at("split_ratios").get<std::array<double, 3>>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("dataset config: ") + e.what());
  }
  return c;
}

const std::vector<std::size_t>& Dataset::indices(Split s) const {
  switch (s) {
    case Split::kTrain: return splits.train;
    case Split::kVal: return splits.val;
    case Split::kTest: return splits.test;
  }
  return splits.train;
}

Dataset Dataset::subset(const std::vector<std::size_t>& idx) const {
  Dataset out;
  const auto m = static_cast<Eigen::Index>(idx.size());
  out.inputs.resize(m, inputs.cols());
  out.concepts.resize(m, concepts.cols());
  out.labels.resize(idx.size());
  for (Eigen::Index r = 0; r < m; ++r) {
    const auto src = static_cast<Eigen::Index>(idx[static_cast<std::size_t>(r)]);
    if (src >= inputs.rows()) throw ShapeError("subset index out of range");
    out.inputs.row(r) = inputs.row(src);
    out.concepts.row(r) = concepts.row(src);
    out.labels[static_cast<std::size_t>(r)] = labels[static_cast<std::size_t>(src)];
  }
  out.num_classes = num_classes;
  out.provenance = provenance;
  return out;
}

SampleMatrix Dataset::concepts_real() const { return concepts.cast<double>(); }

SplitIndices make_splits(std::size_t n, const std::array<double, 3>& ratios, std::uint64_t seed) {
  for (double r : ratios) {
    if (!(r > 0.0)) throw ConfigError("split ratios must be positive");
  }
  if (std::fabs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9) {
    throw ConfigError("split ratios must sum to 1");
  }
  const auto n_train = static_cast<std::size_t>(std::llround(ratios[0] * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(std::llround(ratios[1] * static_cast<double>(n)));
  if (n_train == 0 || n_val == 0 || n_train + n_val >= n) {
    throw ConfigError("split ratios produce an empty split for n=" + std::to_string(n));
  }
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);

  SplitIndices s;
  s.train.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.val.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train),
               perm.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  s.test.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), perm.end());
  // Row order inside a split is canonical so a dataset read back from CSV trains identically.
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.val.begin(), s.val.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

Dataset split_dataset(Dataset dataset, const std::array<double, 3>& ratios, std::uint64_t seed) {
  dataset.splits = make_splits(dataset.size(), ratios, seed);
  return dataset;
}

Dataset gen_tabular_toy(const TabularToyConfig& config) {
  const bool two = config.variant == TaskVariant::kTwoConcept;
  const int latent = two ? 2 : 3;
  const double d = config.delta;
  // Eigenvalues of the equicorrelation matrix: 1 + (m-1)delta and 1 - delta.
  if (!(1.0 + (latent - 1) * d > 0.0) || !(1.0 - d > 0.0)) {
    throw ConfigError("TabularToy: Sigma(delta) is not positive-definite for delta=" +
                      std::to_string(d));
  }
  if (config.n < 3) throw ConfigError("TabularToy: n must be at least 3");

  Eigen::MatrixXd sigma = Eigen::MatrixXd::Constant(latent, latent, d);
  sigma.diagonal().setOnes();
  const Eigen::MatrixXd lower = cholesky_or_throw(sigma, "TabularToy");

  Rng rng(derive_seed(config.seed, string_tag("latent")));
  const Eigen::MatrixXd z = sample_gaussian(lower, config.n, rng);

  Dataset ds;
  const auto n = static_cast<Eigen::Index>(config.n);
  ds.inputs.resize(n, two ? 5 : 7);
  const int k = (two || config.variant == TaskVariant::kIncomplete) ? 2 : 3;
  ds.concepts.resize(n, k);
  ds.labels.resize(config.n);
  ds.num_classes = 2;

  for (Eigen::Index r = 0; r < n; ++r) {
    int c[3] = {0, 0, 0};
    double zsum = 0.0;
    for (int i = 0; i < latent; ++i) {
      c[i] = z(r, i) > 0.0 ? 1 : 0;
      ds.inputs(r, 2 * i) = std::sin(z(r, i));
      ds.inputs(r, 2 * i + 1) = std::cos(z(r, i));
      zsum += z(r, i);
    }
    ds.inputs(r, 2 * latent) = std::sin(zsum);
    for (int i = 0; i < k; ++i) ds.concepts(r, i) = c[i];

    int y = 0;
    switch (config.variant) {
      case TaskVariant::kOriginal:
      case TaskVariant::kIncomplete: y = (c[0] + c[1] + c[2] >= 2) ? 1 : 0; break;
      case TaskVariant::kTwoConcept: y = (c[0] + c[1] >= 1) ? 1 : 0; break;
      case TaskVariant::kMisspecified: y = (c[0] + c[1] + c[2] - c[0] * c[1] >= 2) ? 1 : 0; break;
    }
    ds.labels[static_cast<std::size_t>(r)] = y;
  }

  ds.splits = make_splits(config.n, config.split_ratios, derive_seed(config.seed, string_tag("split")));
  ds.provenance = {{"generator_version", kGeneratorVersion},
                   {"config", to_json(config)},
                   {"seed", config.seed}};
  return ds;
}

// ---------------------------------------------------------------------------

std::string to_string(GaussianMode m) {
  return m == GaussianMode::kInterconcept ? "interconcept" : "concepts_task";
}

GaussianMode parse_gaussian_mode(const std::string& s) {
  if (s == "interconcept") return GaussianMode::kInterconcept;
  if (s == "concepts_task") return GaussianMode::kConceptsTask;
  throw ConfigError("unknown gaussian mode '" + s + "'");
}

void validate(const GaussianBenchConfig& config) {
  if (config.d < 1) throw ConfigError("gaussian bench: d must be positive");
  if (config.n < 2) throw ConfigError("gaussian bench: n must be at least 2");
  if (config.mode == GaussianMode::kInterconcept) {
    if (!(std::fabs(config.rho) < 1.0)) throw ConfigError("interconcept mode needs |rho| < 1");
  } else if (!(config.rho >= 0.0 && config.rho < 1.0 / std::sqrt(static_cast<double>(config.d)))) {
    throw ConfigError("concepts_task mode needs 0 <= rho < 1/sqrt(d)");
  }
}

std::pair<SampleMatrix, SampleMatrix> gen_gaussian_bench(const GaussianBenchConfig& config) {
  validate(config);
  const int d = config.d;
  const int dy = config.mode == GaussianMode::kInterconcept ? d : 1;
  Eigen::MatrixXd sigma = Eigen::MatrixXd::Identity(d + dy, d + dy);
  for (int i = 0; i < d; ++i) {
    const int j = config.mode == GaussianMode::kInterconcept ? d + i : d;
    sigma(i, j) = config.rho;
    sigma(j, i) = config.rho;
  }
  const Eigen::MatrixXd lower = cholesky_or_throw(sigma, "gaussian bench");
  Rng rng(derive_seed(config.seed, string_tag("gauss")));
  const Eigen::MatrixXd z = sample_gaussian(lower, config.n, rng);
  return {z.leftCols(d), z.rightCols(dy)};
}

GaussianClosedForm closed_form_gaussian(const GaussianBenchConfig& config) {
  validate(config);
  const double unit = 1.0 + std::log(2.0 * std::numbers::pi);
  const auto d = static_cast<double>(config.d);
  GaussianClosedForm out;
  out.entropy = 0.5 * d * unit;
  if (config.mode == GaussianMode::kInterconcept) {
    const double l = std::log(1.0 - config.rho * config.rho);
    out.mi = -0.5 * d * l;
    out.normalized_mi = -l / unit;
  } else {
    const double l = std::log(1.0 - d * config.rho * config.rho);
    out.mi = -0.5 * l;
    out.normalized_mi = -l / unit;
  }
  return out;
}

}  // namespace leakage
