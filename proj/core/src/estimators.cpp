#include "leakage/estimators.hpp"

#include <bit>
#include <cmath>
#include <map>
#include <random>
#include <string>

#include "leakage/error.hpp"
#include "leakage/random.hpp"

namespace leakage {

namespace {

constexpr std::uint64_t kSlotTag = 0x6b7367;     // "ksg"
constexpr std::uint64_t kCopyTag = 0x73656c66;   // "self"

void check_finite(const SampleMatrix& x, const char* what) {
  if (x.rows() < 1 || x.cols() < 1) throw ShapeError(std::string(what) + ": empty sample matrix");
  if (!x.allFinite()) throw DomainError(std::string(what) + ": non-finite entries");
}

void check_k(const SampleMatrix& x, const EstimatorConfig& config) {
  if (config.k_neighbors < 1) throw ConfigError("k_neighbors must be positive");
  if (x.rows() <= config.k_neighbors) {
    throw InsufficientSamplesError("need N > k (N=" + std::to_string(x.rows()) +
                                   ", k=" + std::to_string(config.k_neighbors) + ")");
  }
}

neighbors::PointCloud cloud(const SampleMatrix& m) {
  return {std::span<const double>(m.data(), static_cast<std::size_t>(m.size())),
          static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())};
}

std::uint64_t slot_seed(std::uint64_t seed, std::uint64_t slot) {
  return derive_seed(seed, {kSlotTag, slot});
}

}  // namespace

double digamma(double x) {
  if (!(x > 0.0) || !std::isfinite(x)) {
    throw DomainError("digamma: argument must be positive and finite, got " + std::to_string(x));
  }
  double result = 0.0;
  while (x < 6.0) {
    result -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  // Bernoulli-number series: 1/12, 1/120, 1/252, 1/240, 1/132, 691/32760
  const double series =
      inv2 * (1.0 / 12 -
              inv2 * (1.0 / 120 -
                      inv2 * (1.0 / 252 -
                              inv2 * (1.0 / 240 - inv2 * (1.0 / 132 - inv2 * (691.0 / 32760))))));
  return result + std::log(x) - 0.5 * inv - series;
}

SampleMatrix column(std::span<const double> values) {
  SampleMatrix m(static_cast<Eigen::Index>(values.size()), 1);
  for (std::size_t i = 0; i < values.size(); ++i) m(static_cast<Eigen::Index>(i), 0) = values[i];
  return m;
}

SampleMatrix column(std::span<const int> values) {
  SampleMatrix m(static_cast<Eigen::Index>(values.size()), 1);
  for (std::size_t i = 0; i < values.size(); ++i) m(static_cast<Eigen::Index>(i), 0) = values[i];
  return m;
}

SampleMatrix jitter(const SampleMatrix& x, double amplitude, std::uint64_t seed) {
  if (amplitude < 0.0) throw ConfigError("jitter amplitude must be nonnegative");
  SampleMatrix out = x;
  if (amplitude == 0.0 || x.rows() == 0) return out;

  const Eigen::Index n = x.rows();
  std::vector<double> scale(static_cast<std::size_t>(x.cols()));
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    const double mean = x.col(c).mean();
    double ss = 0.0;
    for (Eigen::Index r = 0; r < n; ++r) ss += (x(r, c) - mean) * (x(r, c) - mean);
    const double sd = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
    scale[static_cast<std::size_t>(c)] = sd > 0.0 ? amplitude * sd : amplitude;
  }
  Rng rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (Eigen::Index r = 0; r < n; ++r) {
    for (Eigen::Index c = 0; c < x.cols(); ++c) out(r, c) += scale[static_cast<std::size_t>(c)] * unit(rng);
  }
  return out;
}

SampleMatrix jitter(const SampleMatrix& x, const EstimatorConfig& config) {
  return jitter(x, config.jitter_amplitude, config.jitter_seed);
}

MIEstimate kl_entropy(const SampleMatrix& x, const EstimatorConfig& config) {
  check_finite(x, "kl_entropy");
  check_k(x, config);
  const SampleMatrix z = jitter(x, config);
  const auto eps = neighbors::kth_neighbor_distances(cloud(z), config.k_neighbors, config.search,
                                                     config.threads);
  const auto n = static_cast<double>(z.rows());
  const auto d = static_cast<double>(z.cols());
  double sum_log = 0.0;
  for (double e : eps) {
    if (!(e > 0.0)) throw DomainError("kl_entropy: duplicate points after jitter");
    sum_log += std::log(2.0 * e);
  }
  MIEstimate out;
  out.value = -digamma(config.k_neighbors) + digamma(n) + d * sum_log / n;
  out.config = config;
  out.n_used = static_cast<std::size_t>(z.rows());
  return out;
}

double ksg_mi_prejittered(const SampleMatrix& x, const SampleMatrix& y,
                          const EstimatorConfig& config, bool clamp) {
  if (x.rows() != y.rows()) {
    throw ShapeError("ksg_mi: sample counts differ (" + std::to_string(x.rows()) + " vs " +
                     std::to_string(y.rows()) + ")");
  }
  check_finite(x, "ksg_mi");
  check_finite(y, "ksg_mi");
  check_k(x, config);

  const Eigen::Index n = x.rows();
  SampleMatrix joint(n, x.cols() + y.cols());
  joint.leftCols(x.cols()) = x;
  joint.rightCols(y.cols()) = y;

  const auto eps = neighbors::kth_neighbor_distances(cloud(joint), config.k_neighbors,
                                                     config.search, config.threads);
  const auto nx = neighbors::count_strictly_within(cloud(x), eps, config.search, config.threads);
  const auto ny = neighbors::count_strictly_within(cloud(y), eps, config.search, config.threads);

  double acc = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto u = static_cast<std::size_t>(i);
    acc += digamma(static_cast<double>(nx[u]) + 1.0) + digamma(static_cast<double>(ny[u]) + 1.0);
  }
  const double mi = digamma(config.k_neighbors) + digamma(static_cast<double>(n)) -
                    acc / static_cast<double>(n);
  return clamp ? std::max(0.0, mi) : mi;
}

MIEstimate ksg_mi(const SampleMatrix& x, const SampleMatrix& y, const EstimatorConfig& config) {
  if (x.rows() != y.rows()) {
    throw ShapeError("ksg_mi: sample counts differ (" + std::to_string(x.rows()) + " vs " +
                     std::to_string(y.rows()) + ")");
  }
  // The smaller content hash takes slot 0, so swapping the arguments swaps nothing.
  const std::uint64_t hx = content_hash(x);
  const std::uint64_t hy = content_hash(y);
  const std::uint64_t sx = hx <= hy ? 0 : 1;
  const SampleMatrix jx = jitter(x, config.jitter_amplitude, slot_seed(config.jitter_seed, sx));
  const SampleMatrix jy = jitter(y, config.jitter_amplitude, slot_seed(config.jitter_seed, 1 - sx));
  MIEstimate out;
  out.value = hx <= hy ? ksg_mi_prejittered(jx, jy, config) : ksg_mi_prejittered(jy, jx, config);
  out.config = config;
  out.n_used = static_cast<std::size_t>(x.rows());
  return out;
}

MIEstimate self_information(const SampleMatrix& x, const EstimatorConfig& config) {
  const SampleMatrix a =
      jitter(x, config.jitter_amplitude, derive_seed(config.jitter_seed, {kCopyTag, 0}));
  const SampleMatrix b =
      jitter(x, config.jitter_amplitude, derive_seed(config.jitter_seed, {kCopyTag, 1}));
  MIEstimate out;
  out.value = ksg_mi_prejittered(a, b, config);
  out.config = config;
  out.n_used = static_cast<std::size_t>(x.rows());
  return out;
}

MIEstimate entropy(const SampleMatrix& x, const EstimatorConfig& config, EntropyKind kind) {
  return kind == EntropyKind::kDifferential ? kl_entropy(x, config) : self_information(x, config);
}

MIEstimate plugin_discrete_mi(std::span<const int> x, std::span<const int> y) {
  if (x.empty()) throw InsufficientSamplesError("plugin_discrete_mi: empty input");
  if (x.size() != y.size()) throw ShapeError("plugin_discrete_mi: length mismatch");
  std::map<std::pair<int, int>, std::size_t> joint;
  std::map<int, std::size_t> px;
  std::map<int, std::size_t> py;
  for (std::size_t i = 0; i < x.size(); ++i) {
    ++joint[{x[i], y[i]}];
    ++px[x[i]];
    ++py[y[i]];
  }
  const auto n = static_cast<double>(x.size());
  double mi = 0.0;
  for (const auto& [ab, count] : joint) {
    const double pab = static_cast<double>(count) / n;
    const double pa = static_cast<double>(px[ab.first]) / n;
    const double pb = static_cast<double>(py[ab.second]) / n;
    mi += pab * std::log(pab / (pa * pb));
  }
  MIEstimate out;
  out.value = std::max(0.0, mi);
  out.config.jitter_amplitude = 0.0;
  out.n_used = x.size();
  return out;
}

MIEstimate plugin_discrete_entropy(std::span<const int> x) {
  if (x.empty()) throw InsufficientSamplesError("plugin_discrete_entropy: empty input");
  std::map<int, std::size_t> counts;
  for (int v : x) ++counts[v];
  const auto n = static_cast<double>(x.size());
  double h = 0.0;
  for (const auto& [v, count] : counts) {
    const double p = static_cast<double>(count) / n;
    h -= p * std::log(p);
  }
  MIEstimate out;
  out.value = std::max(0.0, h);
  out.config.jitter_amplitude = 0.0;
  out.n_used = x.size();
  return out;
}

bool is_constant(const SampleMatrix& x) {
  for (Eigen::Index r = 1; r < x.rows(); ++r) {
    if (x.row(r) != x.row(0)) return false;
  }
  return true;
}

std::uint64_t content_hash(const SampleMatrix& x) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](std::uint64_t v) {
    for (int b = 0; b < 8; ++b) {
      h ^= (v >> (8 * b)) & 0xffU;
      h *= 0x100000001b3ULL;
    }
  };
  feed(static_cast<std::uint64_t>(x.rows()));
  feed(static_cast<std::uint64_t>(x.cols()));
  for (Eigen::Index i = 0; i < x.size(); ++i) feed(std::bit_cast<std::uint64_t>(x.data()[i]));
  return h;
}

double normalized_mi(const SampleMatrix& x, const SampleMatrix& y, Normalization norm,
                     const EstimatorConfig& config, EntropyKind kind) {
  if (is_constant(y)) throw DegenerateVariableError("normalized_mi: y takes a single value");
  if (norm == Normalization::kByGeometricMean && is_constant(x)) {
    throw DegenerateVariableError("normalized_mi: x takes a single value");
  }
  const double mi = ksg_mi(x, y, config).value;
  EstimatorConfig hcfg = config;
  hcfg.jitter_seed = derive_seed(config.jitter_seed, content_hash(y));
  const double hy = entropy(y, hcfg, kind).value;
  if (!(hy > 0.0)) throw DegenerateVariableError("normalized_mi: H(y) is not positive");
  if (norm == Normalization::kByEntropyOfY) return mi / hy;

  hcfg.jitter_seed = derive_seed(config.jitter_seed, content_hash(x));
  const double hx = entropy(x, hcfg, kind).value;
  if (!(hx > 0.0)) throw DegenerateVariableError("normalized_mi: H(x) is not positive");
  return mi / std::sqrt(hx * hy);
}

}  // namespace leakage
