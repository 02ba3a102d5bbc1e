#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "leakage/neighbors.hpp"

namespace leakage {

/// N x d sample matrix, row-major so a row is one contiguous point.
using SampleMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct EstimatorConfig {
  int k_neighbors = 3;
  double jitter_amplitude = 1e-10;  // relative to the per-column standard deviation
  std::uint64_t jitter_seed = 0;
  neighbors::SearchMethod search = neighbors::SearchMethod::kAuto;
  unsigned threads = 1;  // neighbour-search workers; results do not depend on it
};

struct MIEstimate {
  double value = 0.0;  // nats
  EstimatorConfig config;
  std::size_t n_used = 0;
};

enum class Normalization { kByEntropyOfY, kByGeometricMean };

/// How entropy denominators are estimated.
///  kSelfInformation: KSG I(z + e1, z + e2) with independent jitter draws, i.e. I(z, z) = H(z).
///                    Matches the plug-in entropy on discrete data.
///  kDifferential:    Kozachenko-Leonenko differential entropy.
enum class EntropyKind { kSelfInformation, kDifferential };

/// psi(x) for x > 0 (recurrence up to x >= 6, then asymptotic series).
double digamma(double x);

/// Wraps an N-vector as an N x 1 matrix.
SampleMatrix column(std::span<const double> values);
SampleMatrix column(std::span<const int> values);

/// x + U[-a, a] per column, a = amplitude * std(column), or amplitude if the column is constant.
SampleMatrix jitter(const SampleMatrix& x, const EstimatorConfig& config);
SampleMatrix jitter(const SampleMatrix& x, double amplitude, std::uint64_t seed);

/// Kozachenko-Leonenko entropy in nats (max-norm, log c_d = 0). Jitter is applied first.
MIEstimate kl_entropy(const SampleMatrix& x, const EstimatorConfig& config);

/// KSG estimator (variant 1), clamped at 0. Both arguments are jittered with seeds
/// derived from config.jitter_seed; the slot a matrix gets depends on its content,
/// so ksg_mi(x, y) == ksg_mi(y, x).
MIEstimate ksg_mi(const SampleMatrix& x, const SampleMatrix& y, const EstimatorConfig& config);

/// KSG on already-jittered inputs. No noise is added; `clamp` controls the lower clamp at 0.
double ksg_mi_prejittered(const SampleMatrix& x, const SampleMatrix& y,
                          const EstimatorConfig& config, bool clamp = true);

/// H(x) estimated as I(x + e1, x + e2) with two independent jitter draws.
MIEstimate self_information(const SampleMatrix& x, const EstimatorConfig& config);

/// Entropy by the requested method.
MIEstimate entropy(const SampleMatrix& x, const EstimatorConfig& config,
                   EntropyKind kind = EntropyKind::kSelfInformation);

MIEstimate plugin_discrete_mi(std::span<const int> x, std::span<const int> y);
MIEstimate plugin_discrete_entropy(std::span<const int> x);

/// I(x,y)/H(y) or I(x,y)/sqrt(H(x)H(y)). Not clamped above.
/// Throws DegenerateVariableError when a denominator entropy is not positive
/// or the variable takes a single value.
double normalized_mi(const SampleMatrix& x, const SampleMatrix& y, Normalization norm,
                     const EstimatorConfig& config,
                     EntropyKind kind = EntropyKind::kSelfInformation);

/// True when every row of x is identical.
bool is_constant(const SampleMatrix& x);

/// Order-sensitive hash of the matrix shape and bit patterns.
std::uint64_t content_hash(const SampleMatrix& x) noexcept;

}  // namespace leakage
