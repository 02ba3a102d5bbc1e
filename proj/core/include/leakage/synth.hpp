#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "leakage/estimators.hpp"

namespace leakage {

inline constexpr const char* kGeneratorVersion = "tabular-toy/1";

using ConceptMatrix = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class TaskVariant { kOriginal, kTwoConcept, kIncomplete, kMisspecified };

std::string to_string(TaskVariant v);
TaskVariant parse_task_variant(const std::string& s);

struct TabularToyConfig {
  double delta = 0.25;
  std::size_t n = 10000;
  std::uint64_t seed = 0;
  TaskVariant variant = TaskVariant::kOriginal;
  std::array<double, 3> split_ratios{0.7, 0.2, 0.1};
};

nlohmann::json to_json(const TabularToyConfig& c);
TabularToyConfig tabular_toy_config_from_json(const nlohmann::json& j);

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

enum class Split { kTrain, kVal, kTest };

struct Dataset {
  SampleMatrix inputs;     // N x d_x
  ConceptMatrix concepts;  // N x k, entries in {0,1}
  std::vector<int> labels;
  int num_classes = 2;
  SplitIndices splits;
  nlohmann::json provenance;  // {generator_version, config, seed}

  [[nodiscard]] std::size_t size() const noexcept { return labels.size(); }
  [[nodiscard]] int num_concepts() const noexcept { return static_cast<int>(concepts.cols()); }
  [[nodiscard]] int input_dim() const noexcept { return static_cast<int>(inputs.cols()); }
  [[nodiscard]] const std::vector<std::size_t>& indices(Split s) const;

  /// Rows `idx` in the given order; the result has no splits.
  [[nodiscard]] Dataset subset(const std::vector<std::size_t>& idx) const;
  [[nodiscard]] Dataset subset(Split s) const { return subset(indices(s)); }

  /// Concepts as doubles (N x k).
  [[nodiscard]] SampleMatrix concepts_real() const;
};

/// Latent z ~ N(0, Sigma(delta)), concepts c_i = [z_i > 0], trigonometric inputs, variant labels.
Dataset gen_tabular_toy(const TabularToyConfig& config);

/// Seeded shuffle split; train and val sizes are rounded, test takes the remainder.
Dataset split_dataset(Dataset dataset, const std::array<double, 3>& ratios, std::uint64_t seed);
SplitIndices make_splits(std::size_t n, const std::array<double, 3>& ratios, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Gaussian benchmark

enum class GaussianMode { kInterconcept, kConceptsTask };

std::string to_string(GaussianMode m);
GaussianMode parse_gaussian_mode(const std::string& s);

struct GaussianBenchConfig {
  GaussianMode mode = GaussianMode::kInterconcept;
  int d = 1;
  double rho = 0.0;
  std::size_t n = 10000;
  std::uint64_t seed = 0;
};

struct GaussianClosedForm {
  double mi = 0.0;             // nats
  double normalized_mi = 0.0;  // I / H with H the per-block entropy
  double entropy = 0.0;        // H(X), nats
};

void validate(const GaussianBenchConfig& config);

/// interconcept: X, Y both d-dimensional with cross-covariance rho*I.
/// concepts_task: X d-dimensional, Y scalar, corr(X_i, Y) = rho.
std::pair<SampleMatrix, SampleMatrix> gen_gaussian_bench(const GaussianBenchConfig& config);

GaussianClosedForm closed_form_gaussian(const GaussianBenchConfig& config);

// ---------------------------------------------------------------------------
// Storage: CSV (x0.., c0.., y, split) plus a JSON sidecar next to it.

void write_dataset(const Dataset& dataset, const std::filesystem::path& csv_path);
Dataset read_dataset(const std::filesystem::path& csv_path);
std::filesystem::path sidecar_path(const std::filesystem::path& csv_path);

}  // namespace leakage
