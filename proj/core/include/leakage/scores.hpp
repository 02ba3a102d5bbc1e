#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "leakage/cbm.hpp"
#include "leakage/estimators.hpp"

namespace leakage {

/// Ground truth and learned concept representations on a common set of samples.
struct ConceptData {
  ConceptMatrix true_concepts;  // N x k, entries 0/1
  SampleMatrix predicted;       // N x k activations
  std::vector<int> labels;      // N task labels
  std::optional<CemEmbeddings> embeddings;

  [[nodiscard]] int num_concepts() const { return static_cast<int>(true_concepts.cols()); }
  [[nodiscard]] std::size_t size() const { return labels.size(); }

  /// Throws ShapeError / DomainError when the fields disagree.
  void validate() const;

  static ConceptData from_dump(const ActivationDump& dump);
};

struct ScoreWithCI {
  double mean = 0.0;
  double ci95_low = 0.0;
  double ci95_high = 0.0;
  int repeats = 0;
};

/// mean +- 1.96 * sd / sqrt(n) with the n-1 standard deviation.
ScoreWithCI ci_from_values(const std::vector<double>& values);

nlohmann::json to_json(const ScoreWithCI& s);
ScoreWithCI score_with_ci_from_json(const nlohmann::json& j);

using ScoreFn = std::function<double(const ConceptData&, const EstimatorConfig&)>;

/// Evaluates `fn` with jitter seeds base_seed .. base_seed + repeats - 1.
ScoreWithCI score_with_ci(const ScoreFn& fn, const ConceptData& data, const EstimatorConfig& config,
                          std::uint64_t base_seed, int repeats = 5);

// All scores below use config.jitter_seed as the evaluation seed. A predicted column and the
// matching ground-truth column share their jitter draws, so identical inputs score exactly 0.

double ctl_i(const ConceptData& data, int i, const EstimatorConfig& config);
double ctl(const ConceptData& data, const EstimatorConfig& config);
double icl_ij(const ConceptData& data, int i, int j, const EstimatorConfig& config);
double icl_i(const ConceptData& data, int i, const EstimatorConfig& config);
double icl(const ConceptData& data, const EstimatorConfig& config);

/// Everything CTL/ICL-related from one set of estimates.
struct CtlIclValues {
  std::vector<double> ctl_per_concept;
  Eigen::MatrixXd icl_pairwise;  // symmetric, zero diagonal
  std::vector<double> icl_per_concept;
  double ctl = 0.0;
  double icl = 0.0;
};

CtlIclValues ctl_icl_values(const ConceptData& data, const EstimatorConfig& config);
/// CTL = mean of the per-concept values; ICL_i = mean over j != i of the pairwise values, ICL = mean of ICL_i.
/// The diagonal of `icl_pairwise` is ignored.
CtlIclValues aggregate_ctl_icl(std::vector<double> ctl_per_concept, Eigen::MatrixXd icl_pairwise);

double cem_ct(const ConceptData& data, const EstimatorConfig& config);
double cem_ic(const ConceptData& data, const EstimatorConfig& config);
double cem_self(const ConceptData& data, const EstimatorConfig& config);
double cem_align(const ConceptData& data, const EstimatorConfig& config);

/// reference_accuracy - intervened_accuracy.
double s_int(double intervened_accuracy, double reference_accuracy);

enum class ComparisonOutcome { kAHigher, kBHigher, kIndistinguishable, kCriterionInapplicable };
std::string to_string(ComparisonOutcome o);

struct ScoreComparison {
  std::string score;
  ScoreWithCI a;
  ScoreWithCI b;
  int relation = 0;  // +1: a strictly above b, -1: b strictly above a, 0: overlapping
};

struct ComparisonVerdict {
  ComparisonOutcome outcome = ComparisonOutcome::kIndistinguishable;
  std::vector<ScoreComparison> evidence;
};

nlohmann::json to_json(const ComparisonVerdict& v);

/// +1, -1 or 0 as in ScoreComparison::relation.
int ci_relation(const ScoreWithCI& a, const ScoreWithCI& b);

/// Leakage Criterion over (CTL, ICL) confidence intervals.
ComparisonVerdict leakage_compare(const ScoreWithCI& ctl_a, const ScoreWithCI& icl_a,
                                  const ScoreWithCI& ctl_b, const ScoreWithCI& icl_b);

// --- OIS ------------------------------------------------------------------

struct OisOptions {
  int hidden = 32;
  int epochs = 50;
  int batch_size = 64;
  double learning_rate = 1e-3;
  double train_fraction = 0.8;
  int repeats = 5;
  std::uint64_t seed = 0;
};

nlohmann::json to_json(const OisOptions& o);

struct OisResult {
  ScoreWithCI score;
  Eigen::MatrixXd pi_predicted;  // mean over repeats, k x k
  Eigen::MatrixXd pi_true;
  std::vector<std::string> unreliable_cells;  // "pred(i,j)" / "true(i,j)" with the repeat index
};

/// AUC of a 1 -> hidden -> 1 probe trained on x to predict binary y (80/20 split of the rows).
/// Returns nullopt if training diverged or the held-out part has a single class.
std::optional<double> probe_auc(const Eigen::VectorXd& x, const std::vector<int>& y, const OisOptions& opts,
                                std::uint64_t seed);

OisResult ois(const ConceptData& data, const OisOptions& opts);

}  // namespace leakage
