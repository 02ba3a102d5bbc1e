#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "leakage/cbm.hpp"
#include "leakage/report.hpp"
#include "leakage/synth.hpp"

namespace leakage {

inline constexpr const char* kToolVersion = "0.1.0";

/// One model of a sweep. Seeds inside the configs are ignored; each fold derives its own.
struct ModelSpec {
  std::string name;
  ModelKind kind = ModelKind::kCbm;
  CBMConfig cbm;
  CEMConfig cem;
};

nlohmann::json to_json(const ModelSpec& m);
ModelSpec model_spec_from_json(const nlohmann::json& j);

struct ExperimentConfig {
  TabularToyConfig dataset;
  std::filesystem::path dataset_path;  // non-empty: read this CSV instead of generating
  std::vector<ModelSpec> models;
  int folds = 5;
  int repeats = 5;
  int policy_seeds = 5;
  int reference_epochs = 200;
  bool ois = false;
  std::filesystem::path out_dir;  // empty: nothing is written
  std::uint64_t master_seed = 0;
  unsigned jobs = 1;
};

void validate(const ExperimentConfig& c);
nlohmann::json to_json(const ExperimentConfig& c);
/// Missing fields keep their defaults; the dataset seed defaults to the master seed.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);

/// Training seed of fold f (shared by every model of the sweep).
std::uint64_t fold_seed(std::uint64_t master_seed, int fold);
/// Jitter base seed for scoring fold f.
std::uint64_t audit_seed(std::uint64_t master_seed, int fold);
std::vector<std::uint64_t> policy_seeds(std::uint64_t master_seed, int count);

struct FoldResult {
  int fold = 0;
  std::uint64_t seed = 0;
  Metrics metrics;
  LeakageReport report;
  InterventionResult intervention;
  double reference_accuracy = 0.0;
};

struct ModelSummary {
  ModelSpec spec;
  std::vector<FoldResult> folds;
  // CIs over fold means ("5-fold training" CIs), next to the per-fold repeat CIs in `folds`.
  ScoreWithCI ctl;
  ScoreWithCI icl;
  std::optional<ScoreWithCI> cem_ct, cem_ic, cem_self, cem_align, ois;
  ScoreWithCI s_int;
  ScoreWithCI y_acc;
  ScoreWithCI c_acc;
};

struct ExperimentResult {
  ReferenceHead reference;
  std::vector<ModelSummary> models;
  std::vector<std::filesystem::path> written;  // every file written, relative to out_dir
};

/// Trains every (model, fold), dumps test activations, audits and intervenes.
/// With a non-empty out_dir: datasets/, checkpoints/, dumps/, reports/ and manifest.json.
ExperimentResult run_experiment(const ExperimentConfig& config);

/// Audit + intervention on a trained model against the test split of `dataset`.
FoldResult evaluate_model(const TrainedModel& model, const Dataset& dataset, const ReferenceHead& reference,
                          const AuditOptions& audit_options, const std::vector<std::uint64_t>& policy_seeds);

/// Reference accuracy used for s_int: the model's own head for independently trained CBMs
/// (that head is already trained on ground-truth concepts), the separate head otherwise.
double reference_accuracy_for(const TrainedModel& model, const Dataset& dataset, const ReferenceHead& reference);

nlohmann::json to_json(const ModelSummary& s);

/// Ground truth for the dump's sample ids taken from `dataset`. Throws AlignmentError listing
/// ids that are out of range or whose dumped concepts/labels disagree with the dataset.
ConceptData align_dump(const ActivationDump& dump, const Dataset& dataset);

// --- Gaussian benchmark ---------------------------------------------------

struct GaussBenchRow {
  GaussianMode mode = GaussianMode::kInterconcept;
  int d = 1;
  double rho = 0.0;
  double estimated_mi = 0.0;
  double estimated_norm_mi = 0.0;
  double closed_form_mi = 0.0;
  double closed_form_norm_mi = 0.0;
  int repeat = 0;
};

struct GaussBenchConfig {
  std::vector<GaussianMode> modes{GaussianMode::kInterconcept};
  std::vector<int> dims{1, 2, 4, 8, 16};
  std::vector<double> rhos{0.0, 0.3, 0.6, 0.9};
  std::size_t n = 10000;
  int repeats = 1;
  std::uint64_t seed = 0;
  EstimatorConfig estimator;
};

/// Normalized estimates divide by the Kozachenko-Leonenko entropy (geometric mean for the
/// interconcept mode, H(Y) for concepts-task), matching the closed-form normalization.
GaussBenchRow gauss_bench_point(GaussianMode mode, int d, double rho, std::size_t n, std::uint64_t seed,
                                const EstimatorConfig& estimator, int repeat = 0);
std::vector<GaussBenchRow> run_gauss_bench(const GaussBenchConfig& config);
std::string gauss_bench_csv(const std::vector<GaussBenchRow>& rows);

// --- Manifest -------------------------------------------------------------

std::string sha256_file(const std::filesystem::path& path);

/// manifest.json in `dir`: config hash, tool version, timestamps and a hash per listed file.
void write_manifest(const std::filesystem::path& dir, const nlohmann::json& config,
                    const std::vector<std::filesystem::path>& files, const std::string& started_at);

/// path -> sha256 as recorded in dir/manifest.json.
std::map<std::string, std::string> read_manifest_hashes(const std::filesystem::path& dir);

/// Re-hashes every listed file; returns the mismatching or missing paths.
std::vector<std::string> verify_manifest(const std::filesystem::path& dir);

std::string utc_timestamp();

// --- Reproduction bundles -------------------------------------------------

/// Known ids, in documentation order.
const std::vector<std::string>& reproduce_ids();

/// Runs the bundle and returns {id, seed, rows: [{quantity, artifact, target, tolerance, pass}], ...}.
/// Throws ConfigError for an unknown id. Files go to out_dir when it is non-empty.
nlohmann::json reproduce(const std::string& id, std::uint64_t seed, const std::filesystem::path& out_dir,
                         unsigned jobs = 1, int folds = 5);

}  // namespace leakage
