#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "leakage/scores.hpp"

namespace leakage {

struct LeakageReport {
  ScoreWithCI ctl;
  ScoreWithCI icl;
  std::vector<ScoreWithCI> ctl_per_concept;
  std::vector<ScoreWithCI> icl_per_concept;
  Eigen::MatrixXd icl_pairwise;  // mean over repeats
  std::optional<ScoreWithCI> cem_ct, cem_ic, cem_self, cem_align;
  std::optional<double> s_int;
  std::optional<ScoreWithCI> ois;
  std::vector<std::string> ois_unreliable;
  EstimatorConfig estimator_config;
  std::vector<std::uint64_t> seeds;  // jitter seed of every repeat
};

struct AuditOptions {
  EstimatorConfig estimator;
  std::uint64_t base_seed = 0;
  int repeats = 5;
  bool cem = false;          // CEM scores; requires embeddings
  bool with_ois = false;
  OisOptions ois;
};

/// All scores over `repeats` jitter seeds base_seed, base_seed + 1, ...
LeakageReport audit(const ConceptData& data, const AuditOptions& options);

nlohmann::json to_json(const LeakageReport& r);
LeakageReport leakage_report_from_json(const nlohmann::json& j);

/// One row per scalar score: score,mean,ci95_low,ci95_high,repeats.
std::string to_csv(const LeakageReport& r);

ComparisonVerdict leakage_compare(const LeakageReport& a, const LeakageReport& b);

nlohmann::json to_json(const EstimatorConfig& c);

}  // namespace leakage
