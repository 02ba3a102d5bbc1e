#include "leakage/report.hpp"

#include <sstream>

#include "leakage/error.hpp"
#include "leakage/text_io.hpp"

namespace leakage {

namespace {

std::optional<ScoreWithCI> optional_score(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return score_with_ci_from_json(j.at(key));
}

void csv_row(std::ostringstream& out, const std::string& name, const ScoreWithCI& s) {
  out << name << ',' << format_double(s.mean) << ',' << format_double(s.ci95_low) << ','
      << format_double(s.ci95_high) << ',' << s.repeats << '\n';
}

const char* search_name(neighbors::SearchMethod m) {
  switch (m) {
    case neighbors::SearchMethod::kBruteForce: return "brute_force";
    case neighbors::SearchMethod::kKdTree: return "kd_tree";
    default: return "auto";
  }
}

}  // namespace

nlohmann::json to_json(const EstimatorConfig& c) {
  return {{"k_neighbors", c.k_neighbors},
          {"jitter_amplitude", c.jitter_amplitude},
          {"jitter_seed", c.jitter_seed},
          {"search", search_name(c.search)}};
}

LeakageReport audit(const ConceptData& data, const AuditOptions& options) {
  data.validate();
  if (options.repeats < 2) throw ConfigError("audit: repeats must be at least 2");
  if (options.cem && !data.embeddings) {
    throw MissingFieldError("audit: CEM scores requested but the dump has no embedding sidecar");
  }
  const int k = data.num_concepts();
  LeakageReport rep;
  rep.estimator_config = options.estimator;

  std::vector<double> ctl_v, icl_v, ct_v, ic_v, self_v, align_v;
  std::vector<std::vector<double>> ctl_pc(static_cast<std::size_t>(k)), icl_pc(static_cast<std::size_t>(k));
  rep.icl_pairwise = Eigen::MatrixXd::Zero(k, k);
  for (int r = 0; r < options.repeats; ++r) {
    EstimatorConfig cfg = options.estimator;
    cfg.jitter_seed = options.base_seed + static_cast<std::uint64_t>(r);
    rep.seeds.push_back(cfg.jitter_seed);
    const auto v = ctl_icl_values(data, cfg);
    ctl_v.push_back(v.ctl);
    icl_v.push_back(v.icl);
    for (int i = 0; i < k; ++i) {
      ctl_pc[static_cast<std::size_t>(i)].push_back(v.ctl_per_concept[static_cast<std::size_t>(i)]);
      icl_pc[static_cast<std::size_t>(i)].push_back(v.icl_per_concept[static_cast<std::size_t>(i)]);
    }
    rep.icl_pairwise += v.icl_pairwise / options.repeats;
    if (options.cem) {
      ct_v.push_back(cem_ct(data, cfg));
      if (k > 1) ic_v.push_back(cem_ic(data, cfg));
      self_v.push_back(cem_self(data, cfg));
      align_v.push_back(cem_align(data, cfg));
    }
  }
  rep.estimator_config.jitter_seed = options.base_seed;
  rep.ctl = ci_from_values(ctl_v);
  rep.icl = ci_from_values(icl_v);
  for (int i = 0; i < k; ++i) {
    rep.ctl_per_concept.push_back(ci_from_values(ctl_pc[static_cast<std::size_t>(i)]));
    rep.icl_per_concept.push_back(ci_from_values(icl_pc[static_cast<std::size_t>(i)]));
  }
  if (options.cem) {
    rep.cem_ct = ci_from_values(ct_v);
    if (!ic_v.empty()) rep.cem_ic = ci_from_values(ic_v);
    rep.cem_self = ci_from_values(self_v);
    rep.cem_align = ci_from_values(align_v);
  }
  if (options.with_ois) {
    const auto o = ois(data, options.ois);
    rep.ois = o.score;
    rep.ois_unreliable = o.unreliable_cells;
  }
  return rep;
}

nlohmann::json to_json(const LeakageReport& r) {
  nlohmann::json j;
  j["ctl"] = to_json(r.ctl);
  j["icl"] = to_json(r.icl);
  j["ctl_per_concept"] = nlohmann::json::array();
  for (const auto& s : r.ctl_per_concept) j["ctl_per_concept"].push_back(to_json(s));
  j["icl_per_concept"] = nlohmann::json::array();
  for (const auto& s : r.icl_per_concept) j["icl_per_concept"].push_back(to_json(s));
  j["icl_pairwise"] = nlohmann::json::array();
  for (Eigen::Index i = 0; i < r.icl_pairwise.rows(); ++i) {
    std::vector<double> row(static_cast<std::size_t>(r.icl_pairwise.cols()));
    for (Eigen::Index c = 0; c < r.icl_pairwise.cols(); ++c) row[static_cast<std::size_t>(c)] = r.icl_pairwise(i, c);
    j["icl_pairwise"].push_back(row);
  }
  auto opt = [&](const char* key, const std::optional<ScoreWithCI>& s) {
    j[key] = s ? to_json(*s) : nlohmann::json(nullptr);
  };
  opt("cem_ct", r.cem_ct);
  opt("cem_ic", r.cem_ic);
  opt("cem_self", r.cem_self);
  opt("cem_align", r.cem_align);
  j["s_int"] = r.s_int ? nlohmann::json(*r.s_int) : nlohmann::json(nullptr);
  opt("ois", r.ois);
  if (!r.ois_unreliable.empty()) j["ois_unreliable"] = r.ois_unreliable;
  j["estimator_config"] = to_json(r.estimator_config);
  j["seeds"] = r.seeds;
  return j;
}

LeakageReport leakage_report_from_json(const nlohmann::json& j) {
  LeakageReport r;
  if (!j.contains("ctl") || !j.contains("icl")) throw MissingFieldError("leakage report lacks ctl/icl");
  r.ctl = score_with_ci_from_json(j.at("ctl"));
  r.icl = score_with_ci_from_json(j.at("icl"));
  for (const auto& s : j.value("ctl_per_concept", nlohmann::json::array())) {
    r.ctl_per_concept.push_back(score_with_ci_from_json(s));
  }
  for (const auto& s : j.value("icl_per_concept", nlohmann::json::array())) {
    r.icl_per_concept.push_back(score_with_ci_from_json(s));
  }
  const auto pw = j.value("icl_pairwise", nlohmann::json::array());
  r.icl_pairwise = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(pw.size()), static_cast<Eigen::Index>(pw.size()));
  for (std::size_t i = 0; i < pw.size(); ++i) {
    for (std::size_t c = 0; c < pw[i].size() && c < pw.size(); ++c) {
      r.icl_pairwise(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = pw[i][c].get<double>();
    }
  }
  r.cem_ct = optional_score(j, "cem_ct");
  r.cem_ic = optional_score(j, "cem_ic");
  r.cem_self = optional_score(j, "cem_self");
  r.cem_align = optional_score(j, "cem_align");
  if (j.contains("s_int") && !j["s_int"].is_null()) r.s_int = j["s_int"].get<double>();
  r.ois = optional_score(j, "ois");
  if (j.contains("estimator_config")) {
    const auto& e = j["estimator_config"];
    r.estimator_config.k_neighbors = e.value("k_neighbors", 3);
    r.estimator_config.jitter_amplitude = e.value("jitter_amplitude", 1e-10);
    r.estimator_config.jitter_seed = e.value("jitter_seed", std::uint64_t{0});
  }
  r.seeds = j.value("seeds", std::vector<std::uint64_t>{});
  return r;
}

std::string to_csv(const LeakageReport& r) {
  std::ostringstream out;
  out << "score,mean,ci95_low,ci95_high,repeats\n";
  csv_row(out, "ctl", r.ctl);
  csv_row(out, "icl", r.icl);
  for (std::size_t i = 0; i < r.ctl_per_concept.size(); ++i) csv_row(out, "ctl_" + std::to_string(i), r.ctl_per_concept[i]);
  for (std::size_t i = 0; i < r.icl_per_concept.size(); ++i) csv_row(out, "icl_" + std::to_string(i), r.icl_per_concept[i]);
  for (Eigen::Index i = 0; i < r.icl_pairwise.rows(); ++i) {
    for (Eigen::Index c = i + 1; c < r.icl_pairwise.cols(); ++c) {
      out << "icl_" << i << '_' << c << ',' << format_double(r.icl_pairwise(i, c)) << ",,,\n";
    }
  }
  if (r.cem_ct) csv_row(out, "cem_ct", *r.cem_ct);
  if (r.cem_ic) csv_row(out, "cem_ic", *r.cem_ic);
  if (r.cem_self) csv_row(out, "cem_self", *r.cem_self);
  if (r.cem_align) csv_row(out, "cem_align", *r.cem_align);
  if (r.s_int) out << "s_int," << format_double(*r.s_int) << ",,,\n";
  if (r.ois) csv_row(out, "ois", *r.ois);
  return out.str();
}

ComparisonVerdict leakage_compare(const LeakageReport& a, const LeakageReport& b) {
  return leakage_compare(a.ctl, a.icl, b.ctl, b.icl);
}

}  // namespace leakage
