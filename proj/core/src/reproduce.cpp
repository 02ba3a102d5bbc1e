#include <cmath>

#include "leakage/error.hpp"
#include "leakage/experiment.hpp"
#include "leakage/random.hpp"
#include "leakage/text_io.hpp"

namespace leakage {

namespace {

nlohmann::json row(const std::string& quantity, double artifact, std::optional<double> target,
                   std::optional<double> tolerance, bool pass, const std::string& check) {
  nlohmann::json r = {{"quantity", quantity}, {"artifact", artifact}, {"check", check}, {"pass", pass}};
  r["target"] = target ? nlohmann::json(*target) : nlohmann::json(nullptr);
  r["tolerance"] = tolerance ? nlohmann::json(*tolerance) : nlohmann::json(nullptr);
  return r;
}

nlohmann::json near_row(const std::string& quantity, double artifact, double target, double tol) {
  return row(quantity, artifact, target, tol, std::abs(artifact - target) <= tol, "|artifact - target| <= tolerance");
}

bool contains_zero(const ScoreWithCI& s) { return s.ci95_low <= 0.0 && 0.0 <= s.ci95_high; }

ModelSpec cbm(const std::string& name, Encoding enc, double lambda) {
  ModelSpec m;
  m.name = name;
  m.kind = ModelKind::kCbm;
  m.cbm.encoding = enc;
  m.cbm.strategy = enc == Encoding::kHard ? Strategy::kIndependent : Strategy::kJoint;
  m.cbm.lambda = lambda;
  return m;
}

ModelSpec cem(const std::string& name, double lambda, double p_int) {
  ModelSpec m;
  m.name = name;
  m.kind = ModelKind::kCem;
  m.cem.lambda = lambda;
  m.cem.p_int = p_int;
  return m;
}

ExperimentConfig sweep(std::uint64_t seed, TaskVariant variant, double delta, std::vector<ModelSpec> models,
                       const std::filesystem::path& out, const std::string& sub, unsigned jobs, int folds) {
  ExperimentConfig c;
  c.master_seed = seed;
  c.dataset.seed = seed;
  c.dataset.variant = variant;
  c.dataset.delta = delta;
  c.models = std::move(models);
  c.folds = folds;
  c.jobs = jobs;
  if (!out.empty()) c.out_dir = out / sub;
  return c;
}

const ModelSummary& find(const ExperimentResult& r, const std::string& name) {
  for (const auto& m : r.models) {
    if (m.spec.name == name) return m;
  }
  throw Error("internal: model " + name + " missing from sweep");
}

nlohmann::json summaries(const ExperimentResult& r) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& m : r.models) j.push_back(to_json(m));
  return j;
}

nlohmann::json ci_row(const std::string& quantity, const ScoreWithCI& s, const std::string& check, bool pass) {
  nlohmann::json r = row(quantity, s.mean, std::nullopt, std::nullopt, pass, check);
  r["ci95"] = {s.ci95_low, s.ci95_high};
  return r;
}

nlohmann::json run_table3(std::uint64_t seed, int folds) {
  nlohmann::json rows = nlohmann::json::array();
  const std::pair<TaskVariant, double> cases[] = {
      {TaskVariant::kOriginal, 1.000}, {TaskVariant::kIncomplete, 0.786}, {TaskVariant::kMisspecified, 0.687}};
  for (const auto& [variant, target] : cases) {
    TabularToyConfig tc;
    tc.seed = seed;
    tc.variant = variant;
    const Dataset ds = gen_tabular_toy(tc);
    std::vector<double> acc;
    for (int f = 0; f < folds; ++f) acc.push_back(train_reference_head({}, ds, 200, 512, fold_seed(seed, f)).y_acc);
    const auto s = ci_from_values(acc);
    auto r = near_row("y_acc_k " + to_string(variant), s.mean, target, 0.03);
    r["ci95"] = {s.ci95_low, s.ci95_high};
    rows.push_back(r);
  }
  return {{"rows", rows}};
}

nlohmann::json run_table2(std::uint64_t seed, const std::filesystem::path& out, unsigned jobs, int folds) {
  const auto res = run_experiment(sweep(seed, TaskVariant::kOriginal, 0.25,
                                        {cbm("soft_l5", Encoding::kSoft, 5.0), cbm("logit_l5", Encoding::kLogit, 5.0)},
                                        out, "table2-tt", jobs, folds));
  const auto& soft = find(res, "soft_l5");
  const auto& logit = find(res, "logit_l5");
  nlohmann::json rows = nlohmann::json::array();
  const double target_soft[] = {0.993, 0.992, 0.992, 0.990, 0.990, 0.990};
  const double target_logit[] = {0.995, 0.995, 0.995, 0.991, 0.991, 0.991};
  const char* names[] = {"c_acc", "c_F1", "c_AUC", "y_acc", "y_F1", "y_AUC"};
  for (const auto* m : {&soft, &logit}) {
    const double* target = m == &soft ? target_soft : target_logit;
    for (int q = 0; q < 6; ++q) {
      double mean = 0.0;
      for (const auto& f : m->folds) {
        const auto mj = to_json(f.metrics);
        mean += mj[names[q]].is_null() ? 0.0 : mj[names[q]].get<double>() / static_cast<double>(m->folds.size());
      }
      rows.push_back(near_row(m->spec.name + " " + names[q], mean, target[q], 0.05));
    }
  }
  rows.push_back(near_row("soft_l5 s_int", soft.s_int.mean, 0.000, 0.02));
  rows.push_back(near_row("logit_l5 s_int", logit.s_int.mean, 0.301, 0.05));
  rows.push_back(row("logit_l5 s_int separation", logit.s_int.mean, std::nullopt, 0.15, logit.s_int.mean >= 0.15,
                     "artifact >= 0.15"));
  const auto verdict = leakage_compare(logit.ctl, logit.icl, soft.ctl, soft.icl);
  nlohmann::json v = row("leakage criterion logit_l5 vs soft_l5", 0.0, std::nullopt, std::nullopt,
                         verdict.outcome == ComparisonOutcome::kAHigher, "outcome == A_higher");
  v["verdict"] = to_json(verdict);
  rows.push_back(v);
  return {{"rows", rows}, {"models", summaries(res)}, {"reference_accuracy", res.reference.y_acc}};
}

nlohmann::json run_fig5(std::uint64_t seed, const std::filesystem::path& out, unsigned jobs, int folds) {
  nlohmann::json rows = nlohmann::json::array();
  nlohmann::json models = nlohmann::json::object();
  for (double delta : {0.25, 0.75}) {
    const std::string tag = "delta" + format_double(delta);
    auto cfg = sweep(seed, TaskVariant::kOriginal, delta, {cbm("hard", Encoding::kHard, 1.0)}, out, "fig5-tt/" + tag,
                     jobs, folds);
    cfg.ois = true;
    const auto res = run_experiment(cfg);
    const auto& hard = find(res, "hard");
    rows.push_back(ci_row("hard " + tag + " CTL", hard.ctl, "CI contains 0", contains_zero(hard.ctl)));
    rows.push_back(ci_row("hard " + tag + " ICL", hard.icl, "CI contains 0", contains_zero(hard.icl)));
    if (hard.ois) rows.push_back(ci_row("hard " + tag + " OIS", *hard.ois, "mean > 0", hard.ois->mean > 0.0));
    bool exact = true;
    for (const auto& f : hard.folds) exact = exact && f.intervention.s_int.value_or(1.0) == 0.0;
    rows.push_back(row("hard " + tag + " s_int", hard.s_int.mean, 0.0, 0.0, exact, "every fold exactly 0"));
    models[tag] = summaries(res);
  }
  return {{"rows", rows}, {"models", models}};
}

nlohmann::json run_fig7(std::uint64_t seed, const std::filesystem::path& out, unsigned jobs, int folds) {
  const auto res = run_experiment(sweep(seed, TaskVariant::kOriginal, 0.25,
                                        {cbm("soft_l0.01", Encoding::kSoft, 0.01), cbm("soft_l1", Encoding::kSoft, 1.0),
                                         cbm("soft_l5", Encoding::kSoft, 5.0)},
                                        out, "fig7-tt", jobs, folds));
  const auto& lo = find(res, "soft_l0.01");
  const auto& mid = find(res, "soft_l1");
  const auto& hi = find(res, "soft_l5");
  nlohmann::json rows = nlohmann::json::array();
  rows.push_back(ci_row("CTL soft_l0.01", lo.ctl, "above soft_l5 (non-overlapping)", ci_relation(lo.ctl, hi.ctl) > 0));
  rows.push_back(ci_row("CTL soft_l1", mid.ctl, "mean between soft_l0.01 and soft_l5",
                        lo.ctl.mean >= mid.ctl.mean && mid.ctl.mean >= hi.ctl.mean));
  rows.push_back(ci_row("CTL soft_l5", hi.ctl, "reference", true));
  for (const auto* m : {&lo, &mid, &hi}) rows.push_back(ci_row("ICL " + m->spec.name, m->icl, "reported", true));
  return {{"rows", rows}, {"models", summaries(res)}};
}

nlohmann::json run_fig8(std::uint64_t seed, const std::filesystem::path& out, unsigned jobs, int folds) {
  const auto full = run_experiment(sweep(seed, TaskVariant::kOriginal, 0.25,
                                         {cbm("soft_l0.01", Encoding::kSoft, 0.01)}, out, "fig8-tt/complete", jobs,
                                         folds));
  const auto part = run_experiment(sweep(seed, TaskVariant::kIncomplete, 0.25,
                                         {cbm("soft_l0.01", Encoding::kSoft, 0.01)}, out, "fig8-tt/incomplete", jobs,
                                         folds));
  const auto& a = find(part, "soft_l0.01");
  const auto& b = find(full, "soft_l0.01");
  nlohmann::json rows = nlohmann::json::array();
  rows.push_back(ci_row("CTL incomplete soft_l0.01", a.ctl, "above complete (non-overlapping)",
                        ci_relation(a.ctl, b.ctl) > 0));
  rows.push_back(ci_row("CTL complete soft_l0.01", b.ctl, "reference", true));
  const auto verdict = leakage_compare(a.ctl, a.icl, b.ctl, b.icl);
  nlohmann::json v = row("leakage criterion incomplete vs complete", 0.0, std::nullopt, std::nullopt,
                         verdict.outcome == ComparisonOutcome::kAHigher, "outcome == A_higher");
  v["verdict"] = to_json(verdict);
  rows.push_back(v);
  return {{"rows", rows}, {"models", {{"complete", summaries(full)}, {"incomplete", summaries(part)}}}};
}

nlohmann::json run_fig11(std::uint64_t seed, const std::filesystem::path& out, unsigned jobs, int folds) {
  const auto res = run_experiment(sweep(seed, TaskVariant::kOriginal, 0.25,
                                        {cem("cem_l0.01_p0", 0.01, 0.0), cem("cem_l5_p0.5", 5.0, 0.5)}, out,
                                        "fig11-tt", jobs, folds));
  const auto& lo = find(res, "cem_l0.01_p0");
  const auto& hi = find(res, "cem_l5_p0.5");
  nlohmann::json rows = nlohmann::json::array();
  rows.push_back(ci_row("cem_ic cem_l5_p0.5", *hi.cem_ic, "above cem_l0.01_p0 (non-overlapping)",
                        ci_relation(*hi.cem_ic, *lo.cem_ic) > 0));
  rows.push_back(ci_row("cem_ic cem_l0.01_p0", *lo.cem_ic, "reference", true));
  rows.push_back(ci_row("cem_self cem_l5_p0.5", *hi.cem_self, "above cem_l0.01_p0 (non-overlapping)",
                        ci_relation(*hi.cem_self, *lo.cem_self) > 0));
  rows.push_back(ci_row("cem_self cem_l0.01_p0", *lo.cem_self, "reference", true));
  rows.push_back(ci_row("CTL cem_l5_p0.5", hi.ctl, "mean below cem_l0.01_p0", hi.ctl.mean < lo.ctl.mean));
  rows.push_back(ci_row("ICL cem_l5_p0.5", hi.icl, "mean below cem_l0.01_p0", hi.icl.mean < lo.icl.mean));
  rows.push_back(ci_row("cem_align cem_l5_p0.5", *hi.cem_align, "above cem_l0.01_p0 mean",
                        hi.cem_align->mean > lo.cem_align->mean));
  return {{"rows", rows}, {"models", summaries(res)}};
}

nlohmann::json run_gauss(std::uint64_t seed) {
  GaussBenchConfig gc;
  gc.seed = seed;
  const auto rows_data = run_gauss_bench(gc);
  nlohmann::json rows = nlohmann::json::array();
  double prev = -1.0;
  for (const auto& r : rows_data) {
    if (r.d == 1) {
      rows.push_back(near_row("MI d=1 rho=" + format_double(r.rho), r.estimated_mi, r.closed_form_mi, 0.02));
    }
    if (r.rho == 0.3) {
      rows.push_back(row("normalized MI d=" + std::to_string(r.d) + " rho=0.3", r.estimated_norm_mi,
                         r.closed_form_norm_mi, std::nullopt, r.estimated_norm_mi >= prev - 0.01,
                         "not below the previous dimension by more than 0.01"));
      prev = r.estimated_norm_mi;
    }
  }
  return {{"rows", rows}, {"csv", gauss_bench_csv(rows_data)}};
}

}  // namespace

const std::vector<std::string>& reproduce_ids() {
  static const std::vector<std::string> ids = {"table2-tt", "table3", "fig5-tt", "fig7-tt", "fig8-tt", "fig11-tt",
                                               "gauss"};
  return ids;
}

nlohmann::json reproduce(const std::string& id, std::uint64_t seed, const std::filesystem::path& out_dir,
                         unsigned jobs, int folds) {
  if (folds < 2) throw ConfigError("reproduce needs at least 2 folds for confidence intervals");
  nlohmann::json body;
  if (id == "table3") {
    body = run_table3(seed, folds);
  } else if (id == "table2-tt") {
    body = run_table2(seed, out_dir, jobs, folds);
  } else if (id == "fig5-tt") {
    body = run_fig5(seed, out_dir, jobs, folds);
  } else if (id == "fig7-tt") {
    body = run_fig7(seed, out_dir, jobs, folds);
  } else if (id == "fig8-tt") {
    body = run_fig8(seed, out_dir, jobs, folds);
  } else if (id == "fig11-tt") {
    body = run_fig11(seed, out_dir, jobs, folds);
  } else if (id == "gauss") {
    body = run_gauss(seed);
  } else {
    std::string known;
    for (const auto& k : reproduce_ids()) known += (known.empty() ? "" : ", ") + k;
    throw ConfigError("unknown reproduce id '" + id + "' (known: " + known + ")");
  }
  bool all = true;
  for (const auto& r : body["rows"]) all = all && r["pass"].get<bool>();
  nlohmann::json report = {{"id", id}, {"seed", seed}, {"folds", folds}, {"tool_version", kToolVersion},
                           {"all_pass", all}};
  report.update(body);
  report["ci_note"] =
      "fold CIs are over per-fold means; per-fold repeat CIs (jitter seeds) are in models[].folds[].report";
  if (!out_dir.empty()) {
    const std::string started = utc_timestamp();
    std::vector<std::filesystem::path> files;
    write_text(out_dir / "reports" / (id + ".json"), report.dump(2) + "\n");
    files.emplace_back("reports/" + id + ".json");
    if (report.contains("csv")) {
      write_text(out_dir / "reports" / (id + ".csv"), report["csv"].get<std::string>());
      files.emplace_back("reports/" + id + ".csv");
    }
    write_manifest(out_dir, {{"reproduce", id}, {"seed", seed}, {"folds", folds}}, files, started);
  }
  return report;
}

}  // namespace leakage
