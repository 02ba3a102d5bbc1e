#include "leakage/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "leakage/error.hpp"
#include "leakage/metrics.hpp"
#include "leakage/random.hpp"
#include "leakage/text_io.hpp"

namespace leakage {

nlohmann::json to_json(const ModelSpec& m) {
  nlohmann::json j = m.kind == ModelKind::kCem ? to_json(m.cem) : to_json(m.cbm);
  j.erase("seed");
  j["name"] = m.name;
  j["kind"] = to_string(m.kind);
  return j;
}

ModelSpec model_spec_from_json(const nlohmann::json& j) {
  ModelSpec m;
  if (!j.is_object()) throw ConfigError("model entry must be an object");
  m.name = j.value("name", std::string());
  const auto kind = j.value("kind", std::string("cbm"));
  if (kind == "cbm") {
    m.kind = ModelKind::kCbm;
    m.cbm = cbm_config_from_json(j);
  } else if (kind == "cem") {
    m.kind = ModelKind::kCem;
    m.cem = cem_config_from_json(j);
  } else {
    throw ConfigError("unknown model kind '" + kind + "' (expected cbm or cem)");
  }
  const nlohmann::json known = m.kind == ModelKind::kCem ? to_json(m.cem) : to_json(m.cbm);
  for (const auto& [key, value] : j.items()) {
    if (key != "name" && key != "kind" && !known.contains(key)) {
      throw ConfigError("model entry: unknown key '" + key + "'");
    }
  }
  if (m.name.empty()) {
    std::ostringstream s;
    if (m.kind == ModelKind::kCem) {
      s << "cem_l" << format_double(m.cem.lambda) << "_p" << format_double(m.cem.p_int);
    } else {
      s << to_string(m.cbm.encoding) << '_' << to_string(m.cbm.strategy) << "_l" << format_double(m.cbm.lambda);
    }
    m.name = s.str();
  }
  for (char c : m.name) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.')) {
      throw ConfigError("model name '" + m.name + "' may only use letters, digits, '_', '-' and '.'");
    }
  }
  return m;
}

void validate(const ExperimentConfig& c) {
  if (c.folds < 1) throw ConfigError("folds must be at least 1");
  if (c.repeats < 2) throw ConfigError("repeats must be at least 2");
  if (c.policy_seeds < 1) throw ConfigError("policy_seeds must be at least 1");
  if (c.reference_epochs < 1) throw ConfigError("reference_epochs must be at least 1");
  if (c.jobs < 1) throw ConfigError("jobs must be at least 1");
  for (std::size_t a = 0; a < c.models.size(); ++a) {
    if (c.models[a].kind == ModelKind::kCem) {
      validate(c.models[a].cem);
    } else {
      validate(c.models[a].cbm);
    }
    for (std::size_t b = 0; b < a; ++b) {
      if (c.models[a].name == c.models[b].name) throw ConfigError("duplicate model name '" + c.models[a].name + "'");
    }
  }
}

nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json models = nlohmann::json::array();
  for (const auto& m : c.models) models.push_back(to_json(m));
  if (!c.dataset_path.empty()) {
    return {{"dataset_path", c.dataset_path.generic_string()}, {"models", models}, {"folds", c.folds},
            {"repeats", c.repeats}, {"policy_seeds", c.policy_seeds}, {"reference_epochs", c.reference_epochs},
            {"ois", c.ois}, {"seed", c.master_seed}};
  }
  return {{"dataset", to_json(c.dataset)},   {"models", models},
          {"folds", c.folds},                {"repeats", c.repeats},
          {"policy_seeds", c.policy_seeds},  {"reference_epochs", c.reference_epochs},
          {"ois", c.ois},                    {"seed", c.master_seed}};
}

ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  if (!j.is_object()) throw ConfigError("experiment config must be a JSON object");
  static const std::set<std::string> kKeys = {"seed", "dataset", "dataset_path", "models", "folds", "repeats",
                                               "policy_seeds", "reference_epochs", "ois", "jobs", "out"};
  for (const auto& [key, value] : j.items()) {
    if (!kKeys.count(key)) throw ConfigError("experiment config: unknown key '" + key + "'");
  }
  try {
    c.master_seed = j.value("seed", c.master_seed);
    nlohmann::json ds = j.value("dataset", nlohmann::json::object());
    if (!ds.contains("seed")) ds["seed"] = c.master_seed;
    c.dataset = tabular_toy_config_from_json(ds);
    for (const auto& m : j.value("models", nlohmann::json::array())) c.models.push_back(model_spec_from_json(m));
    c.folds = j.value("folds", c.folds);
    c.repeats = j.value("repeats", c.repeats);
    c.policy_seeds = j.value("policy_seeds", c.policy_seeds);
    c.reference_epochs = j.value("reference_epochs", c.reference_epochs);
    c.ois = j.value("ois", c.ois);
    c.jobs = j.value("jobs", c.jobs);
    if (j.contains("out")) c.out_dir = j.at("out").get<std::string>();
    if (j.contains("dataset_path")) c.dataset_path = j.at("dataset_path").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("experiment config: ") + e.what());
  }
  validate(c);
  return c;
}

std::uint64_t fold_seed(std::uint64_t master_seed, int fold) {
  return derive_seed(master_seed, {string_tag("fold"), static_cast<std::uint64_t>(fold)});
}

std::uint64_t audit_seed(std::uint64_t master_seed, int fold) {
  return derive_seed(master_seed, {string_tag("audit"), static_cast<std::uint64_t>(fold)});
}

std::vector<std::uint64_t> policy_seeds(std::uint64_t master_seed, int count) {
  std::vector<std::uint64_t> out;
  for (int p = 0; p < count; ++p) {
    out.push_back(derive_seed(master_seed, {string_tag("policy"), static_cast<std::uint64_t>(p)}));
  }
  return out;
}

double reference_accuracy_for(const TrainedModel& model, const Dataset& dataset, const ReferenceHead& reference) {
  if (model.kind == ModelKind::kCbm && model.cbm.strategy == Strategy::kIndependent) {
    const Dataset test = dataset.subset(Split::kTest);
    const ConceptMatrix all = ConceptMatrix::Ones(test.concepts.rows(), test.concepts.cols());
    const nn::Matrix p = task_probabilities(model, test.inputs, test.concepts, all);
    std::vector<int> yhat(test.size());
    for (Eigen::Index r = 0; r < p.rows(); ++r) {
      Eigen::Index best = 0;
      p.row(r).maxCoeff(&best);
      yhat[static_cast<std::size_t>(r)] = static_cast<int>(best);
    }
    return accuracy(yhat, test.labels);
  }
  return reference.y_acc;
}

FoldResult evaluate_model(const TrainedModel& model, const Dataset& dataset, const ReferenceHead& reference,
                          const AuditOptions& audit_options, const std::vector<std::uint64_t>& seeds) {
  FoldResult fr;
  const Dataset test = dataset.subset(Split::kTest);
  const auto& ids = dataset.splits.test;
  const auto dump = predict(model, test, ids);
  AuditOptions opts = audit_options;
  opts.cem = model.kind == ModelKind::kCem;
  fr.report = audit(ConceptData::from_dump(dump), opts);
  fr.reference_accuracy = reference_accuracy_for(model, dataset, reference);
  fr.intervention = intervene_mean(model, test, seeds, fr.reference_accuracy, ids);
  fr.report.s_int = fr.intervention.s_int;
  fr.metrics = evaluate(model, test);
  return fr;
}

nlohmann::json to_json(const ModelSummary& s) {
  nlohmann::json folds = nlohmann::json::array();
  for (const auto& f : s.folds) {
    folds.push_back({{"fold", f.fold},
                     {"seed", f.seed},
                     {"metrics", to_json(f.metrics)},
                     {"report", to_json(f.report)},
                     {"intervention", to_json(f.intervention)},
                     {"reference_accuracy", f.reference_accuracy}});
  }
  auto opt = [](const std::optional<ScoreWithCI>& v) { return v ? to_json(*v) : nlohmann::json(nullptr); };
  return {{"model", to_json(s.spec)},
          {"fold_ci",
           {{"ctl", to_json(s.ctl)},
            {"icl", to_json(s.icl)},
            {"cem_ct", opt(s.cem_ct)},
            {"cem_ic", opt(s.cem_ic)},
            {"cem_self", opt(s.cem_self)},
            {"cem_align", opt(s.cem_align)},
            {"ois", opt(s.ois)},
            {"s_int", to_json(s.s_int)},
            {"y_acc", to_json(s.y_acc)},
            {"c_acc", to_json(s.c_acc)}}},
          {"folds", folds}};
}

ConceptData align_dump(const ActivationDump& dump, const Dataset& dataset) {
  std::vector<std::string> bad;
  const auto n = static_cast<Eigen::Index>(dump.sample_ids.size());
  if (dump.concepts.cols() != dataset.num_concepts()) {
    throw AlignmentError("dump has " + std::to_string(dump.concepts.cols()) + " concepts, dataset has " +
                         std::to_string(dataset.num_concepts()));
  }
  ConceptData d;
  d.true_concepts.resize(n, dataset.num_concepts());
  d.labels.resize(dump.sample_ids.size());
  d.predicted = dump.activations;
  d.embeddings = dump.embeddings;
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto id = dump.sample_ids[static_cast<std::size_t>(r)];
    if (id >= dataset.size()) {
      bad.push_back(std::to_string(id) + " (no such row)");
      continue;
    }
    const auto row = static_cast<Eigen::Index>(id);
    if (dump.concepts.row(r) != dataset.concepts.row(row) ||
        dump.labels[static_cast<std::size_t>(r)] != dataset.labels[id]) {
      bad.push_back(std::to_string(id) + " (concepts/label differ)");
      continue;
    }
    d.true_concepts.row(r) = dataset.concepts.row(row);
    d.labels[static_cast<std::size_t>(r)] = dataset.labels[id];
  }
  if (!bad.empty()) {
    std::string msg = std::to_string(bad.size()) + " dump rows do not align with the dataset:";
    for (std::size_t i = 0; i < bad.size() && i < 20; ++i) msg += " " + bad[i];
    if (bad.size() > 20) msg += " ...";
    throw AlignmentError(msg);
  }
  d.validate();
  return d;
}

namespace {

std::optional<ScoreWithCI> fold_ci(const std::vector<FoldResult>& folds,
                                   const std::optional<ScoreWithCI> LeakageReport::*field) {
  std::vector<double> v;
  for (const auto& f : folds) {
    if (!(f.report.*field)) return std::nullopt;
    v.push_back((f.report.*field)->mean);
  }
  return ci_from_values(v);
}

void summarize(ModelSummary& s) {
  std::vector<double> ctl, icl, sint, yacc, cacc;
  for (const auto& f : s.folds) {
    ctl.push_back(f.report.ctl.mean);
    icl.push_back(f.report.icl.mean);
    sint.push_back(f.intervention.s_int.value_or(0.0));
    yacc.push_back(f.metrics.y_acc);
    cacc.push_back(f.metrics.c_acc);
  }
  s.ctl = ci_from_values(ctl);
  s.icl = ci_from_values(icl);
  s.s_int = ci_from_values(sint);
  s.y_acc = ci_from_values(yacc);
  s.c_acc = ci_from_values(cacc);
  s.cem_ct = fold_ci(s.folds, &LeakageReport::cem_ct);
  s.cem_ic = fold_ci(s.folds, &LeakageReport::cem_ic);
  s.cem_self = fold_ci(s.folds, &LeakageReport::cem_self);
  s.cem_align = fold_ci(s.folds, &LeakageReport::cem_align);
  s.ois = fold_ci(s.folds, &LeakageReport::ois);
}

std::string job_stem(const ModelSpec& m, int fold) { return m.name + "_f" + std::to_string(fold); }

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config) {
  validate(config);
  const std::string started = utc_timestamp();
  const bool write = !config.out_dir.empty();
  const auto& out = config.out_dir;

  if (!config.dataset_path.empty() && !std::filesystem::exists(config.dataset_path)) {
    throw Error("dataset not found: " + config.dataset_path.string());
  }
  const Dataset dataset = config.dataset_path.empty() ? gen_tabular_toy(config.dataset) : read_dataset(config.dataset_path);
  ExperimentResult res;
  const int ref_batch = 512;
  res.reference = train_reference_head({}, dataset, config.reference_epochs, ref_batch,
                                       derive_seed(config.master_seed, string_tag("reference")));
  std::mutex written_mutex;
  auto record = [&](const std::filesystem::path& rel) {
    std::lock_guard<std::mutex> lock(written_mutex);
    res.written.push_back(rel);
  };
  if (write) {
    write_dataset(dataset, out / "datasets" / "tabular_toy.csv");
    record("datasets/tabular_toy.csv");
    record("datasets/tabular_toy.json");
  }

  const auto seeds = policy_seeds(config.master_seed, config.policy_seeds);
  const std::size_t n_jobs = config.models.size() * static_cast<std::size_t>(config.folds);
  std::vector<FoldResult> results(n_jobs);
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr first_error;

  auto worker = [&]() {
    for (;;) {
      const std::size_t job = next.fetch_add(1);
      if (job >= n_jobs) return;
      try {
        const auto& spec = config.models[job / static_cast<std::size_t>(config.folds)];
        const int fold = static_cast<int>(job % static_cast<std::size_t>(config.folds));
        const std::uint64_t seed = fold_seed(config.master_seed, fold);
        TrainedModel model;
        if (spec.kind == ModelKind::kCem) {
          CEMConfig c = spec.cem;
          c.seed = seed;
          model = train_cem(c, dataset);
        } else {
          CBMConfig c = spec.cbm;
          c.seed = seed;
          model = train_cbm(c, dataset);
        }
        AuditOptions ao;
        ao.base_seed = audit_seed(config.master_seed, fold);
        ao.repeats = config.repeats;
        ao.with_ois = config.ois;
        ao.ois.seed = derive_seed(ao.base_seed, string_tag("ois"));
        FoldResult fr = evaluate_model(model, dataset, res.reference, ao, seeds);
        fr.fold = fold;
        fr.seed = seed;
        if (write) {
          const std::string stem = job_stem(spec, fold);
          save_checkpoint(model, out / "checkpoints" / (stem + ".json"));
          record("checkpoints/" + stem + ".json");
          record("checkpoints/" + stem + ".bin");
          const Dataset test = dataset.subset(Split::kTest);
          write_dump(predict(model, test, dataset.splits.test), out / "dumps" / (stem + ".csv"));
          record("dumps/" + stem + ".csv");
          if (model.kind == ModelKind::kCem) record("dumps/" + stem + ".emb.bin");
          write_text(out / "reports" / (stem + ".json"), to_json(fr.report).dump(2) + "\n");
          write_text(out / "reports" / (stem + ".csv"), to_csv(fr.report));
          write_text(out / "reports" / (stem + "_metrics.json"), to_json(fr.metrics).dump(2) + "\n");
          write_text(out / "reports" / (stem + "_intervention.json"), to_json(fr.intervention).dump(2) + "\n");
          for (const char* suffix : {".json", ".csv", "_metrics.json", "_intervention.json"}) {
            record("reports/" + stem + suffix);
          }
        }
        results[job] = std::move(fr);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        next.store(n_jobs);
      }
    }
  };
  const unsigned n_threads = std::min<unsigned>(config.jobs, static_cast<unsigned>(std::max<std::size_t>(1, n_jobs)));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (first_error) std::rethrow_exception(first_error);

  for (std::size_t m = 0; m < config.models.size(); ++m) {
    ModelSummary s;
    s.spec = config.models[m];
    for (int f = 0; f < config.folds; ++f) {
      s.folds.push_back(results[m * static_cast<std::size_t>(config.folds) + static_cast<std::size_t>(f)]);
    }
    summarize(s);
    res.models.push_back(std::move(s));
  }

  if (write) {
    nlohmann::json summary = {{"reference_accuracy", res.reference.y_acc}, {"models", nlohmann::json::array()}};
    for (const auto& s : res.models) summary["models"].push_back(to_json(s));
    write_text(out / "reports" / "summary.json", summary.dump(2) + "\n");
    record("reports/summary.json");
    std::sort(res.written.begin(), res.written.end());
    write_manifest(out, to_json(config), res.written, started);
  }
  return res;
}

// ---------------------------------------------------------------------------

GaussBenchRow gauss_bench_point(GaussianMode mode, int d, double rho, std::size_t n, std::uint64_t seed,
                                const EstimatorConfig& estimator, int repeat) {
  GaussianBenchConfig gc{mode, d, rho, n, derive_seed(seed, {string_tag("gauss"), static_cast<std::uint64_t>(repeat)})};
  const auto [x, y] = gen_gaussian_bench(gc);
  const auto cf = closed_form_gaussian(gc);
  EstimatorConfig cfg = estimator;
  cfg.jitter_seed = derive_seed(seed, {string_tag("gauss_jitter"), static_cast<std::uint64_t>(repeat)});

  GaussBenchRow row;
  row.mode = mode;
  row.d = d;
  row.rho = rho;
  row.repeat = repeat;
  row.closed_form_mi = cf.mi;
  row.closed_form_norm_mi = cf.normalized_mi;
  row.estimated_mi = ksg_mi(x, y, cfg).value;
  EstimatorConfig hcfg = cfg;
  hcfg.jitter_seed = derive_seed(cfg.jitter_seed, string_tag("entropy_y"));
  const double hy = kl_entropy(y, hcfg).value;
  if (mode == GaussianMode::kInterconcept) {
    hcfg.jitter_seed = derive_seed(cfg.jitter_seed, string_tag("entropy_x"));
    const double hx = kl_entropy(x, hcfg).value;
    row.estimated_norm_mi = row.estimated_mi / std::sqrt(hx * hy);
  } else {
    row.estimated_norm_mi = row.estimated_mi / hy;
  }
  return row;
}

std::vector<GaussBenchRow> run_gauss_bench(const GaussBenchConfig& config) {
  if (config.repeats < 1) throw ConfigError("gauss-bench: repeats must be positive");
  std::vector<GaussBenchRow> rows;
  for (auto mode : config.modes) {
    for (int d : config.dims) {
      for (double rho : config.rhos) {
        validate(GaussianBenchConfig{mode, d, rho, config.n, config.seed});
      }
    }
  }
  for (auto mode : config.modes) {
    for (int d : config.dims) {
      for (double rho : config.rhos) {
        for (int r = 0; r < config.repeats; ++r) {
          rows.push_back(gauss_bench_point(mode, d, rho, config.n, config.seed, config.estimator, r));
        }
      }
    }
  }
  return rows;
}

std::string gauss_bench_csv(const std::vector<GaussBenchRow>& rows) {
  std::ostringstream out;
  out << "mode,d,rho,estimated_mi,estimated_norm_mi,closed_form_mi,closed_form_norm_mi,repeat\n";
  for (const auto& r : rows) {
    out << to_string(r.mode) << ',' << r.d << ',' << format_double(r.rho) << ',' << format_double(r.estimated_mi)
        << ',' << format_double(r.estimated_norm_mi) << ',' << format_double(r.closed_form_mi) << ','
        << format_double(r.closed_form_norm_mi) << ',' << r.repeat << '\n';
  }
  return out.str();
}

}  // namespace leakage
