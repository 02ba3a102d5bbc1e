#include <cstdlib>
#include <iostream>
#include <iomanip>
#include <map>
#include <sstream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "leakage/error.hpp"
#include "leakage/experiment.hpp"
#include "leakage/random.hpp"
#include "leakage/text_io.hpp"

namespace fs = std::filesystem;
using namespace leakage;

namespace {

std::string fmt4(double v) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(4) << v;
  return s.str();
}

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  unsigned jobs = 1;
  std::optional<int> repeats;
  std::optional<int> folds;
  bool cem = false;
  bool verify = false;
};

std::uint64_t master_seed(const Common& c) {
  if (c.seed) return *c.seed;
  if (const char* env = std::getenv("AUDIT_SEED"); env != nullptr && *env != '\0') {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(env, &used);
      if (used == std::string(env).size()) return v;
    } catch (const std::exception&) {
    }
    throw ConfigError(std::string("AUDIT_SEED is not an unsigned integer: '") + env + "'");
  }
  return 0;
}

nlohmann::json load_json(const std::string& path) {
  if (path.empty()) return nlohmann::json::object();
  if (!fs::exists(path)) throw ConfigError("config file not found: " + path);
  try {
    return nlohmann::json::parse(read_text(path));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path + " is not valid JSON: " + e.what());
  }
}

std::map<std::string, std::string> previous_hashes(const Common& c) {
  if (!c.verify) return {};
  if (c.out.empty()) throw ConfigError("--verify needs --out pointing at a previous run");
  return read_manifest_hashes(c.out);
}

// Compares the fresh manifest against the one captured before the re-run.
int check_verify(const Common& c, const std::map<std::string, std::string>& before) {
  if (!c.verify) return 0;
  const auto after = read_manifest_hashes(c.out);
  std::vector<std::string> diff;
  for (const auto& [path, hash] : before) {
    auto it = after.find(path);
    if (it == after.end() || it->second != hash) diff.push_back(path);
  }
  for (const auto& [path, hash] : after) {
    if (!before.count(path)) diff.push_back(path + " (new)");
  }
  if (!verify_manifest(c.out).empty()) diff.emplace_back("manifest.json (stale hashes)");
  if (diff.empty()) {
    std::cout << "verify: " << after.size() << " artifacts identical to the previous run\n";
    return 0;
  }
  std::cerr << "verify: " << diff.size() << " artifacts differ:\n";
  for (const auto& d : diff) std::cerr << "  " << d << '\n';
  return static_cast<int>(ExitCode::kData);
}

int cmd_gen_data(const Common& c) {
  auto j = load_json(c.config);
  if (j.contains("dataset")) j = j["dataset"];
  if (c.seed || !j.contains("seed")) j["seed"] = master_seed(c);
  const auto cfg = tabular_toy_config_from_json(j);
  if (c.out.empty()) throw ConfigError("gen-data needs --out <file.csv>");
  const Dataset ds = gen_tabular_toy(cfg);
  write_dataset(ds, c.out);
  std::cout << "wrote " << c.out << " (" << ds.size() << " rows, " << ds.input_dim() << " inputs, "
            << ds.num_concepts() << " concepts) and " << sidecar_path(c.out).string() << '\n';
  return 0;
}

ExperimentConfig experiment_from(const Common& c) {
  auto j = load_json(c.config);
  if (c.seed || !j.contains("seed")) j["seed"] = master_seed(c);
  if (c.folds) j["folds"] = *c.folds;
  if (c.repeats) j["repeats"] = *c.repeats;
  auto cfg = experiment_config_from_json(j);
  if (!c.out.empty()) cfg.out_dir = c.out;
  cfg.jobs = c.jobs;
  if (cfg.models.empty()) throw ConfigError("the experiment config lists no models");
  return cfg;
}

int cmd_train(const Common& c) {
  const auto cfg = experiment_from(c);
  if (cfg.out_dir.empty()) throw ConfigError("train needs --out <dir>");
  const auto before = previous_hashes(c);
  const auto res = run_experiment(cfg);
  std::cout << "reference head accuracy " << fmt4(res.reference.y_acc) << '\n';
  for (const auto& m : res.models) {
    std::cout << m.spec.name << ": y_acc " << fmt4(m.y_acc.mean) << "  CTL " << fmt4(m.ctl.mean)
              << " [" << fmt4(m.ctl.ci95_low) << ", " << fmt4(m.ctl.ci95_high) << "]  ICL "
              << fmt4(m.icl.mean) << " [" << fmt4(m.icl.ci95_low) << ", "
              << fmt4(m.icl.ci95_high) << "]  s_int " << fmt4(m.s_int.mean) << '\n';
  }
  std::cout << "artifacts in " << cfg.out_dir.string() << '\n';
  return check_verify(c, before);
}

int cmd_audit(const Common& c, const std::vector<std::string>& dumps, const std::string& dataset_path, bool with_ois,
              int k_neighbors) {
  if (dumps.empty()) throw ConfigError("audit needs at least one --dump");
  if (!fs::exists(dataset_path)) throw Error("dataset not found: " + dataset_path);
  const Dataset ds = read_dataset(dataset_path);
  AuditOptions opts;
  opts.base_seed = master_seed(c);
  opts.repeats = c.repeats.value_or(5);
  opts.cem = c.cem;
  opts.with_ois = with_ois;
  opts.ois.seed = opts.base_seed;
  opts.estimator.k_neighbors = k_neighbors;
  opts.estimator.threads = c.jobs;

  std::vector<LeakageReport> reports;
  std::vector<fs::path> written;
  for (const auto& path : dumps) {
    if (!fs::exists(path)) throw Error("dump not found: " + path);
    const auto dump = read_dump(path);
    if (c.cem && !dump.embeddings) {
      throw MissingFieldError("--cem given but " + embedding_sidecar_path(path).string() + " is missing");
    }
    const auto data = align_dump(dump, ds);
    reports.push_back(audit(data, opts));
    const auto j = to_json(reports.back());
    if (c.out.empty()) {
      std::cout << j.dump(2) << '\n';
    } else {
      const fs::path stem = fs::path(path).stem();
      const fs::path base = fs::path(c.out) / stem;
      write_text(base.string() + ".report.json", j.dump(2) + "\n");
      write_text(base.string() + ".report.csv", to_csv(reports.back()));
      written.emplace_back(stem.string() + ".report.json");
      written.emplace_back(stem.string() + ".report.csv");
      std::cout << path << ": CTL " << fmt4(reports.back().ctl.mean) << "  ICL "
                << fmt4(reports.back().icl.mean) << '\n';
    }
  }
  if (reports.size() == 2) {
    const auto v = leakage_compare(reports[0], reports[1]);
    std::cout << "leakage criterion (A = " << dumps[0] << ", B = " << dumps[1] << "): " << to_string(v.outcome)
              << '\n';
    if (!c.out.empty()) {
      write_text(fs::path(c.out) / "comparison.json", to_json(v).dump(2) + "\n");
      written.emplace_back("comparison.json");
    }
  }
  if (!c.out.empty()) {
    nlohmann::json cfg = {{"command", "audit"}, {"dumps", dumps}, {"dataset", dataset_path},
                          {"seed", opts.base_seed}, {"repeats", opts.repeats}, {"cem", opts.cem}, {"ois", with_ois}};
    write_manifest(c.out, cfg, written, utc_timestamp());
  }
  return 0;
}

int cmd_intervene(const Common& c, const std::string& checkpoint, const std::string& dataset_path) {
  if (!fs::exists(checkpoint)) throw Error("checkpoint not found: " + checkpoint);
  if (!fs::exists(dataset_path)) throw Error("dataset not found: " + dataset_path);
  const auto model = load_checkpoint(checkpoint);
  const Dataset ds = read_dataset(dataset_path);
  const std::uint64_t seed = master_seed(c);
  const auto reference = train_reference_head({}, ds, 200, 512, derive_seed(seed, string_tag("reference")));
  const double ref_acc = reference_accuracy_for(model, ds, reference);
  const Dataset test = ds.subset(Split::kTest);
  const auto res = intervene_mean(model, test, policy_seeds(seed, c.repeats.value_or(5)), ref_acc, ds.splits.test);

  nlohmann::json j = to_json(res);
  j["reference_accuracy"] = ref_acc;
  j["policy_seeds"] = policy_seeds(seed, c.repeats.value_or(5));
  std::string csv = "m,accuracy\n";
  for (std::size_t m = 0; m < res.accuracy_curve.size(); ++m) {
    csv += std::to_string(m) + "," + format_double(res.accuracy_curve[m]) + "\n";
  }
  if (c.out.empty()) {
    std::cout << j.dump(2) << '\n' << csv;
  } else {
    write_text(fs::path(c.out) / "intervention.json", j.dump(2) + "\n");
    write_text(fs::path(c.out) / "intervention_curve.csv", csv);
    write_manifest(c.out, {{"command", "intervene"}, {"checkpoint", checkpoint}, {"dataset", dataset_path},
                           {"seed", seed}},
                   {"intervention.json", "intervention_curve.csv"}, utc_timestamp());
    std::cout << "s_int " << fmt4(*res.s_int) << " (reference " << fmt4(ref_acc) << ")\n";
  }
  return 0;
}

template <typename T>
std::vector<T> parse_list(const std::string& s, T (*conv)(std::string_view)) {
  std::vector<T> out;
  for (const auto& part : split_csv_line(s)) out.push_back(conv(part));
  return out;
}

int cmd_gauss(const Common& c, const std::string& dims, const std::string& rhos, const std::string& modes,
              std::size_t n) {
  GaussBenchConfig g;
  g.seed = master_seed(c);
  g.n = n;
  g.repeats = c.repeats.value_or(1);
  g.estimator.threads = c.jobs;
  try {
    g.dims = parse_list<int>(dims, parse_int);
    g.rhos = parse_list<double>(rhos, parse_double);
  } catch (const Error& e) {
    throw ConfigError(std::string("gauss-bench: ") + e.what());
  }
  g.modes.clear();
  for (const auto& m : split_csv_line(modes)) g.modes.push_back(parse_gaussian_mode(m));
  const std::string csv = gauss_bench_csv(run_gauss_bench(g));
  if (c.out.empty()) {
    std::cout << csv;
  } else {
    write_text(c.out, csv);
    std::cout << "wrote " << c.out << '\n';
  }
  return 0;
}

int cmd_reproduce(const Common& c, const std::string& id) {
  const auto before = previous_hashes(c);
  const auto report = reproduce(id, master_seed(c), c.out, c.jobs, c.folds.value_or(5));
  for (const auto& r : report["rows"]) {
    std::cout << (r["pass"].get<bool>() ? "ok   " : "MISS ") << r["quantity"].get<std::string>() << ": "
              << fmt4(r["artifact"].get<double>());
    if (!r["target"].is_null()) std::cout << " (target " << fmt4(r["target"].get<double>()) << ")";
    std::cout << "  [" << r["check"].get<std::string>() << "]\n";
  }
  if (c.out.empty()) std::cout << report.dump(2) << '\n';
  return check_verify(c, before);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Leakage and interpretability audit for concept-based models"};
  app.require_subcommand(1);
  Common c;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", c.config, "JSON config file");
    sub->add_option("--seed", c.seed, "master seed (default: $AUDIT_SEED or 0)");
    sub->add_option("--out", c.out, "output path");
    sub->add_option("--jobs", c.jobs, "worker threads")->check(CLI::PositiveNumber);
  };

  auto* gen = app.add_subcommand("gen-data", "generate a TabularToy dataset (CSV + JSON sidecar)");
  add_common(gen);

  auto* train = app.add_subcommand("train", "train the models of an experiment config over folds");
  add_common(train);
  train->add_option("--folds", c.folds, "training seeds per model");
  train->add_option("--repeats", c.repeats, "jitter repeats per score");
  train->add_flag("--verify", c.verify, "re-run and compare artifact hashes with the manifest in --out");

  auto* aud = app.add_subcommand("audit", "score activation dumps against a dataset");
  add_common(aud);
  std::vector<std::string> dumps;
  std::string dataset_path;
  bool with_ois = false;
  int k_neighbors = 3;
  aud->add_option("--dump", dumps, "activation dump CSV (give two to compare)")->required();
  aud->add_option("--dataset", dataset_path, "ground-truth dataset CSV")->required();
  aud->add_option("--repeats", c.repeats, "jitter repeats");
  aud->add_flag("--cem", c.cem, "also compute CEM scores (needs the .emb.bin sidecar)");
  aud->add_flag("--ois", with_ois, "also compute the oracle impurity score");
  aud->add_option("--k", k_neighbors, "KSG neighbours")->check(CLI::PositiveNumber);

  auto* inter = app.add_subcommand("intervene", "random-order intervention curve for a checkpoint");
  add_common(inter);
  std::string checkpoint;
  inter->add_option("--checkpoint", checkpoint, "checkpoint JSON")->required();
  inter->add_option("--dataset", dataset_path, "dataset CSV")->required();
  inter->add_option("--repeats", c.repeats, "policy seeds");

  auto* gauss = app.add_subcommand("gauss-bench", "KSG bias on Gaussian blocks against closed forms");
  add_common(gauss);
  std::string dims = "1,2,4,8,16", rhos = "0,0.3,0.6,0.9", modes = "interconcept";
  std::size_t n = 10000;
  gauss->add_option("--d", dims, "comma-separated dimensions");
  gauss->add_option("--rho", rhos, "comma-separated correlations");
  gauss->add_option("--mode", modes, "interconcept and/or concepts_task");
  gauss->add_option("--n", n, "samples")->check(CLI::PositiveNumber);
  gauss->add_option("--repeats", c.repeats, "repeats per point");

  auto* repro = app.add_subcommand("reproduce", "run a bundled table/figure and compare with its target values");
  add_common(repro);
  std::string id;
  std::string ids_help = "one of:";
  for (const auto& k : reproduce_ids()) ids_help += " " + k;
  repro->add_option("id", id, ids_help)->required();
  repro->add_option("--folds", c.folds, "training seeds per model");
  repro->add_flag("--verify", c.verify, "re-run and compare report hashes with the manifest in --out");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ExitCode::kConfig);
  }

  try {
    if (*gen) return cmd_gen_data(c);
    if (*train) return cmd_train(c);
    if (*aud) return cmd_audit(c, dumps, dataset_path, with_ois, k_neighbors);
    if (*inter) return cmd_intervene(c, checkpoint, dataset_path);
    if (*gauss) return cmd_gauss(c, dims, rhos, modes, n);
    if (*repro) return cmd_reproduce(c, id);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(e.exit_code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
