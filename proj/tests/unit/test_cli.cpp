#include <array>
#include <cstdio>
#include <string>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>
#include <sys/wait.h>

#include "leakage/cbm.hpp"
#include "leakage/error.hpp"
#include "leakage/synth.hpp"
#include "leakage/text_io.hpp"
#include "oracles.hpp"

using namespace leakage;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

Run run(const std::string& args) {
  const std::string cmd = std::string(LEAKAGE_AUDIT_EXE) + " " + args + " 2>&1";
  Run r;
  FILE* p = popen(cmd.c_str(), "r");
  if (p == nullptr) return r;
  std::array<char, 4096> buf{};
  while (fgets(buf.data(), static_cast<int>(buf.size()), p) != nullptr) r.out += buf.data();
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

const std::string kTrainConfig = R"({"seed": 4, "dataset": {"n": 1500}, "folds": 5, "repeats": 2,
  "policy_seeds": 2, "reference_epochs": 20,
  "models": [{"name": "soft_l5", "encoding": "soft", "lambda": 5, "epochs": 8, "batch_size": 256},
             {"name": "hard", "encoding": "hard", "epochs": 8, "head_epochs": 8, "batch_size": 256}]})";

}  // namespace

TEST(Cli, UsageErrors) {
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
  EXPECT_EQ(run("audit --dataset x.csv").code, 2);
  EXPECT_EQ(run("--help").code, 0);
}

TEST(Cli, GenDataShapesAndDeterminism) {
  const auto dir = oracle::scratch_dir("cli_gen");
  ASSERT_EQ(run("gen-data --seed 7 --out " + q(dir / "a.csv")).code, 0);
  ASSERT_EQ(run("gen-data --seed 7 --out " + q(dir / "b.csv")).code, 0);
  const std::string a = read_text(dir / "a.csv");
  EXPECT_EQ(a, read_text(dir / "b.csv"));
  EXPECT_EQ(std::count(a.begin(), a.end(), '\n'), 10001);
  EXPECT_EQ(split_csv_line(a.substr(0, a.find('\n'))).size(), 12U);

  write_text(dir / "two.json", R"({"variant": "two_concept", "n": 200})");
  ASSERT_EQ(run("gen-data --config " + q(dir / "two.json") + " --out " + q(dir / "two.csv")).code, 0);
  const Dataset two = read_dataset(dir / "two.csv");
  EXPECT_EQ(two.input_dim(), 5);
  EXPECT_EQ(two.num_concepts(), 2);

  write_text(dir / "bad.json", R"({"delta": 2.0})");
  EXPECT_EQ(run("gen-data --config " + q(dir / "bad.json") + " --out " + q(dir / "c.csv")).code, 2);
  EXPECT_EQ(run("gen-data --config " + q(dir / "missing.json") + " --out " + q(dir / "c.csv")).code, 2);
}

TEST(Cli, AuditSeedFromEnvironment) {
  const auto dir = oracle::scratch_dir("cli_env");
  ASSERT_EQ(run("gen-data --out " + q(dir / "a.csv")).code, 0);
  const std::string cmd = "AUDIT_SEED=7 " + std::string(LEAKAGE_AUDIT_EXE) + " gen-data --out " + q(dir / "b.csv");
  ASSERT_EQ(std::system(cmd.c_str()), 0);
  ASSERT_EQ(run("gen-data --seed 7 --out " + q(dir / "c.csv")).code, 0);
  EXPECT_EQ(read_text(dir / "b.csv"), read_text(dir / "c.csv"));
  EXPECT_NE(read_text(dir / "a.csv"), read_text(dir / "b.csv"));
}

TEST(Cli, TrainAuditIntervene) {
  const auto dir = oracle::scratch_dir("cli_train");
  write_text(dir / "cfg.json", kTrainConfig);
  const auto out = dir / "run";
  const auto r = run("train --config " + q(dir / "cfg.json") + " --out " + q(out) + " --jobs 2");
  ASSERT_EQ(r.code, 0) << r.out;
  int checkpoints = 0, dumps = 0;
  for (const auto& e : fs::directory_iterator(out / "checkpoints")) {
    checkpoints += e.path().extension() == ".json" && e.path().filename().string().starts_with("soft_l5");
  }
  for (const auto& e : fs::directory_iterator(out / "dumps")) {
    dumps += e.path().extension() == ".csv" && e.path().filename().string().starts_with("soft_l5");
  }
  EXPECT_EQ(checkpoints, 5);
  EXPECT_EQ(dumps, 5);

  const auto hard = read_dump(out / "dumps" / "hard_f0.csv");
  for (Eigen::Index t = 0; t < hard.activations.size(); ++t) {
    const double v = hard.activations.data()[t];
    EXPECT_TRUE(v == 0.0 || v == 1.0);
  }

  const auto verify = run("train --config " + q(dir / "cfg.json") + " --out " + q(out) + " --verify");
  EXPECT_EQ(verify.code, 0) << verify.out;
  EXPECT_NE(verify.out.find("identical"), std::string::npos);

  const auto data = q(out / "datasets" / "tabular_toy.csv");
  const auto ia = run("intervene --checkpoint " + q(out / "checkpoints" / "hard_f2.json") + " --dataset " + data +
                      " --out " + q(dir / "iv"));
  ASSERT_EQ(ia.code, 0) << ia.out;
  const auto iv = nlohmann::json::parse(read_text(dir / "iv" / "intervention.json"));
  EXPECT_EQ(iv["s_int"].get<double>(), 0.0);
  const std::string curve = read_text(dir / "iv" / "intervention_curve.csv");
  EXPECT_EQ(std::count(curve.begin(), curve.end(), '\n'), 5);

  const auto au = run("audit --dump " + q(out / "dumps" / "soft_l5_f0.csv") + " --dump " +
                      q(out / "dumps" / "hard_f0.csv") + " --dataset " + data + " --repeats 3 --out " +
                      q(dir / "aud"));
  ASSERT_EQ(au.code, 0) << au.out;
  EXPECT_TRUE(fs::exists(dir / "aud" / "comparison.json"));
  EXPECT_TRUE(fs::exists(dir / "aud" / "soft_l5_f0.report.json"));

  const auto cem = run("audit --cem --dump " + q(out / "dumps" / "soft_l5_f0.csv") + " --dataset " + data);
  EXPECT_EQ(cem.code, 3) << cem.out;
  EXPECT_NE(cem.out.find(".emb.bin"), std::string::npos);
}

TEST(Cli, AuditPerfectDumpAndMisalignment) {
  const auto dir = oracle::scratch_dir("cli_audit");
  TabularToyConfig cfg;
  cfg.n = 3000;
  const Dataset ds = gen_tabular_toy(cfg);
  write_dataset(ds, dir / "data.csv");
  const Dataset test = ds.subset(Split::kTest);
  ActivationDump d;
  d.sample_ids = ds.splits.test;
  d.activations = test.concepts_real();
  d.predicted = test.labels;
  d.labels = test.labels;
  d.concepts = test.concepts;
  write_dump(d, dir / "perfect.csv");
  const auto r = run("audit --dump " + q(dir / "perfect.csv") + " --dataset " + q(dir / "data.csv") +
                     " --out " + q(dir / "out"));
  ASSERT_EQ(r.code, 0) << r.out;
  const auto j = nlohmann::json::parse(read_text(dir / "out" / "perfect.report.json"));
  for (const char* s : {"ctl", "icl"}) {
    EXPECT_LE(j[s]["ci95_low"].get<double>(), 0.0) << s;
    EXPECT_GE(j[s]["ci95_high"].get<double>(), 0.0) << s;
  }

  d.sample_ids[0] = 999999;
  write_dump(d, dir / "bad.csv");
  const auto bad = run("audit --dump " + q(dir / "bad.csv") + " --dataset " + q(dir / "data.csv"));
  EXPECT_EQ(bad.code, 3);
  EXPECT_NE(bad.out.find("999999"), std::string::npos) << bad.out;
}

TEST(Cli, GaussBenchAndReproduceErrors) {
  const auto g = run("gauss-bench --d 1 --rho 0.6 --n 2000");
  ASSERT_EQ(g.code, 0) << g.out;
  EXPECT_NE(g.out.find("interconcept,1,0.6,"), std::string::npos);
  EXPECT_EQ(run("gauss-bench --d 1 --rho 1.5 --n 2000").code, 2);
  EXPECT_EQ(run("gauss-bench --d x --n 2000").code, 2);
  EXPECT_EQ(run("reproduce table99").code, 2);
}
