// Acceptance suite: one PASS/FAIL line per criterion. Exit status is non-zero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "leakage/cbm.hpp"
#include "leakage/error.hpp"
#include "leakage/experiment.hpp"
#include "leakage/random.hpp"
#include "leakage/report.hpp"
#include "leakage/text_io.hpp"
#include "oracles.hpp"

using namespace leakage;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

constexpr std::uint64_t kSeed = 1;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string f4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2e", v);
  return buf;
}

std::string ci_text(const ScoreWithCI& s) {
  return f4(s.mean) + " [" + f4(s.ci95_low) + ", " + f4(s.ci95_high) + "]";
}

bool contains_zero(const ScoreWithCI& s) { return s.ci95_low <= 0.0 && 0.0 <= s.ci95_high; }

unsigned jobs() { return std::max(1U, std::thread::hardware_concurrency()); }

ModelSpec cbm_spec(const std::string& name, Encoding enc, double lambda) {
  ModelSpec m;
  m.name = name;
  m.cbm.encoding = enc;
  m.cbm.strategy = enc == Encoding::kHard ? Strategy::kIndependent : Strategy::kJoint;
  m.cbm.lambda = lambda;
  return m;
}

ModelSpec cem_spec(const std::string& name, double lambda, double p_int) {
  ModelSpec m;
  m.name = name;
  m.kind = ModelKind::kCem;
  m.cem.lambda = lambda;
  m.cem.p_int = p_int;
  return m;
}

ExperimentConfig experiment(TaskVariant variant, std::vector<ModelSpec> models) {
  ExperimentConfig c;
  c.master_seed = kSeed;
  c.dataset.seed = kSeed;
  c.dataset.delta = 0.25;
  c.dataset.variant = variant;
  c.models = std::move(models);
  c.folds = 5;
  c.repeats = 5;
  c.policy_seeds = 5;
  c.jobs = jobs();
  return c;
}

const ModelSummary& find(const ExperimentResult& r, const std::string& name) {
  for (const auto& m : r.models) {
    if (m.spec.name == name) return m;
  }
  throw Error("model " + name + " missing");
}

// ---------------------------------------------------------------------------

Outcome gaussian_oracle() {
  const auto t0 = Clock::now();
  bool ok = true;
  std::ostringstream d;
  for (double rho : {0.0, 0.3, 0.6, 0.9}) {
    GaussianBenchConfig g;
    g.rho = rho;
    g.n = 10000;
    g.seed = derive_seed(kSeed, static_cast<std::uint64_t>(rho * 10));
    const auto [x, y] = gen_gaussian_bench(g);
    EstimatorConfig e;
    e.k_neighbors = 3;
    const double est = ksg_mi(x, y, e).value;
    const double err = std::abs(est - oracle::gaussian_mi(rho));
    ok = ok && err <= 0.02;
    d << "rho=" << rho << " err=" << f4(err) << "; ";
  }
  const double secs = seconds_since(t0);
  ok = ok && secs <= 30.0;
  d << "time " << f4(secs) << " s";
  return {ok, d.str()};
}

Outcome dimensional_bias() {
  std::vector<double> v;
  std::ostringstream d;
  for (int dim : {1, 2, 4, 8, 16}) {
    double mean = 0.0;
    for (int rep = 0; rep < 3; ++rep) {
      mean += gauss_bench_point(GaussianMode::kInterconcept, dim, 0.3, 10000, kSeed, {}, rep).estimated_norm_mi / 3.0;
    }
    v.push_back(mean);
    d << "d=" << dim << ":" << f4(mean) << " ";
  }
  int inversions = 0;
  bool small = true;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] < v[i - 1]) {
      ++inversions;
      small = small && v[i - 1] - v[i] <= 0.01;
    }
  }
  d << "(inversions " << inversions << ")";
  return {inversions == 0 || (inversions == 1 && small), d.str()};
}

Outcome discrete_oracle() {
  std::mt19937_64 rng(derive_seed(kSeed, string_tag("discrete")));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (int t = 0; t < 20; ++t) {
    const int ax = (t % 2 == 0) ? 2 : 4;
    const int ay = (t % 4 < 2) ? 2 : 4;
    std::vector<double> p(static_cast<std::size_t>(ax * ay));
    for (auto& q : p) q = u(rng);
    std::discrete_distribution<int> cell(p.begin(), p.end());
    std::vector<int> x(10000), y(10000);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const int c = cell(rng);
      x[i] = c / ay;
      y[i] = c % ay;
    }
    EstimatorConfig e;
    e.jitter_seed = static_cast<std::uint64_t>(t);
    const double ksg = ksg_mi(column(std::span<const int>(x)), column(std::span<const int>(y)), e).value;
    worst = std::max(worst, std::abs(ksg - oracle::plugin_mi(x, y)));
  }
  return {worst <= 0.03, "max |KSG - plug-in| over 20 tables = " + f4(worst)};
}

Outcome zero_leakage() {
  TabularToyConfig tc;
  tc.seed = kSeed;
  const Dataset ds = gen_tabular_toy(tc);
  const Dataset test = ds.subset(Split::kTest);
  ConceptData data;
  data.true_concepts = test.concepts;
  data.predicted = test.concepts_real();
  data.labels = test.labels;
  AuditOptions o;
  o.base_seed = kSeed;
  const auto r = audit(data, o);
  const bool ok = contains_zero(r.ctl) && contains_zero(r.icl) && r.ctl.ci95_high - r.ctl.ci95_low <= 0.05 &&
                  r.icl.ci95_high - r.icl.ci95_low <= 0.05;
  return {ok, "CTL " + ci_text(r.ctl) + ", ICL " + ci_text(r.icl)};
}

Outcome hard_guarantees(const ModelSummary& hard) {
  bool sint_zero = true, monotone = true;
  for (const auto& f : hard.folds) {
    sint_zero = sint_zero && f.intervention.s_int && *f.intervention.s_int == 0.0;
    const auto& c = f.intervention.accuracy_curve;
    for (std::size_t m = 1; m < c.size(); ++m) monotone = monotone && c[m] >= c[m - 1];
  }
  const bool ok = sint_zero && monotone && contains_zero(hard.ctl) && contains_zero(hard.icl);
  return {ok, std::string("s_int==0 ") + (sint_zero ? "yes" : "no") + ", curve non-decreasing " +
                  (monotone ? "yes" : "no") + ", CTL " + ci_text(hard.ctl) + ", ICL " + ci_text(hard.icl)};
}

Outcome table3_baselines(const nlohmann::json& report) {
  bool ok = true;
  std::ostringstream d;
  for (const auto& r : report["rows"]) {
    const double v = r["artifact"].get<double>();
    const double target = r["target"].get<double>();
    // "reaches 1.000": equal at the reported three-decimal precision.
    const bool pass = target == 1.0 ? v >= 0.9995 : std::abs(v - target) <= 0.03;
    ok = ok && pass;
    d << r["quantity"].get<std::string>() << "=" << f4(v) << " (target " << target << (pass ? "" : ", off") << "); ";
  }
  return {ok, d.str()};
}

Outcome table2_pair(const ModelSummary& soft, const ModelSummary& logit) {
  const auto v = leakage_compare(logit.ctl, logit.icl, soft.ctl, soft.icl);
  const bool ok = soft.s_int.mean <= 0.02 && logit.s_int.mean >= 0.15 && v.outcome == ComparisonOutcome::kAHigher;
  return {ok, "s_int soft " + ci_text(soft.s_int) + ", logit " + ci_text(logit.s_int) + "; logit vs soft: " +
                  to_string(v.outcome) + " (CTL " + ci_text(logit.ctl) + " vs " + ci_text(soft.ctl) + ", ICL " +
                  ci_text(logit.icl) + " vs " + ci_text(soft.icl) + ")"};
}

Outcome lambda_sweep(const ModelSummary& low, const ModelSummary& high, double sweep_seconds) {
  const bool ok = ci_relation(low.ctl, high.ctl) == 1 && sweep_seconds <= 15 * 60;
  return {ok, "CTL l=0.01 " + ci_text(low.ctl) + " vs l=5 " + ci_text(high.ctl) + "; sweep time " +
                  f4(sweep_seconds) + " s"};
}

Outcome incomplete_effect(const ModelSummary& incomplete, const ModelSummary& complete) {
  const auto v = leakage_compare(incomplete.ctl, incomplete.icl, complete.ctl, complete.icl);
  const bool ok = ci_relation(incomplete.ctl, complete.ctl) == 1 && v.outcome == ComparisonOutcome::kAHigher;
  return {ok, "CTL incomplete " + ci_text(incomplete.ctl) + " vs complete " + ci_text(complete.ctl) + "; ICL " +
                  ci_text(incomplete.icl) + " vs " + ci_text(complete.icl) + "; verdict " + to_string(v.outcome)};
}

Outcome cem_trend(const ModelSummary& low, const ModelSummary& high) {
  const bool ic = ci_relation(*high.cem_ic, *low.cem_ic) == 1;
  const bool self = ci_relation(*high.cem_self, *low.cem_self) == 1;
  const bool ctl_down = high.ctl.mean < low.ctl.mean;
  const bool icl_down = high.icl.mean < low.icl.mean;
  return {ic && self && ctl_down && icl_down,
          "cem_ic " + ci_text(*low.cem_ic) + " -> " + ci_text(*high.cem_ic) + "; cem_self " + ci_text(*low.cem_self) +
              " -> " + ci_text(*high.cem_self) + "; CTL " + f4(low.ctl.mean) + " -> " + f4(high.ctl.mean) + "; ICL " +
              f4(low.icl.mean) + " -> " + f4(high.icl.mean)};
}

// --- finite differences ------------------------------------------------------

// Norm-wise relative error ||a - n|| / max(||a||, ||n||) between analytic and numeric gradients.
double relative_error(const std::vector<double>& a, const std::vector<double>& n) {
  double diff = 0.0, na = 0.0, nn_ = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - n[i]) * (a[i] - n[i]);
    na += a[i] * a[i];
    nn_ += n[i] * n[i];
  }
  const double scale = std::max(std::sqrt(na), std::sqrt(nn_));
  return scale == 0.0 ? 0.0 : std::sqrt(diff) / scale;
}

std::vector<double> flatten_grads(const nn::Gradients& g) {
  std::vector<double> out;
  for (std::size_t l = 0; l < g.weights.size(); ++l) {
    // Same order as MLP::flatten: W row-major (in x out), then b.
    for (Eigen::Index i = 0; i < g.weights[l].rows(); ++i) {
      for (Eigen::Index j = 0; j < g.weights[l].cols(); ++j) out.push_back(g.weights[l](i, j));
    }
    for (Eigen::Index j = 0; j < g.biases[l].size(); ++j) out.push_back(g.biases[l](j));
  }
  return out;
}

// Central differences of `loss` over every parameter of `net`.
std::vector<double> numeric_grad(nn::MLP& net, const std::function<double()>& loss) {
  constexpr double h = 1e-5;
  std::vector<double> theta = net.flatten(), out(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double keep = theta[i];
    theta[i] = keep + h;
    net.unflatten(theta);
    const double up = loss();
    theta[i] = keep - h;
    net.unflatten(theta);
    const double down = loss();
    theta[i] = keep;
    out[i] = (up - down) / (2 * h);
  }
  net.unflatten(theta);
  return out;
}

double check_mlp(std::mt19937_64& rng, std::string& what) {
  std::uniform_int_distribution<int> depth(1, 3), width(1, 6), act(0, 3), loss_kind(0, 4);
  const nn::Activation hidden_acts[] = {nn::Activation::kLeakyRelu, nn::Activation::kSigmoid,
                                        nn::Activation::kIdentity, nn::Activation::kRelu};
  const auto kind = static_cast<nn::LossKind>(loss_kind(rng));
  const int in = width(rng);
  int out = width(rng);
  if (kind == nn::LossKind::kCeLogits || kind == nn::LossKind::kCeProbabilities) out = std::max(out, 2);
  std::vector<nn::LayerSpec> layers;
  int prev = in;
  const int nl = depth(rng);
  for (int l = 0; l < nl - 1; ++l) {
    const int w = width(rng);
    layers.push_back({prev, w, hidden_acts[act(rng)]});
    prev = w;
  }
  nn::Activation last = nn::Activation::kIdentity;
  if (kind == nn::LossKind::kBceProbabilities) last = nn::Activation::kSigmoid;
  if (kind == nn::LossKind::kCeProbabilities) last = nn::Activation::kSoftmax;
  layers.push_back({prev, out, last});
  nn::MLP net(layers, rng());

  const int batch = 5;
  std::normal_distribution<double> g;
  nn::Matrix x(batch, in), targets(batch, out);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = g(rng);
  std::vector<int> labels(batch);
  for (int r = 0; r < batch; ++r) {
    labels[static_cast<std::size_t>(r)] = static_cast<int>(rng() % static_cast<std::uint64_t>(out));
    for (int c = 0; c < out; ++c) targets(r, c) = kind == nn::LossKind::kMse ? g(rng) : static_cast<double>(rng() % 2);
  }
  auto loss_of = [&](const nn::Matrix& pred) {
    switch (kind) {
      case nn::LossKind::kBceLogits: return nn::bce_with_logits(pred, targets);
      case nn::LossKind::kBceProbabilities: return nn::bce_on_probabilities(pred, targets);
      case nn::LossKind::kCeLogits: return nn::ce_with_logits(pred, labels);
      case nn::LossKind::kCeProbabilities: return nn::ce_on_probabilities(pred, labels);
      case nn::LossKind::kMse: return nn::mse(pred, targets);
    }
    return nn::mse(pred, targets);
  };
  const auto cache = net.forward(x);
  const auto analytic = flatten_grads(net.backward(cache, loss_of(cache.output()).grad));
  const auto numeric = numeric_grad(net, [&] { return loss_of(net.predict(x)).loss; });
  what = "mlp depth " + std::to_string(nl) + " loss " + std::to_string(static_cast<int>(kind));
  return relative_error(analytic, numeric);
}

double check_cbm(std::mt19937_64& rng, std::string& what) {
  CBMConfig c;
  c.encoding = rng() % 2 ? Encoding::kSoft : Encoding::kLogit;
  c.lambda = std::uniform_real_distribution<double>(0.0, 5.0)(rng);
  c.seed = rng();
  const int in = 3 + static_cast<int>(rng() % 4), k = 2 + static_cast<int>(rng() % 3);
  c.encoder_spec = nn::chain({in, 5, k}, nn::Activation::kLeakyRelu, nn::Activation::kIdentity);
  c.head_spec = nn::chain({k, 4, 3}, nn::Activation::kSigmoid, nn::Activation::kIdentity);
  TrainedModel m = init_cbm(c, in, k, 3);
  const int batch = 6;
  std::normal_distribution<double> g;
  nn::Matrix x(batch, in);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = g(rng);
  ConceptMatrix cm(batch, k);
  for (Eigen::Index i = 0; i < cm.size(); ++i) cm.data()[i] = static_cast<int>(rng() % 2);
  std::vector<int> y(batch);
  for (auto& v : y) v = static_cast<int>(rng() % 3);
  const auto grads = cbm_joint_gradients(m, x, cm, y);
  auto loss = [&] { return cbm_joint_gradients(m, x, cm, y).loss; };
  std::vector<double> analytic = flatten_grads(grads.encoder), numeric = numeric_grad(m.encoder, loss);
  const auto ha = flatten_grads(grads.head);
  const auto hn = numeric_grad(m.head, loss);
  analytic.insert(analytic.end(), ha.begin(), ha.end());
  numeric.insert(numeric.end(), hn.begin(), hn.end());
  what = "cbm " + to_string(c.encoding);
  return relative_error(analytic, numeric);
}

double check_cem(std::mt19937_64& rng, std::string& what) {
  CEMConfig c;
  c.embedding_dim = 1 + static_cast<int>(rng() % 3);
  c.lambda = std::uniform_real_distribution<double>(0.0, 5.0)(rng);
  c.seed = rng();
  const int in = 3 + static_cast<int>(rng() % 3), k = 2 + static_cast<int>(rng() % 2);
  c.trunk_spec = {{in, 6, nn::Activation::kLeakyRelu}, {6, 2 * k * c.embedding_dim, nn::Activation::kIdentity}};
  TrainedModel m = init_cem(c, in, k, 2);
  const int batch = 5;
  std::normal_distribution<double> g;
  nn::Matrix x(batch, in);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = g(rng);
  ConceptMatrix cm(batch, k), mask(batch, k);
  for (Eigen::Index i = 0; i < cm.size(); ++i) {
    cm.data()[i] = static_cast<int>(rng() % 2);
    mask.data()[i] = static_cast<int>(rng() % 3 == 0);
  }
  std::vector<int> y(batch);
  for (auto& v : y) v = static_cast<int>(rng() % 2);
  const auto grads = cem_gradients(m, x, cm, y, mask);
  auto loss = [&] { return cem_gradients(m, x, cm, y, mask).loss; };
  std::vector<double> analytic = flatten_grads(grads.encoder), numeric = numeric_grad(m.encoder, loss);
  auto append = [&](const nn::Gradients& ga, nn::MLP& net) {
    const auto a = flatten_grads(ga);
    const auto n = numeric_grad(net, loss);
    analytic.insert(analytic.end(), a.begin(), a.end());
    numeric.insert(numeric.end(), n.begin(), n.end());
  };
  append(grads.head, m.head);
  for (int i = 0; i < k; ++i) append(grads.scorers[static_cast<std::size_t>(i)], m.scorers[static_cast<std::size_t>(i)]);
  what = "cem d=" + std::to_string(c.embedding_dim);
  return relative_error(analytic, numeric);
}

Outcome gradient_checks() {
  std::mt19937_64 rng(derive_seed(kSeed, string_tag("gradcheck")));
  int passed = 0;
  double worst = 0.0;
  std::string worst_what;
  for (int t = 0; t < 100; ++t) {
    std::string what;
    double err = 0.0;
    if (t % 5 == 3) {
      err = check_cbm(rng, what);
    } else if (t % 5 == 4) {
      err = check_cem(rng, what);
    } else {
      err = check_mlp(rng, what);
    }
    passed += err <= 1e-5;
    if (err > worst) {
      worst = err;
      worst_what = what;
    }
  }
  return {passed == 100, std::to_string(passed) + "/100 configurations (60 MLP, 20 CBM, 20 CEM); worst " +
                             sci(worst) + " (" + worst_what + ")"};
}

Outcome determinism(const fs::path& root) {
  const auto a = root / "table3_a";
  const auto b = root / "table3_b";
  fs::remove_all(a);
  fs::remove_all(b);
  reproduce("table3", kSeed, a, jobs());
  reproduce("table3", kSeed, b, jobs());
  int files = 0;
  bool same = true;
  for (const auto& e : fs::recursive_directory_iterator(a / "reports")) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), a);
    same = same && fs::exists(b / rel) && read_text(e.path()) == read_text(b / rel);
    ++files;
  }
  return {same && files > 0, std::to_string(files) + " report file(s) compared byte for byte"};
}

}  // namespace

int main() {
  const fs::path root = fs::temp_directory_path() / "leakage_acceptance";
  fs::create_directories(root);
  std::vector<std::pair<std::string, Outcome>> results;
  auto record = [&](const std::string& name, const std::function<Outcome()>& fn) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << "  (" << f4(seconds_since(t0))
              << " s)" << std::endl;
    results.emplace_back(name, o);
  };

  record("1 Gaussian oracle agreement", gaussian_oracle);
  record("2 Dimensional-bias reproduction", dimensional_bias);
  record("3 Discrete-oracle equivalence", discrete_oracle);
  record("4 Zero-leakage fixed point", zero_leakage);

  // Shared training runs on TabularToy(0.25), 5 folds each.
  std::cout << "training the lambda sweep (hard, soft 0.01, soft 5, logit 5) ..." << std::endl;
  auto t0 = Clock::now();
  const auto sweep = run_experiment(experiment(TaskVariant::kOriginal,
                                               {cbm_spec("hard", Encoding::kHard, 1.0),
                                                cbm_spec("soft_l0.01", Encoding::kSoft, 0.01),
                                                cbm_spec("soft_l5", Encoding::kSoft, 5.0),
                                                cbm_spec("logit_l5", Encoding::kLogit, 5.0)}));
  const double sweep_seconds = seconds_since(t0);
  std::cout << "training CEMs ..." << std::endl;
  auto cem_cfg = experiment(TaskVariant::kOriginal, {cem_spec("cem_low", 0.01, 0.0), cem_spec("cem_high", 5.0, 0.5)});
  cem_cfg.models[0].cem.p_int = 0.0;
  const auto cems = run_experiment(cem_cfg);
  std::cout << "training soft 0.01 on the incomplete variant ..." << std::endl;
  const auto inc = run_experiment(
      experiment(TaskVariant::kIncomplete, {cbm_spec("soft_l0.01", Encoding::kSoft, 0.01)}));
  std::cout << "running the table3 bundle ..." << std::endl;
  const auto table3 = reproduce("table3", kSeed, {}, jobs());

  record("5 Hard-CBM guarantees", [&] { return hard_guarantees(find(sweep, "hard")); });
  record("6 Reference-head baselines", [&] { return table3_baselines(table3); });
  record("7 Soft vs logit discrimination",
         [&] { return table2_pair(find(sweep, "soft_l5"), find(sweep, "logit_l5")); });
  record("8 Lambda-sweep ordering",
         [&] { return lambda_sweep(find(sweep, "soft_l0.01"), find(sweep, "soft_l5"), sweep_seconds); });
  record("9 Incomplete-concepts effect",
         [&] { return incomplete_effect(find(inc, "soft_l0.01"), find(sweep, "soft_l0.01")); });
  record("10 CEM interconcept-leakage trend", [&] { return cem_trend(find(cems, "cem_low"), find(cems, "cem_high")); });
  record("11 Gradient correctness", gradient_checks);
  record("12 Determinism", [&] { return determinism(root); });

  int failed = 0;
  for (const auto& [name, o] : results) failed += !o.pass;
  std::cout << (results.size() - static_cast<std::size_t>(failed)) << "/" << results.size() << " criteria passed"
            << std::endl;
  return failed == 0 ? 0 : 1;
}
