#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "leakage/cbm.hpp"
#include "leakage/estimators.hpp"
#include "leakage/neighbors.hpp"
#include "leakage/nn.hpp"
#include "leakage/report.hpp"
#include "leakage/synth.hpp"

namespace {

using namespace leakage;

SampleMatrix gaussian(Eigen::Index n, Eigen::Index d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist;
  SampleMatrix m(n, d);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

// KSG estimate for N samples of d-dimensional Gaussian pairs.
void BM_KsgMi(benchmark::State& state) {
  GaussianBenchConfig c;
  c.n = static_cast<std::size_t>(state.range(0));
  c.d = static_cast<int>(state.range(1));
  c.rho = 0.6;
  const auto [x, y] = gen_gaussian_bench(c);
  const EstimatorConfig ec;
  for (auto _ : state) benchmark::DoNotOptimize(ksg_mi(x, y, ec).value);
}
BENCHMARK(BM_KsgMi)->Args({1000, 1})->Args({10000, 1})->Args({1000, 16})->Args({10000, 16})->Unit(benchmark::kMillisecond);

void BM_KthNeighbor(benchmark::State& state) {
  const auto n = state.range(0);
  const auto d = state.range(1);
  const auto method = static_cast<neighbors::SearchMethod>(state.range(2));
  const SampleMatrix pts = gaussian(n, d, 7);
  const neighbors::PointCloud cloud({pts.data(), static_cast<std::size_t>(pts.size())}, static_cast<std::size_t>(n),
                                    static_cast<std::size_t>(d));
  for (auto _ : state) benchmark::DoNotOptimize(neighbors::kth_neighbor_distances(cloud, 3, method, 1));
}
BENCHMARK(BM_KthNeighbor)
    ->Args({5000, 4, static_cast<int>(neighbors::SearchMethod::kBruteForce)})
    ->Args({5000, 4, static_cast<int>(neighbors::SearchMethod::kKdTree)})
    ->Args({5000, 32, static_cast<int>(neighbors::SearchMethod::kBruteForce)})
    ->Args({5000, 32, static_cast<int>(neighbors::SearchMethod::kKdTree)})
    ->Unit(benchmark::kMillisecond);

// One Adam step of the default encoder on a batch of 512.
void BM_TrainStep(benchmark::State& state) {
  nn::MLP net(default_encoder_spec(7, 3), 1);
  nn::OptimizerState opt(net);
  const nn::Matrix x = gaussian(512, 7, 2);
  nn::Matrix t = (gaussian(512, 3, 3).array() > 0.0).cast<double>();
  for (auto _ : state) {
    const auto cache = net.forward(x);
    const auto loss = nn::bce_with_logits(cache.output(), t);
    adam_step(net, net.backward(cache, loss.grad), opt);
  }
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMicrosecond);

// CTL and ICL over 5 jitter repeats on a noisy copy of the test split.
void BM_Audit(benchmark::State& state) {
  TabularToyConfig tc;
  tc.n = static_cast<std::size_t>(state.range(0));
  const Dataset ds = gen_tabular_toy(tc);
  ConceptData data;
  data.true_concepts = ds.concepts;
  data.labels = ds.labels;
  data.predicted = ds.concepts.cast<double>() + 0.1 * gaussian(ds.concepts.rows(), ds.concepts.cols(), 4);
  const AuditOptions opts;
  for (auto _ : state) benchmark::DoNotOptimize(audit(data, opts).ctl.mean);
}
BENCHMARK(BM_Audit)->Arg(3000)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
