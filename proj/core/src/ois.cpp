#include <algorithm>
#include <cmath>
#include <numeric>

#include "leakage/error.hpp"
#include "leakage/metrics.hpp"
#include "leakage/random.hpp"
#include "leakage/scores.hpp"

namespace leakage {

nlohmann::json to_json(const OisOptions& o) {
  return {{"probe", {{"layers", {1, o.hidden, 1}}, {"activation", "leaky_relu"}}},
          {"epochs", o.epochs},
          {"batch_size", o.batch_size},
          {"learning_rate", o.learning_rate},
          {"train_fraction", o.train_fraction},
          {"repeats", o.repeats},
          {"seed", o.seed}};
}

std::optional<double> probe_auc(const Eigen::VectorXd& x, const std::vector<int>& y, const OisOptions& opts,
                                std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(x.size());
  if (y.size() != n) throw ShapeError("probe: x and y lengths differ");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, string_tag("probe_split")));
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::llround(opts.train_fraction * static_cast<double>(n)));
  if (n_train < 2 || n_train >= n) throw InsufficientSamplesError("probe: split leaves an empty part");

  double mean = 0.0;
  for (std::size_t t = 0; t < n_train; ++t) mean += x(static_cast<Eigen::Index>(order[t]));
  mean /= static_cast<double>(n_train);
  double var = 0.0;
  for (std::size_t t = 0; t < n_train; ++t) {
    const double dv = x(static_cast<Eigen::Index>(order[t])) - mean;
    var += dv * dv;
  }
  const double sd = std::sqrt(var / static_cast<double>(n_train));
  const double scale = sd > 0.0 ? 1.0 / sd : 1.0;

  const auto nt = static_cast<Eigen::Index>(n_train);
  const auto nh = static_cast<Eigen::Index>(n - n_train);
  nn::Matrix xtr(nt, 1), ytr(nt, 1), xte(nh, 1);
  std::vector<int> yte(static_cast<std::size_t>(nh));
  for (std::size_t t = 0; t < n; ++t) {
    const double v = (x(static_cast<Eigen::Index>(order[t])) - mean) * scale;
    if (t < n_train) {
      xtr(static_cast<Eigen::Index>(t), 0) = v;
      ytr(static_cast<Eigen::Index>(t), 0) = y[order[t]];
    } else {
      xte(static_cast<Eigen::Index>(t - n_train), 0) = v;
      yte[t - n_train] = y[order[t]];
    }
  }

  nn::MLP probe(nn::chain({1, opts.hidden, 1}, nn::Activation::kLeakyRelu, nn::Activation::kIdentity),
                derive_seed(seed, string_tag("probe_init")));
  nn::TrainOptions topts;
  topts.epochs = opts.epochs;
  topts.batch_size = opts.batch_size;
  topts.seed = derive_seed(seed, string_tag("probe_shuffle"));
  topts.adam.learning_rate = opts.learning_rate;
  const auto log = nn::train(probe, xtr, ytr, nn::LossKind::kBceLogits, topts);
  if (!log.epoch_loss.empty() && !std::isfinite(log.epoch_loss.back())) return std::nullopt;

  const nn::Matrix out = probe.predict(xte);
  if (!out.allFinite()) return std::nullopt;
  const std::vector<double> scores(out.data(), out.data() + out.size());
  try {
    return auc(scores, yte);
  } catch (const DegenerateVariableError&) {
    return std::nullopt;
  }
}

OisResult ois(const ConceptData& data, const OisOptions& opts) {
  data.validate();
  const int k = data.num_concepts();
  if (k < 2) throw ConfigError("OIS needs at least two concepts");
  if (opts.repeats < 1) throw ConfigError("OIS repeats must be positive");

  std::vector<std::vector<int>> truth(static_cast<std::size_t>(k));
  for (int j = 0; j < k; ++j) {
    for (Eigen::Index r = 0; r < data.true_concepts.rows(); ++r) truth[static_cast<std::size_t>(j)].push_back(data.true_concepts(r, j));
  }

  OisResult res;
  res.pi_predicted = Eigen::MatrixXd::Zero(k, k);
  res.pi_true = Eigen::MatrixXd::Zero(k, k);
  std::vector<double> values;
  for (int rep = 0; rep < opts.repeats; ++rep) {
    const std::uint64_t rseed = derive_seed(opts.seed, static_cast<std::uint64_t>(rep));
    Eigen::MatrixXd pp(k, k), pt(k, k);
    for (int which = 0; which < 2; ++which) {
      for (int i = 0; i < k; ++i) {
        const Eigen::VectorXd x =
            which == 0 ? Eigen::VectorXd(data.predicted.col(i)) : Eigen::VectorXd(data.true_concepts.col(i).cast<double>());
        for (int j = 0; j < k; ++j) {
          // Both branches share the probe split and initialization of cell (i, j).
          const auto a = probe_auc(x, truth[static_cast<std::size_t>(j)], opts,
                                   derive_seed(rseed, {std::uint64_t(i), std::uint64_t(j)}));
          if (!a) {
            res.unreliable_cells.push_back(std::string(which == 0 ? "pred(" : "true(") + std::to_string(i) + "," +
                                           std::to_string(j) + ")@" + std::to_string(rep));
          }
          (which == 0 ? pp : pt)(i, j) = a.value_or(0.5);
        }
      }
    }
    values.push_back(2.0 / k * (pp - pt).norm());
    res.pi_predicted += pp / opts.repeats;
    res.pi_true += pt / opts.repeats;
  }
  res.score = ci_from_values(values);
  return res;
}

}  // namespace leakage
