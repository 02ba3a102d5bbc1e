#include <algorithm>
#include <numeric>

#include "leakage/cbm.hpp"
#include "leakage/error.hpp"
#include "leakage/metrics.hpp"
#include "leakage/random.hpp"
#include "model_internal.hpp"

namespace leakage {

nn::Matrix task_probabilities(const TrainedModel& model, const SampleMatrix& inputs,
                              const ConceptMatrix& concepts, const ConceptMatrix& mask) {
  if (model.kind == ModelKind::kCem) {
    const auto f = detail::cem_forward(model, inputs, &concepts, &mask);
    return nn::softmax_rows(f.head.output());
  }
  const nn::Matrix logits = model.encoder.predict(inputs);
  return nn::softmax_rows(model.head.predict(detail::cbm_head_input(model, logits, &concepts, &mask)));
}

nn::Matrix concept_probabilities(const TrainedModel& model, const SampleMatrix& inputs) {
  if (model.kind == ModelKind::kCem) return detail::cem_forward(model, inputs, nullptr, nullptr).prob;
  return nn::sigmoid(model.encoder.predict(inputs));
}

ActivationDump predict(const TrainedModel& model, const Dataset& dataset,
                       const std::vector<std::size_t>& ids) {
  if (dataset.input_dim() != model.encoder.in_dim()) {
    throw ShapeError("predict: dataset input width " + std::to_string(dataset.input_dim()) +
                     " does not match the model (" + std::to_string(model.encoder.in_dim()) + ")");
  }
  ActivationDump dump;
  const auto n = dataset.size();
  if (!ids.empty() && ids.size() != n) throw ShapeError("predict: one id per row required");
  dump.sample_ids = ids;
  if (ids.empty()) {
    dump.sample_ids.resize(n);
    std::iota(dump.sample_ids.begin(), dump.sample_ids.end(), std::size_t{0});
  }
  dump.labels = dataset.labels;
  dump.concepts = dataset.concepts;

  if (model.kind == ModelKind::kCem) {
    const auto f = detail::cem_forward(model, dataset.inputs, nullptr, nullptr);
    dump.activations = f.prob;
    dump.predicted = detail::argmax_rows(f.head.output());
    const int k = model.num_concepts;
    const int d = model.cem.embedding_dim;
    CemEmbeddings e;
    e.k = k;
    e.d = d;
    const nn::Matrix& emb = f.trunk.output();
    e.positive.resize(emb.rows(), static_cast<Eigen::Index>(k) * d);
    e.negative.resize(emb.rows(), static_cast<Eigen::Index>(k) * d);
    for (int i = 0; i < k; ++i) {
      e.positive.middleCols(static_cast<Eigen::Index>(i) * d, d) = emb.middleCols(2 * i * d, d);
      e.negative.middleCols(static_cast<Eigen::Index>(i) * d, d) = emb.middleCols(2 * i * d + d, d);
    }
    e.mixed = f.mixed;
    dump.embeddings = std::move(e);
    return dump;
  }
  const nn::Matrix logits = model.encoder.predict(dataset.inputs);
  const nn::Matrix act = detail::cbm_head_input(model, logits, nullptr, nullptr);
  dump.activations = act;
  dump.predicted = detail::argmax_rows(model.head.predict(act));
  return dump;
}

Metrics evaluate(const TrainedModel& model, const Dataset& split) {
  Metrics m;
  const nn::Matrix probs = concept_probabilities(model, split.inputs);
  const int k = model.num_concepts;
  double auc_sum = 0.0;
  for (int i = 0; i < k; ++i) {
    std::vector<int> pred(split.size()), truth(split.size());
    std::vector<double> score(split.size());
    for (std::size_t r = 0; r < split.size(); ++r) {
      const auto row = static_cast<Eigen::Index>(r);
      score[r] = probs(row, i);
      pred[r] = probs(row, i) >= 0.5 ? 1 : 0;
      truth[r] = split.concepts(row, i);
    }
    m.c_acc += accuracy(pred, truth) / k;
    m.c_f1 += f1_binary(pred, truth) / k;
    try {
      auc_sum += auc(score, truth);
    } catch (const DegenerateVariableError&) {
      m.c_auc_valid = false;
    }
  }
  m.c_auc = m.c_auc_valid ? auc_sum / k : 0.0;

  const nn::Matrix yp = task_probabilities(model, split.inputs, split.concepts, ConceptMatrix());
  const auto yhat = detail::argmax_rows(yp);
  m.y_acc = accuracy(yhat, split.labels);
  m.y_f1 = f1_macro(yhat, split.labels, model.num_classes);
  double yauc = 0.0;
  for (int c = 0; c < model.num_classes; ++c) {
    std::vector<double> score(split.size());
    std::vector<int> truth(split.size());
    for (std::size_t r = 0; r < split.size(); ++r) {
      score[r] = yp(static_cast<Eigen::Index>(r), c);
      truth[r] = split.labels[r] == c ? 1 : 0;
    }
    try {
      yauc += auc(score, truth);
    } catch (const DegenerateVariableError&) {
      m.y_auc_valid = false;
    }
  }
  m.y_auc = m.y_auc_valid ? yauc / model.num_classes : 0.0;
  return m;
}

nlohmann::json to_json(const Metrics& m) {
  nlohmann::json j = {{"c_acc", m.c_acc}, {"c_F1", m.c_f1}, {"y_acc", m.y_acc}, {"y_F1", m.y_f1}};
  j["c_AUC"] = m.c_auc_valid ? nlohmann::json(m.c_auc) : nlohmann::json(nullptr);
  j["y_AUC"] = m.y_auc_valid ? nlohmann::json(m.y_auc) : nlohmann::json(nullptr);
  return j;
}

ReferenceHead train_reference_head(const std::vector<nn::LayerSpec>& head_spec, const Dataset& dataset,
                                   int epochs, int batch_size, std::uint64_t seed) {
  if (dataset.splits.train.empty() || dataset.splits.test.empty()) {
    throw InsufficientSamplesError("reference head needs non-empty train and test splits");
  }
  const int k = dataset.num_concepts();
  const auto spec = head_spec.empty() ? default_head_spec(k, dataset.num_classes) : head_spec;
  ReferenceHead ref{nn::MLP(spec, derive_seed(seed, string_tag("reference_head"))), 0.0};
  const Dataset train = dataset.subset(Split::kTrain);
  nn::TrainOptions opts;
  opts.epochs = epochs;
  opts.batch_size = batch_size;
  opts.seed = derive_seed(seed, string_tag("reference_shuffle"));
  nn::train(ref.head, detail::to_matrix(train.concepts), detail::labels_column(train.labels),
            nn::LossKind::kCeLogits, opts);
  const Dataset test = dataset.subset(Split::kTest);
  const auto yhat = detail::argmax_rows(ref.head.predict(detail::to_matrix(test.concepts)));
  ref.y_acc = accuracy(yhat, test.labels);
  return ref;
}

InterventionResult intervene(const TrainedModel& model, const Dataset& split, std::uint64_t policy_seed,
                             std::optional<double> reference_accuracy,
                             const std::vector<std::size_t>& ids) {
  const int k = model.num_concepts;
  if (split.num_concepts() != k) {
    throw ShapeError("intervene: split has " + std::to_string(split.num_concepts()) +
                     " concepts, model expects " + std::to_string(k));
  }
  const auto n = static_cast<Eigen::Index>(split.size());
  if (!ids.empty() && ids.size() != split.size()) throw ShapeError("intervene: one id per row required");

  // Per-sample random order, seeded by (policy seed, sample id).
  std::vector<std::vector<int>> order(split.size());
  for (std::size_t r = 0; r < split.size(); ++r) {
    order[r].resize(static_cast<std::size_t>(k));
    std::iota(order[r].begin(), order[r].end(), 0);
    Rng rng(derive_seed(policy_seed, ids.empty() ? r : ids[r]));
    std::shuffle(order[r].begin(), order[r].end(), rng);
  }

  InterventionResult res;
  res.policy_seed = policy_seed;
  ConceptMatrix mask = ConceptMatrix::Zero(n, k);
  for (int m = 0; m <= k; ++m) {
    if (m > 0) {
      for (Eigen::Index r = 0; r < n; ++r) mask(r, order[static_cast<std::size_t>(r)][static_cast<std::size_t>(m - 1)]) = 1;
    }
    const auto yhat = detail::argmax_rows(task_probabilities(model, split.inputs, split.concepts, mask));
    res.accuracy_curve.push_back(accuracy(yhat, split.labels));
  }
  if (reference_accuracy) res.s_int = *reference_accuracy - res.accuracy_curve.back();
  return res;
}

InterventionResult intervene_mean(const TrainedModel& model, const Dataset& split,
                                  const std::vector<std::uint64_t>& policy_seeds,
                                  std::optional<double> reference_accuracy,
                                  const std::vector<std::size_t>& ids) {
  if (policy_seeds.empty()) throw ConfigError("intervene_mean: no policy seeds");
  InterventionResult mean;
  mean.policy_seed = policy_seeds.front();
  mean.accuracy_curve.assign(static_cast<std::size_t>(model.num_concepts + 1), 0.0);
  double fully_intervened = 0.0;
  for (auto seed : policy_seeds) {
    const auto r = intervene(model, split, seed, std::nullopt, ids);
    fully_intervened = r.accuracy_curve.back();
    for (std::size_t m = 0; m < r.accuracy_curve.size(); ++m) {
      mean.accuracy_curve[m] += r.accuracy_curve[m] / static_cast<double>(policy_seeds.size());
    }
  }
  // Every sample is fully intervened at m = k regardless of order.
  if (reference_accuracy) mean.s_int = *reference_accuracy - fully_intervened;
  return mean;
}

nlohmann::json to_json(const InterventionResult& r) {
  nlohmann::json j = {{"accuracy_curve", r.accuracy_curve}, {"policy", r.policy}, {"policy_seed", r.policy_seed}};
  j["s_int"] = r.s_int ? nlohmann::json(*r.s_int) : nlohmann::json(nullptr);
  return j;
}

}  // namespace leakage
