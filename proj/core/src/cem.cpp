#include <algorithm>
#include <random>

#include "leakage/cbm.hpp"
#include "leakage/error.hpp"
#include "leakage/random.hpp"
#include "model_internal.hpp"

namespace leakage {

namespace detail {

CemForward cem_forward(const TrainedModel& model, const nn::Matrix& inputs,
                       const ConceptMatrix* concepts, const ConceptMatrix* override_mask) {
  const int k = model.num_concepts;
  const int d = model.cem.embedding_dim;
  CemForward f;
  f.trunk = model.encoder.forward(inputs);
  const nn::Matrix& emb = f.trunk.output();
  const Eigen::Index n = emb.rows();
  f.prob.resize(n, k);
  f.mixed.resize(n, static_cast<Eigen::Index>(k) * d);
  f.scores.reserve(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) {
    f.scores.push_back(model.scorers[static_cast<std::size_t>(i)].forward(emb.middleCols(2 * i * d, 2 * d)));
    f.prob.col(i) = nn::sigmoid(f.scores.back().output()).col(0);
  }
  f.used = f.prob;
  if (override_mask != nullptr && override_mask->size() > 0) {
    if (concepts == nullptr || override_mask->rows() != n || override_mask->cols() != k ||
        concepts->rows() != n || concepts->cols() != k) {
      throw ShapeError("CEM override mask/concepts do not match the batch");
    }
    for (Eigen::Index r = 0; r < n; ++r) {
      for (int i = 0; i < k; ++i) {
        if ((*override_mask)(r, i) != 0) f.used(r, i) = (*concepts)(r, i);
      }
    }
  }
  for (int i = 0; i < k; ++i) {
    const auto plus = emb.middleCols(2 * i * d, d);
    const auto minus = emb.middleCols(2 * i * d + d, d);
    f.mixed.middleCols(static_cast<Eigen::Index>(i) * d, d) =
        (plus.array().colwise() * f.used.col(i).array() +
         minus.array().colwise() * (1.0 - f.used.col(i).array()))
            .matrix();
  }
  f.head = model.head.forward(f.mixed);
  return f;
}

}  // namespace detail

TrainedModel init_cem(CEMConfig config, int input_dim, int num_concepts, int num_classes) {
  validate(config);
  const int k = num_concepts;
  const int d = config.embedding_dim;
  if (config.trunk_spec.empty()) {
    config.trunk_spec = nn::chain({input_dim, 64, 64}, nn::Activation::kLeakyRelu, nn::Activation::kLeakyRelu);
    config.trunk_spec.push_back({64, 2 * k * d, nn::Activation::kIdentity});
  }
  if (config.head_spec.empty()) config.head_spec = default_head_spec(k * d, num_classes);
  if (config.trunk_spec.front().in_dim != input_dim || config.trunk_spec.back().out_dim != 2 * k * d) {
    throw ShapeError("CEM trunk must map the input width to 2*k*d outputs");
  }
  if (config.head_spec.front().in_dim != k * d || config.head_spec.back().out_dim != num_classes) {
    throw ShapeError("CEM head must map k*d inputs to the class count");
  }
  TrainedModel model;
  model.kind = ModelKind::kCem;
  model.cem = config;
  model.num_concepts = k;
  model.num_classes = num_classes;
  model.encoder = nn::MLP(config.trunk_spec, derive_seed(config.seed, string_tag("trunk")));
  model.head = nn::MLP(config.head_spec, derive_seed(config.seed, string_tag("head")));
  for (int i = 0; i < k; ++i) {
    model.scorers.emplace_back(std::vector<nn::LayerSpec>{{2 * d, 1, nn::Activation::kIdentity}},
                               derive_seed(config.seed, {string_tag("scorer"), static_cast<std::uint64_t>(i)}));
  }
  return model;
}

JointGradients cem_gradients(const TrainedModel& model, const nn::Matrix& inputs,
                             const ConceptMatrix& concepts, const std::vector<int>& labels,
                             const ConceptMatrix& mask) {
  const int k = model.num_concepts;
  const int d = model.cem.embedding_dim;
  const Eigen::Index nb = inputs.rows();
  const ConceptMatrix full_mask = mask.size() > 0 ? mask : ConceptMatrix::Zero(nb, k);

  const auto f = detail::cem_forward(model, inputs, &concepts, &full_mask);
  const auto ly = nn::ce_with_logits(f.head.output(), labels);
  // Concept loss on the unmasked scores: BCE(sigmoid(s), c).
  nn::Matrix scores(nb, k);
  for (int i = 0; i < k; ++i) scores.col(i) = f.scores[static_cast<std::size_t>(i)].output().col(0);
  const auto lc = nn::bce_with_logits(scores, detail::to_matrix(concepts));

  JointGradients g;
  g.head = model.head.backward(f.head, ly.grad);
  const nn::Matrix& dmix = g.head.input;
  const nn::Matrix& emb = f.trunk.output();
  nn::Matrix d_emb = nn::Matrix::Zero(nb, emb.cols());
  for (int i = 0; i < k; ++i) {
    const auto dw = dmix.middleCols(static_cast<Eigen::Index>(i) * d, d);
    const auto plus = emb.middleCols(2 * i * d, d);
    const auto minus = emb.middleCols(2 * i * d + d, d);
    const Eigen::ArrayXd a = f.used.col(i).array();
    d_emb.middleCols(2 * i * d, d) = (dw.array().colwise() * a).matrix();
    d_emb.middleCols(2 * i * d + d, d) = (dw.array().colwise() * (1.0 - a)).matrix();
    const Eigen::ArrayXd da = (dw.array() * (plus - minus).array()).rowwise().sum();
    const Eigen::ArrayXd p = f.prob.col(i).array();
    const Eigen::ArrayXd free = 1.0 - full_mask.col(i).cast<double>().array();
    nn::Matrix ds(nb, 1);
    ds.col(0) = (model.cem.lambda * lc.grad.col(i).array() + free * da * p * (1.0 - p)).matrix();
    auto gs = model.scorers[static_cast<std::size_t>(i)].backward(f.scores[static_cast<std::size_t>(i)], ds);
    d_emb.middleCols(2 * i * d, 2 * d) += gs.input;
    g.scorers.push_back(std::move(gs));
  }
  g.encoder = model.encoder.backward(f.trunk, d_emb);
  g.concept_loss = lc.loss;
  g.task_loss = ly.loss;
  g.loss = model.cem.lambda * lc.loss + ly.loss;
  return g;
}

TrainedModel train_cem(const CEMConfig& config, const Dataset& dataset) {
  if (dataset.splits.train.empty()) throw InsufficientSamplesError("dataset has an empty train split");
  TrainedModel model = init_cem(config, dataset.input_dim(), dataset.num_concepts(), dataset.num_classes);
  const CEMConfig& cfg = model.cem;
  const int k = model.num_concepts;

  const Dataset train = dataset.subset(Split::kTrain);
  const nn::Matrix x = train.inputs;
  const nn::AdamOptions adam{cfg.learning_rate};
  nn::OptimizerState trunk_state(model.encoder, adam);
  nn::OptimizerState head_state(model.head, adam);
  std::vector<nn::OptimizerState> score_states;
  for (const auto& s : model.scorers) score_states.emplace_back(s, adam);

  const Eigen::Index n = x.rows();
  const std::uint64_t shuffle_seed = derive_seed(cfg.seed, string_tag("shuffle"));
  Rng mask_rng(derive_seed(cfg.seed, string_tag("randint")));
  std::bernoulli_distribution coin(cfg.p_int);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto perm = nn::epoch_permutation(n, shuffle_seed, epoch);
    double sum_c = 0.0, sum_y = 0.0;
    for (Eigen::Index b = 0; b < n; b += cfg.batch_size) {
      const Eigen::Index e = std::min<Eigen::Index>(n, b + cfg.batch_size);
      const Eigen::Index nb = e - b;
      const nn::Matrix xb = nn::gather_rows(x, perm, b, e);
      ConceptMatrix cb(nb, k);
      std::vector<int> labels(static_cast<std::size_t>(nb));
      for (Eigen::Index r = 0; r < nb; ++r) {
        const auto src = perm[static_cast<std::size_t>(b + r)];
        cb.row(r) = train.concepts.row(src);
        labels[static_cast<std::size_t>(r)] = train.labels[static_cast<std::size_t>(src)];
      }
      // RandInt: fresh Bernoulli(p_int) per sample and concept for every batch.
      ConceptMatrix mask = ConceptMatrix::Zero(nb, k);
      if (cfg.p_int > 0.0) {
        for (Eigen::Index r = 0; r < nb; ++r) {
          for (int i = 0; i < k; ++i) mask(r, i) = coin(mask_rng) ? 1 : 0;
        }
      }
      const auto g = cem_gradients(model, xb, cb, labels, mask);
      nn::adam_step(model.head, g.head, head_state);
      for (int i = 0; i < k; ++i) {
        nn::adam_step(model.scorers[static_cast<std::size_t>(i)], g.scorers[static_cast<std::size_t>(i)],
                      score_states[static_cast<std::size_t>(i)]);
      }
      nn::adam_step(model.encoder, g.encoder, trunk_state);
      sum_c += g.concept_loss * static_cast<double>(nb);
      sum_y += g.task_loss * static_cast<double>(nb);
    }
    const double mc = sum_c / static_cast<double>(n);
    const double my = sum_y / static_cast<double>(n);
    model.log.concept_loss.push_back(mc);
    model.log.task.push_back(my);
    model.log.total.push_back(cfg.lambda * mc + my);
  }
  return model;
}

}  // namespace leakage
