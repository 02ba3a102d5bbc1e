#include <algorithm>
#include <cmath>

#include "leakage/cbm.hpp"
#include "leakage/error.hpp"
#include "leakage/random.hpp"
#include "model_internal.hpp"

namespace leakage {

std::string to_string(Encoding e) {
  switch (e) {
    case Encoding::kHard: return "hard";
    case Encoding::kSoft: return "soft";
    case Encoding::kLogit: return "logit";
  }
  return "soft";
}

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::kIndependent: return "independent";
    case Strategy::kSequential: return "sequential";
    case Strategy::kJoint: return "joint";
  }
  return "joint";
}

std::string to_string(ModelKind k) { return k == ModelKind::kCbm ? "cbm" : "cem"; }

Encoding parse_encoding(const std::string& s) {
  if (s == "hard") return Encoding::kHard;
  if (s == "soft") return Encoding::kSoft;
  if (s == "logit") return Encoding::kLogit;
  throw ConfigError("unknown encoding '" + s + "'");
}

Strategy parse_strategy(const std::string& s) {
  if (s == "independent") return Strategy::kIndependent;
  if (s == "sequential") return Strategy::kSequential;
  if (s == "joint") return Strategy::kJoint;
  throw ConfigError("unknown strategy '" + s + "'");
}

std::string to_string(LogitIntervention m) {
  return m == LogitIntervention::kPercentile ? "percentile95" : "ground_truth";
}

LogitIntervention parse_logit_intervention(const std::string& s) {
  if (s == "ground_truth") return LogitIntervention::kGroundTruth;
  if (s == "percentile95") return LogitIntervention::kPercentile;
  throw ConfigError("unknown logit_intervention '" + s + "' (ground_truth or percentile95)");
}

std::vector<nn::LayerSpec> default_encoder_spec(int input_dim, int num_concepts) {
  return nn::chain({input_dim, 64, 64, num_concepts}, nn::Activation::kLeakyRelu,
                   nn::Activation::kIdentity);
}

std::vector<nn::LayerSpec> default_head_spec(int num_inputs, int num_classes) {
  return {{num_inputs, num_classes, nn::Activation::kIdentity}};
}

void validate(const CBMConfig& c) {
  if (c.lambda < 0.0 || !std::isfinite(c.lambda)) throw ConfigError("lambda must be a nonnegative number");
  if (c.encoding == Encoding::kHard && c.strategy != Strategy::kIndependent) {
    throw ConfigError("hard CBMs can only be trained with the independent strategy");
  }
  if (c.epochs < 0 || c.head_epochs < 0) throw ConfigError("epoch counts must be nonnegative");
  if (c.batch_size <= 0) throw ConfigError("batch size must be positive");
  if (!(c.learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
}

void validate(const CEMConfig& c) {
  if (c.embedding_dim < 1) throw ConfigError("embedding_dim must be positive");
  if (c.lambda < 0.0 || !std::isfinite(c.lambda)) throw ConfigError("lambda must be a nonnegative number");
  if (!(c.p_int >= 0.0 && c.p_int < 1.0)) throw ConfigError("p_int must lie in [0, 1)");
  if (c.epochs < 0) throw ConfigError("epoch count must be nonnegative");
  if (c.batch_size <= 0) throw ConfigError("batch size must be positive");
  if (!(c.learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
}

namespace {

nlohmann::json specs_to_json(const std::vector<nn::LayerSpec>& specs) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& s : specs) {
    out.push_back({{"in", s.in_dim}, {"out", s.out_dim}, {"activation", nn::to_string(s.activation)}});
  }
  return out;
}

std::vector<nn::LayerSpec> specs_from_json(const nlohmann::json& j) {
  std::vector<nn::LayerSpec> out;
  for (const auto& l : j) {
    out.push_back({l.at("in").get<int>(), l.at("out").get<int>(),
                   nn::parse_activation(l.at("activation").get<std::string>())});
  }
  return out;
}

}  // namespace

nlohmann::json to_json(const CBMConfig& c) {
  return {{"encoding", to_string(c.encoding)},
          {"strategy", to_string(c.strategy)},
          {"lambda", c.lambda},
          {"encoder_spec", specs_to_json(c.encoder_spec)},
          {"head_spec", specs_to_json(c.head_spec)},
          {"epochs", c.epochs},
          {"head_epochs", c.head_epochs},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"seed", c.seed},
          {"logit_intervention", to_string(c.logit_intervention)}};
}

nlohmann::json to_json(const CEMConfig& c) {
  return {{"embedding_dim", c.embedding_dim},
          {"lambda", c.lambda},
          {"p_int", c.p_int},
          {"trunk_spec", specs_to_json(c.trunk_spec)},
          {"head_spec", specs_to_json(c.head_spec)},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"seed", c.seed}};
}

CBMConfig cbm_config_from_json(const nlohmann::json& j) {
  CBMConfig c;
  try {
    c.encoding = parse_encoding(j.value("encoding", std::string("soft")));
    c.strategy = c.encoding == Encoding::kHard ? Strategy::kIndependent : Strategy::kJoint;
    if (j.contains("strategy")) c.strategy = parse_strategy(j.at("strategy").get<std::string>());
    c.lambda = j.value("lambda", c.lambda);
    if (j.contains("encoder_spec")) c.encoder_spec = specs_from_json(j.at("encoder_spec"));
    if (j.contains("head_spec")) c.head_spec = specs_from_json(j.at("head_spec"));
    c.epochs = j.value("epochs", c.epochs);
    c.head_epochs = j.value("head_epochs", c.head_epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.seed = j.value("seed", c.seed);
    if (j.contains("logit_intervention")) {
      c.logit_intervention = parse_logit_intervention(j.at("logit_intervention").get<std::string>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("CBM config: ") + e.what());
  }
  validate(c);
  return c;
}

CEMConfig cem_config_from_json(const nlohmann::json& j) {
  CEMConfig c;
  try {
    c.embedding_dim = j.value("embedding_dim", c.embedding_dim);
    c.lambda = j.value("lambda", c.lambda);
    c.p_int = j.value("p_int", c.p_int);
    if (j.contains("trunk_spec")) c.trunk_spec = specs_from_json(j.at("trunk_spec"));
    if (j.contains("head_spec")) c.head_spec = specs_from_json(j.at("head_spec"));
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("CEM config: ") + e.what());
  }
  validate(c);
  return c;
}

// ---------------------------------------------------------------------------

namespace detail {

nn::Matrix to_matrix(const ConceptMatrix& c) { return c.cast<double>(); }

nn::Matrix labels_column(const std::vector<int>& labels) {
  nn::Matrix m(static_cast<Eigen::Index>(labels.size()), 1);
  for (std::size_t i = 0; i < labels.size(); ++i) m(static_cast<Eigen::Index>(i), 0) = labels[i];
  return m;
}

std::vector<int> argmax_rows(const nn::Matrix& m) {
  std::vector<int> out(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Eigen::Index best = 0;
    m.row(r).maxCoeff(&best);
    out[static_cast<std::size_t>(r)] = static_cast<int>(best);
  }
  return out;
}

double intervened_value(const TrainedModel& model, int concept_value) {
  if (model.kind == ModelKind::kCbm && model.cbm.encoding == Encoding::kLogit &&
      model.cbm.logit_intervention == LogitIntervention::kPercentile) {
    return concept_value != 0 ? model.logit_intervention : -model.logit_intervention;
  }
  return concept_value != 0 ? 1.0 : 0.0;
}

nn::Matrix cbm_head_input(const TrainedModel& model, const nn::Matrix& logits,
                          const ConceptMatrix* concepts, const ConceptMatrix* mask) {
  nn::Matrix act;
  switch (model.cbm.encoding) {
    case Encoding::kHard:
      act = logits.unaryExpr([](double z) { return z >= 0.0 ? 1.0 : 0.0; });
      break;
    case Encoding::kSoft: act = nn::sigmoid(logits); break;
    case Encoding::kLogit: act = logits; break;
  }
  if (mask != nullptr && mask->size() > 0) {
    if (concepts == nullptr || mask->rows() != act.rows() || mask->cols() != act.cols() ||
        concepts->rows() != act.rows() || concepts->cols() != act.cols()) {
      throw ShapeError("intervention mask/concepts do not match the activations");
    }
    for (Eigen::Index r = 0; r < act.rows(); ++r) {
      for (Eigen::Index c = 0; c < act.cols(); ++c) {
        if ((*mask)(r, c) != 0) act(r, c) = intervened_value(model, (*concepts)(r, c));
      }
    }
  }
  return act;
}

}  // namespace detail

namespace {

using detail::labels_column;
using detail::to_matrix;

double percentile_abs(const nn::Matrix& m, double q) {
  std::vector<double> v(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.size(); ++i) v[static_cast<std::size_t>(i)] = std::fabs(m.data()[i]);
  std::sort(v.begin(), v.end());
  // nearest-rank
  const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(v.size())));
  return v[std::clamp<std::size_t>(rank, 1, v.size()) - 1];
}

}  // namespace

TrainedModel init_cbm(CBMConfig config, int input_dim, int num_concepts, int num_classes) {
  validate(config);
  if (config.encoder_spec.empty()) config.encoder_spec = default_encoder_spec(input_dim, num_concepts);
  if (config.head_spec.empty()) config.head_spec = default_head_spec(num_concepts, num_classes);
  if (config.encoder_spec.front().in_dim != input_dim) {
    throw ShapeError("encoder input width " + std::to_string(config.encoder_spec.front().in_dim) +
                     " does not match dataset input width " + std::to_string(input_dim));
  }
  if (config.encoder_spec.back().out_dim != num_concepts) {
    throw ShapeError("encoder output width " + std::to_string(config.encoder_spec.back().out_dim) +
                     " does not match concept count " + std::to_string(num_concepts));
  }
  if (config.head_spec.front().in_dim != num_concepts || config.head_spec.back().out_dim != num_classes) {
    throw ShapeError("head must map the concept count to the class count");
  }
  TrainedModel model;
  model.kind = ModelKind::kCbm;
  model.cbm = config;
  model.num_concepts = num_concepts;
  model.num_classes = num_classes;
  model.encoder = nn::MLP(config.encoder_spec, derive_seed(config.seed, string_tag("encoder")));
  model.head = nn::MLP(config.head_spec, derive_seed(config.seed, string_tag("head")));
  return model;
}

JointGradients cbm_joint_gradients(const TrainedModel& model, const nn::Matrix& inputs,
                                   const ConceptMatrix& concepts, const std::vector<int>& labels) {
  const auto enc_cache = model.encoder.forward(inputs);
  const nn::Matrix& logits = enc_cache.output();
  const auto lc = nn::bce_with_logits(logits, to_matrix(concepts));
  const nn::Matrix act = detail::cbm_head_input(model, logits, nullptr, nullptr);
  const auto head_cache = model.head.forward(act);
  const auto ly = nn::ce_with_logits(head_cache.output(), labels);

  JointGradients g;
  g.head = model.head.backward(head_cache, ly.grad);
  nn::Matrix d_logits = g.head.input;
  switch (model.cbm.encoding) {
    case Encoding::kSoft: d_logits = d_logits.cwiseProduct(act.cwiseProduct((1.0 - act.array()).matrix())); break;
    case Encoding::kLogit: break;
    case Encoding::kHard: d_logits.setZero(); break;  // the step function passes no gradient
  }
  d_logits += model.cbm.lambda * lc.grad;
  g.encoder = model.encoder.backward(enc_cache, d_logits);
  g.concept_loss = lc.loss;
  g.task_loss = ly.loss;
  g.loss = model.cbm.lambda * lc.loss + ly.loss;
  return g;
}

TrainedModel train_cbm(const CBMConfig& config, const Dataset& dataset) {
  if (dataset.splits.train.empty()) throw InsufficientSamplesError("dataset has an empty train split");
  TrainedModel model = init_cbm(config, dataset.input_dim(), dataset.num_concepts(), dataset.num_classes);
  const CBMConfig& cfg = model.cbm;

  const Dataset train = dataset.subset(Split::kTrain);
  const nn::Matrix x = train.inputs;
  const nn::Matrix c = to_matrix(train.concepts);
  const nn::Matrix y = labels_column(train.labels);
  const nn::AdamOptions adam{cfg.learning_rate};

  if (cfg.strategy == Strategy::kJoint) {
    nn::OptimizerState enc_state(model.encoder, adam);
    nn::OptimizerState head_state(model.head, adam);
    const Eigen::Index n = x.rows();
    const std::uint64_t shuffle_seed = derive_seed(cfg.seed, string_tag("shuffle"));
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      const auto perm = nn::epoch_permutation(n, shuffle_seed, epoch);
      double sum_c = 0.0, sum_y = 0.0;
      for (Eigen::Index b = 0; b < n; b += cfg.batch_size) {
        const Eigen::Index e = std::min<Eigen::Index>(n, b + cfg.batch_size);
        const nn::Matrix xb = nn::gather_rows(x, perm, b, e);
        const ConceptMatrix cb = nn::gather_rows(c, perm, b, e).cast<int>();
        std::vector<int> labels(static_cast<std::size_t>(e - b));
        for (Eigen::Index i = b; i < e; ++i) {
          labels[static_cast<std::size_t>(i - b)] = train.labels[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
        }
        const auto g = cbm_joint_gradients(model, xb, cb, labels);
        nn::adam_step(model.head, g.head, head_state);
        nn::adam_step(model.encoder, g.encoder, enc_state);
        const auto w = static_cast<double>(e - b);
        sum_c += g.concept_loss * w;
        sum_y += g.task_loss * w;
      }
      const double mc = sum_c / static_cast<double>(n);
      const double my = sum_y / static_cast<double>(n);
      model.log.concept_loss.push_back(mc);
      model.log.task.push_back(my);
      model.log.total.push_back(cfg.lambda * mc + my);
    }
  } else {
    nn::TrainOptions enc_opts;
    enc_opts.epochs = cfg.epochs;
    enc_opts.batch_size = cfg.batch_size;
    enc_opts.seed = derive_seed(cfg.seed, string_tag("shuffle"));
    enc_opts.adam = adam;
    const auto enc_log = nn::train(model.encoder, x, c, nn::LossKind::kBceLogits, enc_opts);
    model.log.concept_loss = enc_log.epoch_loss;
    model.log.total = enc_log.epoch_loss;
    model.log.task.assign(enc_log.epoch_loss.size(), 0.0);

    nn::Matrix head_inputs = c;
    if (cfg.strategy == Strategy::kSequential) {
      head_inputs = detail::cbm_head_input(model, model.encoder.predict(x), nullptr, nullptr);
    }
    nn::TrainOptions head_opts = enc_opts;
    head_opts.epochs = cfg.head_epochs;
    head_opts.seed = derive_seed(cfg.seed, string_tag("head_shuffle"));
    model.log.head = nn::train(model.head, head_inputs, y, nn::LossKind::kCeLogits, head_opts).epoch_loss;
  }

  if (cfg.encoding == Encoding::kLogit) {
    model.logit_intervention = percentile_abs(model.encoder.predict(x), 0.95);
  }
  return model;
}

}  // namespace leakage
