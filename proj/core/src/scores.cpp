#include "leakage/scores.hpp"

#include <cmath>
#include <map>

#include "leakage/error.hpp"
#include "leakage/random.hpp"

namespace leakage {

void ConceptData::validate() const {
  const auto n = static_cast<Eigen::Index>(labels.size());
  if (true_concepts.cols() < 1) throw ShapeError("concept data: at least one concept required");
  if (true_concepts.rows() != n || predicted.rows() != n) {
    throw ShapeError("concept data: row counts differ (c " + std::to_string(true_concepts.rows()) + ", chat " +
                     std::to_string(predicted.rows()) + ", y " + std::to_string(n) + ")");
  }
  if (predicted.cols() != true_concepts.cols()) throw ShapeError("concept data: chat and c widths differ");
  for (Eigen::Index t = 0; t < true_concepts.size(); ++t) {
    const int v = true_concepts.data()[t];
    if (v != 0 && v != 1) throw DomainError("concept data: ground-truth concepts must be 0/1");
  }
  if (embeddings) {
    const auto& e = *embeddings;
    const auto w = static_cast<Eigen::Index>(e.k) * e.d;
    if (e.k != num_concepts()) throw ShapeError("concept data: embedding k differs from concept count");
    for (const SampleMatrix* m : {&e.positive, &e.negative, &e.mixed}) {
      if (m->rows() != n || m->cols() != w) throw ShapeError("concept data: embedding tensor shape mismatch");
    }
  }
}

ConceptData ConceptData::from_dump(const ActivationDump& dump) {
  ConceptData d{dump.concepts, dump.activations, dump.labels, dump.embeddings};
  d.validate();
  return d;
}

ScoreWithCI ci_from_values(const std::vector<double>& values) {
  ScoreWithCI s;
  s.repeats = static_cast<int>(values.size());
  if (values.empty()) return s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  double half = 0.0;
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    const double sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
    half = 1.96 * sd / std::sqrt(static_cast<double>(values.size()));
  }
  s.ci95_low = s.mean - half;
  s.ci95_high = s.mean + half;
  return s;
}

nlohmann::json to_json(const ScoreWithCI& s) {
  return {{"mean", s.mean}, {"ci95_low", s.ci95_low}, {"ci95_high", s.ci95_high}, {"repeats", s.repeats}};
}

ScoreWithCI score_with_ci_from_json(const nlohmann::json& j) {
  try {
    return {j.at("mean").get<double>(), j.at("ci95_low").get<double>(), j.at("ci95_high").get<double>(),
            j.at("repeats").get<int>()};
  } catch (const nlohmann::json::exception& e) {
    throw MissingFieldError(std::string("score with CI: ") + e.what());
  }
}

ScoreWithCI score_with_ci(const ScoreFn& fn, const ConceptData& data, const EstimatorConfig& config,
                          std::uint64_t base_seed, int repeats) {
  if (repeats < 2) throw ConfigError("score_with_ci: repeats must be at least 2");
  std::vector<double> values;
  for (int r = 0; r < repeats; ++r) {
    EstimatorConfig cfg = config;
    cfg.jitter_seed = base_seed + static_cast<std::uint64_t>(r);
    values.push_back(fn(data, cfg));
  }
  return ci_from_values(values);
}

namespace {

constexpr std::uint64_t kLabelSlot = 0x6c6162656c000001ULL;
constexpr std::uint64_t kConceptSlot = 0x636f6e6370000002ULL;
constexpr std::uint64_t kEmbeddingSlot = 0x656d626564000003ULL;
constexpr std::uint64_t kAlignSlot = 0x616c69676e000004ULL;

SampleMatrix int_column(const ConceptMatrix& m, int i) {
  SampleMatrix out(m.rows(), 1);
  for (Eigen::Index r = 0; r < m.rows(); ++r) out(r, 0) = m(r, i);
  return out;
}

// Jittered views of one ConceptData under one evaluation seed, with entropies cached.
class Evaluation {
 public:
  Evaluation(const ConceptData& data, const EstimatorConfig& config) : data_(data), cfg_(config) {
    data.validate();
    if (config.k_neighbors < 1) throw ConfigError("k_neighbors must be positive");
    if (static_cast<Eigen::Index>(data.size()) <= config.k_neighbors) {
      throw InsufficientSamplesError("need more than k_neighbors samples");
    }
  }

  const SampleMatrix& label(int copy) {
    auto& slot = labels_[copy];
    if (slot.size() == 0) {
      const SampleMatrix y = column(std::span<const int>(data_.labels));
      if (copy == 0 && is_constant(y)) throw DegenerateVariableError("labels y take a single value");
      slot = jitter(y, cfg_.jitter_amplitude, derive_seed(cfg_.jitter_seed, {kLabelSlot, std::uint64_t(copy)}));
    }
    return slot;
  }

  // which = 0: predicted chat_i, 1: ground truth c_i. Both share the slot's draws.
  const SampleMatrix& concept_col(int which, int i, int copy) {
    auto& slot = concepts_[{which, i, copy}];
    if (slot.size() == 0) {
      const SampleMatrix raw = which == 0 ? SampleMatrix(data_.predicted.col(i)) : int_column(data_.true_concepts, i);
      if (copy == 0 && is_constant(raw)) {
        throw DegenerateVariableError(std::string(which == 0 ? "predicted concept column chat_" : "concept column c_") +
                                      std::to_string(i) + " is constant");
      }
      slot = jitter(raw, cfg_.jitter_amplitude,
                    derive_seed(cfg_.jitter_seed, {kConceptSlot, std::uint64_t(i), std::uint64_t(copy)}));
    }
    return slot;
  }

  const SampleMatrix& embedding(int i) {
    auto& slot = embeddings_[i];
    if (slot.size() == 0) {
      if (!data_.embeddings) throw MissingFieldError("CEM scores need concept embeddings");
      const auto& e = *data_.embeddings;
      const SampleMatrix raw = e.mixed.middleCols(static_cast<Eigen::Index>(i) * e.d, e.d);
      slot = jitter(raw, cfg_.jitter_amplitude, derive_seed(cfg_.jitter_seed, {kEmbeddingSlot, std::uint64_t(i)}));
    }
    return slot;
  }

  double mi(const SampleMatrix& a, const SampleMatrix& b) const { return ksg_mi_prejittered(a, b, cfg_); }

  double h_label() {
    if (!h_label_) h_label_ = positive(mi(label(0), label(1)), "H(y)");
    return *h_label_;
  }

  double h_concept(int which, int i) {
    auto it = h_concepts_.find({which, i});
    if (it != h_concepts_.end()) return it->second;
    const double h = positive(mi(concept_col(which, i, 0), concept_col(which, i, 1)),
                              (which == 0 ? "H(chat_" : "H(c_") + std::to_string(i) + ")");
    h_concepts_[{which, i}] = h;
    return h;
  }

  [[nodiscard]] const EstimatorConfig& config() const { return cfg_; }
  [[nodiscard]] const ConceptData& data() const { return data_; }

 private:
  static double positive(double h, const std::string& what) {
    if (!(h > 0.0)) throw DegenerateVariableError(what + " is not positive");
    return h;
  }

  const ConceptData& data_;
  EstimatorConfig cfg_;
  std::map<int, SampleMatrix> labels_;
  std::map<std::tuple<int, int, int>, SampleMatrix> concepts_;
  std::map<int, SampleMatrix> embeddings_;
  std::optional<double> h_label_;
  std::map<std::pair<int, int>, double> h_concepts_;
};

void check_index(const ConceptData& data, int i) {
  if (i < 0 || i >= data.num_concepts()) {
    throw ConfigError("concept index " + std::to_string(i) + " out of range (k=" +
                      std::to_string(data.num_concepts()) + ")");
  }
}

double ctl_i_eval(Evaluation& ev, int i) {
  const double hy = ev.h_label();
  const double learned = ev.mi(ev.concept_col(0, i, 0), ev.label(0));
  const double truth = ev.mi(ev.concept_col(1, i, 0), ev.label(0));
  return std::abs(learned / hy - truth / hy);
}

double icl_ij_eval(Evaluation& ev, int i, int j) {
  if (i == j) return 0.0;
  // Fixed argument order keeps the value symmetric in (i, j).
  const int a = std::min(i, j);
  const int b = std::max(i, j);
  const double learned = ev.mi(ev.concept_col(0, a, 0), ev.concept_col(0, b, 0)) /
                         std::sqrt(ev.h_concept(0, a) * ev.h_concept(0, b));
  const double truth = ev.mi(ev.concept_col(1, a, 0), ev.concept_col(1, b, 0)) /
                       std::sqrt(ev.h_concept(1, a) * ev.h_concept(1, b));
  return std::abs(learned - truth);
}

const CemEmbeddings& require_embeddings(const ConceptData& data) {
  if (!data.embeddings) throw MissingFieldError("CEM scores need concept embeddings (missing .emb.bin sidecar?)");
  return *data.embeddings;
}

}  // namespace

double ctl_i(const ConceptData& data, int i, const EstimatorConfig& config) {
  check_index(data, i);
  Evaluation ev(data, config);
  return ctl_i_eval(ev, i);
}

double ctl(const ConceptData& data, const EstimatorConfig& config) { return ctl_icl_values(data, config).ctl; }

double icl_ij(const ConceptData& data, int i, int j, const EstimatorConfig& config) {
  check_index(data, i);
  check_index(data, j);
  if (i == j) return 0.0;
  Evaluation ev(data, config);
  return icl_ij_eval(ev, i, j);
}

double icl_i(const ConceptData& data, int i, const EstimatorConfig& config) {
  check_index(data, i);
  return ctl_icl_values(data, config).icl_per_concept[static_cast<std::size_t>(i)];
}

double icl(const ConceptData& data, const EstimatorConfig& config) { return ctl_icl_values(data, config).icl; }

CtlIclValues aggregate_ctl_icl(std::vector<double> ctl_per_concept, Eigen::MatrixXd icl_pairwise) {
  const auto k = static_cast<int>(ctl_per_concept.size());
  if (icl_pairwise.rows() != k || icl_pairwise.cols() != k) {
    throw ShapeError("aggregate_ctl_icl: pairwise ICL must be k x k");
  }
  CtlIclValues v;
  v.ctl_per_concept = std::move(ctl_per_concept);
  v.icl_pairwise = std::move(icl_pairwise);
  for (double c : v.ctl_per_concept) v.ctl += c / k;
  for (int i = 0; i < k; ++i) {
    double s = 0.0;
    for (int j = 0; j < k; ++j) {
      if (j != i) s += v.icl_pairwise(i, j);
    }
    s = k > 1 ? s / (k - 1) : 0.0;
    v.icl_per_concept.push_back(s);
    v.icl += s / k;
  }
  return v;
}

CtlIclValues ctl_icl_values(const ConceptData& data, const EstimatorConfig& config) {
  Evaluation ev(data, config);
  const int k = data.num_concepts();
  std::vector<double> per_concept;
  for (int i = 0; i < k; ++i) per_concept.push_back(ctl_i_eval(ev, i));
  Eigen::MatrixXd pairwise = Eigen::MatrixXd::Zero(k, k);
  for (int i = 0; i < k; ++i) {
    for (int j = i + 1; j < k; ++j) pairwise(i, j) = pairwise(j, i) = icl_ij_eval(ev, i, j);
  }
  return aggregate_ctl_icl(std::move(per_concept), std::move(pairwise));
}

double cem_ct(const ConceptData& data, const EstimatorConfig& config) {
  require_embeddings(data);
  Evaluation ev(data, config);
  const int k = data.num_concepts();
  double sum = 0.0;
  for (int i = 0; i < k; ++i) sum += ev.mi(ev.embedding(i), ev.label(0)) / ev.h_label();
  return sum / k;
}

double cem_ic(const ConceptData& data, const EstimatorConfig& config) {
  require_embeddings(data);
  const int k = data.num_concepts();
  if (k < 2) throw ConfigError("cem_ic needs at least two concepts");
  Evaluation ev(data, config);
  double sum = 0.0;
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < i; ++j) sum += ev.mi(ev.embedding(i), ev.concept_col(1, j, 0)) / ev.h_concept(1, j);
  }
  return 2.0 * sum / (static_cast<double>(k) * (k - 1));
}

double cem_self(const ConceptData& data, const EstimatorConfig& config) {
  require_embeddings(data);
  Evaluation ev(data, config);
  const int k = data.num_concepts();
  double sum = 0.0;
  for (int i = 0; i < k; ++i) sum += ev.mi(ev.embedding(i), ev.concept_col(1, i, 0)) / ev.h_concept(1, i);
  return sum / k;
}

double cem_align(const ConceptData& data, const EstimatorConfig& config) {
  const auto& e = require_embeddings(data);
  data.validate();
  const int k = data.num_concepts();
  const auto n = static_cast<Eigen::Index>(data.size());

  // Normalized task MI of `branch` embeddings of concept i on the rows where c_i == value.
  auto cell_ct = [&](int i, int branch, int value) {
    std::vector<Eigen::Index> rows;
    for (Eigen::Index r = 0; r < n; ++r) {
      if (data.true_concepts(r, i) == value) rows.push_back(r);
    }
    const char* bname = branch == 0 ? "positive" : "negative";
    const std::string cell = std::string(bname) + " embedding of concept " + std::to_string(i) + " on c_" +
                             std::to_string(i) + "=" + std::to_string(value);
    if (static_cast<int>(rows.size()) < config.k_neighbors + 1) {
      throw InsufficientSamplesError("cem_align: cell '" + cell + "' has " + std::to_string(rows.size()) +
                                     " samples, need at least " + std::to_string(config.k_neighbors + 1));
    }
    const SampleMatrix& src = branch == 0 ? e.positive : e.negative;
    SampleMatrix emb(static_cast<Eigen::Index>(rows.size()), e.d);
    SampleMatrix y(static_cast<Eigen::Index>(rows.size()), 1);
    for (std::size_t t = 0; t < rows.size(); ++t) {
      emb.row(static_cast<Eigen::Index>(t)) = src.block(rows[t], static_cast<Eigen::Index>(i) * e.d, 1, e.d);
      y(static_cast<Eigen::Index>(t), 0) = data.labels[static_cast<std::size_t>(rows[t])];
    }
    if (is_constant(y)) throw DegenerateVariableError("cem_align: labels are constant in cell '" + cell + "'");
    auto seed = [&](std::uint64_t what) {
      return derive_seed(config.jitter_seed, {kAlignSlot, std::uint64_t(i), std::uint64_t(branch),
                                              std::uint64_t(value), what});
    };
    const SampleMatrix je = jitter(emb, config.jitter_amplitude, seed(0));
    const SampleMatrix jy0 = jitter(y, config.jitter_amplitude, seed(1));
    const SampleMatrix jy1 = jitter(y, config.jitter_amplitude, seed(2));
    const double hy = ksg_mi_prejittered(jy0, jy1, config);
    if (!(hy > 0.0)) throw DegenerateVariableError("cem_align: H(y) is not positive in cell '" + cell + "'");
    return ksg_mi_prejittered(je, jy0, config) / hy;
  };

  double sum = 0.0;
  for (int i = 0; i < k; ++i) {
    // c_i = 1 aligns the positive branch, c_i = 0 the negative one.
    sum += (cell_ct(i, 0, 1) - cell_ct(i, 0, 0)) + (cell_ct(i, 1, 0) - cell_ct(i, 1, 1));
  }
  return sum / k;
}

double s_int(double intervened_accuracy, double reference_accuracy) {
  return reference_accuracy - intervened_accuracy;
}

std::string to_string(ComparisonOutcome o) {
  switch (o) {
    case ComparisonOutcome::kAHigher: return "A_higher";
    case ComparisonOutcome::kBHigher: return "B_higher";
    case ComparisonOutcome::kIndistinguishable: return "indistinguishable";
    case ComparisonOutcome::kCriterionInapplicable: return "criterion_inapplicable";
  }
  return "indistinguishable";
}

nlohmann::json to_json(const ComparisonVerdict& v) {
  nlohmann::json ev = nlohmann::json::array();
  for (const auto& c : v.evidence) {
    ev.push_back({{"score", c.score}, {"A", to_json(c.a)}, {"B", to_json(c.b)}, {"relation", c.relation}});
  }
  return {{"outcome", to_string(v.outcome)}, {"evidence", ev}};
}

int ci_relation(const ScoreWithCI& a, const ScoreWithCI& b) {
  if (a.ci95_low > b.ci95_high) return 1;
  if (b.ci95_low > a.ci95_high) return -1;
  return 0;
}

ComparisonVerdict leakage_compare(const ScoreWithCI& ctl_a, const ScoreWithCI& icl_a, const ScoreWithCI& ctl_b,
                                  const ScoreWithCI& icl_b) {
  for (const auto* s : {&ctl_a, &icl_a, &ctl_b, &icl_b}) {
    if (s->repeats < 2 || !std::isfinite(s->ci95_low) || !std::isfinite(s->ci95_high) ||
        s->ci95_low > s->mean || s->mean > s->ci95_high) {
      throw MissingFieldError("leakage_compare: CTL and ICL need valid confidence intervals");
    }
  }
  ComparisonVerdict v;
  const int rc = ci_relation(ctl_a, ctl_b);
  const int ri = ci_relation(icl_a, icl_b);
  v.evidence = {{"ctl", ctl_a, ctl_b, rc}, {"icl", icl_a, icl_b, ri}};
  if (rc * ri < 0) {
    v.outcome = ComparisonOutcome::kCriterionInapplicable;
  } else if (rc > 0 || ri > 0) {
    v.outcome = ComparisonOutcome::kAHigher;
  } else if (rc < 0 || ri < 0) {
    v.outcome = ComparisonOutcome::kBHigher;
  } else {
    v.outcome = ComparisonOutcome::kIndistinguishable;
  }
  return v;
}

}  // namespace leakage
