#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "leakage/nn.hpp"
#include "leakage/synth.hpp"

namespace leakage {

enum class Encoding { kHard, kSoft, kLogit };
enum class Strategy { kIndependent, kSequential, kJoint };
enum class ModelKind { kCbm, kCem };
/// Value written into an intervened logit activation: the ground-truth 0/1, or +-L with
/// L the 95th percentile of |train logits|.
enum class LogitIntervention { kGroundTruth, kPercentile };

std::string to_string(Encoding e);
std::string to_string(Strategy s);
std::string to_string(ModelKind k);
Encoding parse_encoding(const std::string& s);
Strategy parse_strategy(const std::string& s);
std::string to_string(LogitIntervention m);
LogitIntervention parse_logit_intervention(const std::string& s);

/// {in, 64, 64, k} leaky-ReLU encoder with raw logit outputs.
std::vector<nn::LayerSpec> default_encoder_spec(int input_dim, int num_concepts);
/// Linear head from k inputs to class logits.
std::vector<nn::LayerSpec> default_head_spec(int num_inputs, int num_classes);

struct CBMConfig {
  Encoding encoding = Encoding::kSoft;
  Strategy strategy = Strategy::kJoint;
  double lambda = 1.0;
  std::vector<nn::LayerSpec> encoder_spec;  // empty: default for the dataset
  std::vector<nn::LayerSpec> head_spec;     // empty: default for the dataset
  int epochs = 200;
  int head_epochs = 200;  // independent and sequential heads; fewer leave a linear head unconverged at batch 512
  int batch_size = 512;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  LogitIntervention logit_intervention = LogitIntervention::kGroundTruth;
};

void validate(const CBMConfig& c);

struct CEMConfig {
  int embedding_dim = 16;
  double lambda = 1.0;
  double p_int = 0.0;
  std::vector<nn::LayerSpec> trunk_spec;  // empty: {in, 64, 64} leaky + linear 2*k*d outputs
  std::vector<nn::LayerSpec> head_spec;   // empty: linear k*d -> classes
  int epochs = 200;
  int batch_size = 512;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
};

void validate(const CEMConfig& c);

nlohmann::json to_json(const CBMConfig& c);
nlohmann::json to_json(const CEMConfig& c);
CBMConfig cbm_config_from_json(const nlohmann::json& j);
CEMConfig cem_config_from_json(const nlohmann::json& j);

struct ModelLog {
  std::vector<double> total;    // per epoch, batch-size weighted
  std::vector<double> concept_loss;  // L_c part (0 where unused)
  std::vector<double> task;          // L_y part (0 where unused)
  std::vector<double> head;     // per head epoch for independent/sequential training
};

struct TrainedModel {
  ModelKind kind = ModelKind::kCbm;
  CBMConfig cbm;
  CEMConfig cem;
  int num_concepts = 0;
  int num_classes = 2;
  nn::MLP encoder;               // CBM encoder or CEM trunk
  nn::MLP head;
  std::vector<nn::MLP> scorers;  // CEM: one 2d -> 1 affine map per concept
  double logit_intervention = 0.0;  // logit CBMs: L, the 95th percentile of |train logits|
  ModelLog log;
};

/// Untrained model with initialized parameters (defaults filled in from the shapes).
TrainedModel init_cbm(CBMConfig config, int input_dim, int num_concepts, int num_classes);
TrainedModel init_cem(CEMConfig config, int input_dim, int num_concepts, int num_classes);

TrainedModel train_cbm(const CBMConfig& config, const Dataset& dataset);
TrainedModel train_cem(const CEMConfig& config, const Dataset& dataset);

/// Joint objective lambda * L_c + L_y on one batch and its gradients.
struct JointGradients {
  double loss = 0.0;
  double concept_loss = 0.0;
  double task_loss = 0.0;
  nn::Gradients encoder;
  nn::Gradients head;
  std::vector<nn::Gradients> scorers;
};

JointGradients cbm_joint_gradients(const TrainedModel& model, const nn::Matrix& inputs,
                                   const ConceptMatrix& concepts, const std::vector<int>& labels);

/// `mask` (N x k) marks activations replaced by ground truth during this step (RandInt).
JointGradients cem_gradients(const TrainedModel& model, const nn::Matrix& inputs,
                             const ConceptMatrix& concepts, const std::vector<int>& labels,
                             const ConceptMatrix& mask);

struct CemEmbeddings {
  int k = 0;
  int d = 0;
  SampleMatrix positive;  // N x (k*d); concept i occupies columns [i*d, (i+1)*d)
  SampleMatrix negative;
  SampleMatrix mixed;
};

struct ActivationDump {
  std::vector<std::size_t> sample_ids;
  SampleMatrix activations;  // N x k: probabilities, 0/1 for hard models, logits for logit models
  std::vector<int> predicted;
  std::vector<int> labels;
  ConceptMatrix concepts;
  std::optional<CemEmbeddings> embeddings;
};

/// Forward pass on the rows of `dataset` (all rows, ids = `ids` or 0..N-1).
ActivationDump predict(const TrainedModel& model, const Dataset& dataset,
                       const std::vector<std::size_t>& ids = {});

/// Class probabilities after replacing masked concept activations by their ground-truth value.
/// `mask` is N x k with 1 where the concept is intervened on; pass an empty matrix for none.
nn::Matrix task_probabilities(const TrainedModel& model, const SampleMatrix& inputs,
                              const ConceptMatrix& concepts, const ConceptMatrix& mask);

/// Concept probabilities (pre-binarization for hard models).
nn::Matrix concept_probabilities(const TrainedModel& model, const SampleMatrix& inputs);

struct Metrics {
  double c_acc = 0.0, c_f1 = 0.0, c_auc = 0.0;
  double y_acc = 0.0, y_f1 = 0.0, y_auc = 0.0;
  bool c_auc_valid = true;
  bool y_auc_valid = true;
};

Metrics evaluate(const TrainedModel& model, const Dataset& split);
nlohmann::json to_json(const Metrics& m);

struct ReferenceHead {
  nn::MLP head;
  double y_acc = 0.0;  // on the test split
};

/// Head trained on ground-truth concepts of the train split, accuracy on the test split.
ReferenceHead train_reference_head(const std::vector<nn::LayerSpec>& head_spec, const Dataset& dataset,
                                   int epochs, int batch_size, std::uint64_t seed);

struct InterventionResult {
  std::vector<double> accuracy_curve;  // m = 0..k
  std::string policy = "random";
  std::uint64_t policy_seed = 0;
  std::optional<double> s_int;
};

/// Random per-sample order (seeded by policy_seed and sample id); accuracy after the first m
/// concepts are set to ground truth, for m = 0..k.
InterventionResult intervene(const TrainedModel& model, const Dataset& split,
                             std::uint64_t policy_seed,
                             std::optional<double> reference_accuracy = std::nullopt,
                             const std::vector<std::size_t>& ids = {});

/// Mean curve over several policy seeds.
InterventionResult intervene_mean(const TrainedModel& model, const Dataset& split,
                                  const std::vector<std::uint64_t>& policy_seeds,
                                  std::optional<double> reference_accuracy = std::nullopt,
                                  const std::vector<std::size_t>& ids = {});

nlohmann::json to_json(const InterventionResult& r);

// Checkpoints: <stem>.json header + <stem>.bin little-endian f64 parameters.
void save_checkpoint(const TrainedModel& model, const std::filesystem::path& json_path);
TrainedModel load_checkpoint(const std::filesystem::path& json_path);

// Dumps: CSV (sample_id, chat_0.., yhat, y, c_0..) and an optional .emb.bin sidecar.
void write_dump(const ActivationDump& dump, const std::filesystem::path& csv_path);
ActivationDump read_dump(const std::filesystem::path& csv_path);
std::filesystem::path embedding_sidecar_path(const std::filesystem::path& csv_path);

}  // namespace leakage
