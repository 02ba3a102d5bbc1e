#include <fstream>

#include "leakage/binary_io.hpp"
#include "leakage/cbm.hpp"
#include "leakage/error.hpp"
#include "leakage/text_io.hpp"

namespace leakage {

namespace {

constexpr const char* kFormat = "leakage-checkpoint/1";

std::filesystem::path weights_path(const std::filesystem::path& json_path) {
  auto p = json_path;
  p.replace_extension(".bin");
  return p;
}

nlohmann::json log_json(const ModelLog& log) {
  return {{"total", log.total}, {"concept", log.concept_loss}, {"task", log.task}, {"head", log.head}};
}

ModelLog log_from_json(const nlohmann::json& j) {
  ModelLog log;
  j.at("total").get_to(log.total);
  j.at("concept").get_to(log.concept_loss);
  j.at("task").get_to(log.task);
  j.at("head").get_to(log.head);
  return log;
}

void append_model(std::vector<char>& bytes, const nn::MLP& m) {
  for (double v : m.flatten()) append_f64_le(bytes, v);
}

void read_model(const std::vector<char>& bytes, std::size_t& pos, nn::MLP& m) {
  std::vector<double> flat(m.parameter_count());
  for (auto& v : flat) v = read_f64_le(bytes, pos);
  m.unflatten(flat);
}

}  // namespace

void save_checkpoint(const TrainedModel& model, const std::filesystem::path& json_path) {
  nlohmann::json j;
  j["format"] = kFormat;
  j["kind"] = to_string(model.kind);
  j["config"] = model.kind == ModelKind::kCem ? to_json(model.cem) : to_json(model.cbm);
  j["num_concepts"] = model.num_concepts;
  j["num_classes"] = model.num_classes;
  j["logit_intervention"] = model.logit_intervention;
  j["encoder"] = model.encoder.architecture();
  j["head"] = model.head.architecture();
  j["scorers"] = nlohmann::json::array();
  for (const auto& s : model.scorers) j["scorers"].push_back(s.architecture());
  j["log"] = log_json(model.log);
  j["weights"] = weights_path(json_path).filename().string();

  std::vector<char> bytes;
  append_model(bytes, model.encoder);
  append_model(bytes, model.head);
  for (const auto& s : model.scorers) append_model(bytes, s);
  j["weights_bytes"] = bytes.size();

  write_binary(weights_path(json_path), bytes);
  write_text(json_path, j.dump(2) + "\n");
}

TrainedModel load_checkpoint(const std::filesystem::path& json_path) {
  if (!std::filesystem::exists(json_path)) throw MissingFieldError("checkpoint not found: " + json_path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text(json_path));
  } catch (const nlohmann::json::exception& e) {
    throw ShapeError("checkpoint " + json_path.string() + " is not valid JSON: " + e.what());
  }
  if (j.value("format", "") != kFormat) throw ShapeError("unsupported checkpoint format in " + json_path.string());

  TrainedModel model;
  try {
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "cem") {
      model.kind = ModelKind::kCem;
      model.cem = cem_config_from_json(j.at("config"));
    } else if (kind == "cbm") {
      model.kind = ModelKind::kCbm;
      model.cbm = cbm_config_from_json(j.at("config"));
    } else {
      throw ShapeError("unknown model kind '" + kind + "'");
    }
    model.num_concepts = j.at("num_concepts").get<int>();
    model.num_classes = j.at("num_classes").get<int>();
    model.logit_intervention = j.at("logit_intervention").get<double>();
    model.encoder = nn::MLP::from_architecture(j.at("encoder"));
    model.head = nn::MLP::from_architecture(j.at("head"));
    for (const auto& s : j.at("scorers")) model.scorers.push_back(nn::MLP::from_architecture(s));
    model.log = log_from_json(j.at("log"));
  } catch (const nlohmann::json::exception& e) {
    throw MissingFieldError("checkpoint " + json_path.string() + ": " + e.what());
  }

  const auto bytes = read_binary(json_path.parent_path() / j.at("weights").get<std::string>());
  std::size_t pos = 0;
  read_model(bytes, pos, model.encoder);
  read_model(bytes, pos, model.head);
  for (auto& s : model.scorers) read_model(bytes, pos, s);
  if (pos != bytes.size()) throw ShapeError("checkpoint weights file has trailing bytes");
  return model;
}

}  // namespace leakage
