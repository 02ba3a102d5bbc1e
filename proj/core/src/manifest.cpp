#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <openssl/evp.h>

#include "leakage/error.hpp"
#include "leakage/experiment.hpp"
#include "leakage/text_io.hpp"

namespace leakage {

namespace {

std::string sha256_bytes(const void* data, std::size_t size) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data, size, digest, &len, EVP_sha256(), nullptr) != 1) throw Error("SHA-256 failed");
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return hex.str();
}

}  // namespace

std::string sha256_file(const std::filesystem::path& path) {
  const auto bytes = read_binary(path);
  return sha256_bytes(bytes.data(), bytes.size());
}

std::string utc_timestamp() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream s;
  s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return s.str();
}

void write_manifest(const std::filesystem::path& dir, const nlohmann::json& config,
                    const std::vector<std::filesystem::path>& files, const std::string& started_at) {
  nlohmann::json artifacts = nlohmann::json::array();
  for (const auto& rel : files) {
    const auto full = dir / rel;
    if (!std::filesystem::exists(full)) throw Error("manifest: listed file is missing: " + full.string());
    artifacts.push_back({{"path", rel.generic_string()},
                         {"sha256", sha256_file(full)},
                         {"bytes", std::filesystem::file_size(full)}});
  }
  const std::string cfg = config.dump();
  const nlohmann::json m = {{"tool_version", kToolVersion},
                            {"config", config},
                            {"config_hash", sha256_bytes(cfg.data(), cfg.size())},
                            {"started_at", started_at},
                            {"finished_at", utc_timestamp()},
                            {"artifacts", artifacts}};
  write_text(dir / "manifest.json", m.dump(2) + "\n");
}

std::map<std::string, std::string> read_manifest_hashes(const std::filesystem::path& dir) {
  const auto path = dir / "manifest.json";
  if (!std::filesystem::exists(path)) throw MissingFieldError("no manifest.json in " + dir.string());
  std::map<std::string, std::string> out;
  try {
    const auto m = nlohmann::json::parse(read_text(path));
    for (const auto& a : m.at("artifacts")) out[a.at("path").get<std::string>()] = a.at("sha256").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ShapeError("manifest.json is malformed: " + std::string(e.what()));
  }
  return out;
}

std::vector<std::string> verify_manifest(const std::filesystem::path& dir) {
  const auto path = dir / "manifest.json";
  if (!std::filesystem::exists(path)) throw MissingFieldError("no manifest.json in " + dir.string());
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(read_text(path));
  } catch (const nlohmann::json::exception& e) {
    throw ShapeError("manifest.json is not valid JSON: " + std::string(e.what()));
  }
  std::vector<std::string> bad;
  for (const auto& a : m.value("artifacts", nlohmann::json::array())) {
    const auto rel = a.at("path").get<std::string>();
    const auto full = dir / rel;
    if (!std::filesystem::exists(full) || sha256_file(full) != a.at("sha256").get<std::string>()) bad.push_back(rel);
  }
  return bad;
}

}  // namespace leakage
