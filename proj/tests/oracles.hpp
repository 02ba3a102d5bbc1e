#pragma once

// Reference computations used as test oracles. Written directly from the textbook
// definitions, independent of the library code they check.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace oracle {

// Plug-in mutual information in nats from two aligned discrete samples.
inline double plugin_mi(const std::vector<int>& x, const std::vector<int>& y) {
  std::map<std::pair<int, int>, double> joint;
  std::map<int, double> px, py;
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    joint[{x[i], y[i]}] += 1.0 / n;
    px[x[i]] += 1.0 / n;
    py[y[i]] += 1.0 / n;
  }
  double mi = 0.0;
  for (const auto& [xy, p] : joint) mi += p * std::log(p / (px[xy.first] * py[xy.second]));
  return mi;
}

inline double plugin_entropy(const std::vector<int>& x) {
  std::map<int, double> px;
  for (int v : x) px[v] += 1.0 / static_cast<double>(x.size());
  double h = 0.0;
  for (const auto& [v, p] : px) h -= p * std::log(p);
  return h;
}

// Brute-force AUC over every (positive, negative) pair.
inline double pairwise_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[i] == 1 && y[j] == 0) {
        pairs += 1.0;
        wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
      }
    }
  }
  return wins / pairs;
}

inline double gaussian_mi(double rho) { return -0.5 * std::log(1.0 - rho * rho); }
inline double gaussian_entropy(int d) { return 0.5 * d * (1.0 + std::log(2.0 * M_PI)); }

// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("leakage_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace oracle
