#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

namespace leakage::neighbors {

/// Non-owning view of N points of dimension `dim`, stored row-major.
struct PointCloud {
  std::span<const double> data;
  std::size_t n = 0;
  std::size_t dim = 0;

  PointCloud() = default;
  PointCloud(std::span<const double> values, std::size_t rows, std::size_t cols);

  [[nodiscard]] const double* row(std::size_t i) const noexcept { return data.data() + i * dim; }
};

enum class SearchMethod {
  kAuto,        // sorted scan for dim == 1, brute force up to kBruteForceLimit, k-d tree above
  kBruteForce,  // exact O(N^2) scan
  kKdTree,      // exact k-d tree search
  kSorted1D,    // exact scan over a sorted copy; dim must be 1
};

inline constexpr std::size_t kBruteForceLimit = 20000;

/// Chebyshev distance between two points of the same dimension.
double chebyshev(const double* a, const double* b, std::size_t dim) noexcept;

/// Distance from each point to its k-th nearest other point (max-norm).
std::vector<double> kth_neighbor_distances(const PointCloud& points, int k,
                                           SearchMethod method = SearchMethod::kAuto,
                                           unsigned threads = 0);

/// For every point i, the number of points j != i with chebyshev(i, j) < radii[i].
std::vector<std::size_t> count_strictly_within(const PointCloud& points,
                                               std::span<const double> radii,
                                               SearchMethod method = SearchMethod::kAuto,
                                               unsigned threads = 0);

/// Indices of the k nearest other points of every point, closest first.
/// Ties are broken by index; identities agree across methods whenever distances are distinct.
std::vector<std::vector<std::size_t>> k_nearest_indices(const PointCloud& points, int k,
                                                        SearchMethod method);

/// Static k-d tree over a PointCloud (the cloud must outlive the tree).
class KdTree {
 public:
  explicit KdTree(const PointCloud& points, std::size_t leaf_size = 16);
  ~KdTree();
  KdTree(const KdTree&) = delete;
  KdTree& operator=(const KdTree&) = delete;
  KdTree(KdTree&&) noexcept;
  KdTree& operator=(KdTree&&) noexcept;

  /// k nearest neighbours of point `query_index`, excluding itself, as (distance, index) pairs.
  [[nodiscard]] std::vector<std::pair<double, std::size_t>> k_nearest(std::size_t query_index,
                                                                      int k) const;

  /// Number of points j != query_index with chebyshev < radius.
  [[nodiscard]] std::size_t count_within(std::size_t query_index, double radius) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace leakage::neighbors
