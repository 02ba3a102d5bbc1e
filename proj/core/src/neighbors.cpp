#include "leakage/neighbors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <thread>

#include "leakage/error.hpp"

namespace leakage::neighbors {

namespace {

using Candidate = std::pair<double, std::size_t>;

template <typename Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
  if (threads == 0) threads = std::max(1U, std::thread::hardware_concurrency());
  const std::size_t workers = std::min<std::size_t>(threads, std::max<std::size_t>(1, n / 256));
  if (workers <= 1) {
    fn(std::size_t{0}, n);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&fn, begin, end] { fn(begin, end); });
  }
  for (auto& t : pool) t.join();
}

// Bounded sorted list of the k best (distance, index) candidates.
class TopK {
 public:
  explicit TopK(int k) : k_(static_cast<std::size_t>(k)) { items_.reserve(k_ + 1); }

  [[nodiscard]] double bound() const noexcept {
    return items_.size() < k_ ? std::numeric_limits<double>::infinity() : items_.back().first;
  }

  // Lexicographic acceptance on (distance, index).
  void offer(double d, std::size_t j) {
    if (items_.size() == k_) {
      const auto& worst = items_.back();
      if (d > worst.first || (d == worst.first && j > worst.second)) return;
    }
    const Candidate c{d, j};
    items_.insert(std::upper_bound(items_.begin(), items_.end(), c), c);
    if (items_.size() > k_) items_.pop_back();
  }

  [[nodiscard]] const std::vector<Candidate>& items() const noexcept { return items_; }

 private:
  std::size_t k_;
  std::vector<Candidate> items_;
};

// Distance with early exit once `cutoff` is exceeded; returns a value > cutoff in that case.
inline double chebyshev_cutoff(const double* a, const double* b, std::size_t dim,
                               double cutoff) noexcept {
  double m = 0.0;
  for (std::size_t c = 0; c < dim; ++c) {
    const double diff = std::fabs(a[c] - b[c]);
    if (diff > m) {
      m = diff;
      if (m > cutoff) return m;
    }
  }
  return m;
}

void check_k(const PointCloud& points, int k) {
  if (k < 1) throw ConfigError("k_neighbors must be positive");
  if (points.n <= static_cast<std::size_t>(k)) {
    throw InsufficientSamplesError("need more than k=" + std::to_string(k) +
                                   " samples, got " + std::to_string(points.n));
  }
}

std::vector<Candidate> brute_knn(const PointCloud& points, std::size_t i, int k) {
  TopK top(k);
  const double* qi = points.row(i);
  for (std::size_t j = 0; j < points.n; ++j) {
    if (j == i) continue;
    const double bound = top.bound();
    const double d = chebyshev_cutoff(qi, points.row(j), points.dim, bound);
    if (d <= bound) top.offer(d, j);
  }
  return top.items();
}

std::size_t brute_count(const PointCloud& points, std::size_t i, double radius) {
  const double* qi = points.row(i);
  std::size_t count = 0;
  for (std::size_t j = 0; j < points.n; ++j) {
    if (j == i) continue;
    const double* qj = points.row(j);
    bool inside = true;
    for (std::size_t c = 0; c < points.dim; ++c) {
      if (!(std::fabs(qi[c] - qj[c]) < radius)) {
        inside = false;
        break;
      }
    }
    count += inside ? 1 : 0;
  }
  return count;
}

// Sorted view of a one-dimensional cloud.
struct Sorted1D {
  std::vector<double> values;         // ascending
  std::vector<std::size_t> order;     // order[p] = original index at sorted position p
  std::vector<std::size_t> position;  // inverse of order

  explicit Sorted1D(const PointCloud& points) {
    if (points.dim != 1) throw ShapeError("sorted search requires a one-dimensional cloud");
    order.resize(points.n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      const double va = points.data[a];
      const double vb = points.data[b];
      return va < vb || (va == vb && a < b);
    });
    values.resize(points.n);
    position.resize(points.n);
    for (std::size_t p = 0; p < points.n; ++p) {
      values[p] = points.data[order[p]];
      position[order[p]] = p;
    }
  }

  std::vector<Candidate> knn(std::size_t i, int k) const {
    const std::size_t p = position[i];
    const double x = values[p];
    std::ptrdiff_t left = static_cast<std::ptrdiff_t>(p) - 1;
    std::size_t right = p + 1;
    std::vector<Candidate> out;
    out.reserve(static_cast<std::size_t>(k));
    while (out.size() < static_cast<std::size_t>(k)) {
      const bool has_left = left >= 0;
      const bool has_right = right < values.size();
      Candidate lc{std::numeric_limits<double>::infinity(), 0};
      Candidate rc{std::numeric_limits<double>::infinity(), 0};
      if (has_left) lc = {std::fabs(values[static_cast<std::size_t>(left)] - x), order[static_cast<std::size_t>(left)]};
      if (has_right) rc = {std::fabs(values[right] - x), order[right]};
      if (has_left && (!has_right || lc < rc)) {
        out.push_back(lc);
        --left;
      } else {
        out.push_back(rc);
        ++right;
      }
    }
    // Equal values can sit on both sides in any index order; restore lexicographic order.
    std::sort(out.begin(), out.end());
    return out;
  }

  std::size_t count(std::size_t i, double radius) const {
    const std::size_t p = position[i];
    const double x = values[p];
    // right side: first position q > p with values[q] - x >= radius
    auto right_end = std::partition_point(values.begin() + static_cast<std::ptrdiff_t>(p) + 1,
                                          values.end(),
                                          [&](double v) { return std::fabs(v - x) < radius; });
    // left side: first position q < p with |values[q] - x| < radius
    auto left_begin = std::partition_point(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(p),
                                           [&](double v) { return !(std::fabs(v - x) < radius); });
    const auto right = static_cast<std::size_t>(right_end - (values.begin() + static_cast<std::ptrdiff_t>(p) + 1));
    const auto left = static_cast<std::size_t>((values.begin() + static_cast<std::ptrdiff_t>(p)) - left_begin);
    return left + right;
  }
};

SearchMethod resolve(const PointCloud& points, SearchMethod method) {
  if (method != SearchMethod::kAuto) return method;
  if (points.dim == 1) return SearchMethod::kSorted1D;
  return points.n <= kBruteForceLimit ? SearchMethod::kBruteForce : SearchMethod::kKdTree;
}

}  // namespace

PointCloud::PointCloud(std::span<const double> values, std::size_t rows, std::size_t cols)
    : data(values), n(rows), dim(cols) {
  if (values.size() != rows * cols) throw ShapeError("point cloud buffer size does not match n*dim");
  if (cols == 0) throw ShapeError("point cloud dimension must be positive");
}

double chebyshev(const double* a, const double* b, std::size_t dim) noexcept {
  double m = 0.0;
  for (std::size_t c = 0; c < dim; ++c) m = std::max(m, std::fabs(a[c] - b[c]));
  return m;
}

// ---------------------------------------------------------------------------
// k-d tree

struct KdTree::Impl {
  struct Node {
    std::size_t begin = 0;
    std::size_t end = 0;
    std::size_t split_dim = 0;
    double split_value = 0.0;
    int left = -1;
    int right = -1;
  };

  const PointCloud* cloud = nullptr;
  std::size_t leaf_size = 16;
  std::vector<std::size_t> index;
  std::vector<Node> nodes;

  int build(std::size_t begin, std::size_t end) {
    Node node;
    node.begin = begin;
    node.end = end;
    const int id = static_cast<int>(nodes.size());
    nodes.push_back(node);
    if (end - begin <= leaf_size) return id;

    std::size_t best_dim = 0;
    double best_spread = -1.0;
    for (std::size_t c = 0; c < cloud->dim; ++c) {
      double lo = std::numeric_limits<double>::infinity();
      double hi = -lo;
      for (std::size_t p = begin; p < end; ++p) {
        const double v = cloud->row(index[p])[c];
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      if (hi - lo > best_spread) {
        best_spread = hi - lo;
        best_dim = c;
      }
    }
    if (best_spread <= 0.0) return id;  // all points identical: keep as leaf

    const std::size_t mid = begin + (end - begin) / 2;
    auto key = [&](std::size_t a, std::size_t b) {
      const double va = cloud->row(a)[best_dim];
      const double vb = cloud->row(b)[best_dim];
      return va < vb || (va == vb && a < b);
    };
    std::nth_element(index.begin() + static_cast<std::ptrdiff_t>(begin),
                     index.begin() + static_cast<std::ptrdiff_t>(mid),
                     index.begin() + static_cast<std::ptrdiff_t>(end), key);
    const double split = cloud->row(index[mid])[best_dim];
    const int left = build(begin, mid);
    const int right = build(mid, end);
    nodes[static_cast<std::size_t>(id)].split_dim = best_dim;
    nodes[static_cast<std::size_t>(id)].split_value = split;
    nodes[static_cast<std::size_t>(id)].left = left;
    nodes[static_cast<std::size_t>(id)].right = right;
    return id;
  }

  // Points in the left child have coordinate <= split, right child >= split.
  void knn(int node_id, const double* q, std::size_t self, double lower, TopK& top) const {
    const Node& node = nodes[static_cast<std::size_t>(node_id)];
    if (lower > top.bound()) return;
    if (node.left < 0) {
      for (std::size_t p = node.begin; p < node.end; ++p) {
        const std::size_t j = index[p];
        if (j == self) continue;
        const double bound = top.bound();
        const double d = chebyshev_cutoff(q, cloud->row(j), cloud->dim, bound);
        if (d <= bound) top.offer(d, j);
      }
      return;
    }
    const double diff = q[node.split_dim] - node.split_value;
    const int near = diff <= 0.0 ? node.left : node.right;
    const int far = diff <= 0.0 ? node.right : node.left;
    knn(near, q, self, lower, top);
    knn(far, q, self, std::max(lower, std::fabs(diff)), top);
  }

  std::size_t count(int node_id, const double* q, std::size_t self, double radius,
                    double lower) const {
    if (!(lower < radius)) return 0;
    const Node& node = nodes[static_cast<std::size_t>(node_id)];
    if (node.left < 0) {
      std::size_t total = 0;
      for (std::size_t p = node.begin; p < node.end; ++p) {
        const std::size_t j = index[p];
        if (j == self) continue;
        const double* qj = cloud->row(j);
        bool inside = true;
        for (std::size_t c = 0; c < cloud->dim; ++c) {
          if (!(std::fabs(q[c] - qj[c]) < radius)) {
            inside = false;
            break;
          }
        }
        total += inside ? 1 : 0;
      }
      return total;
    }
    const double diff = q[node.split_dim] - node.split_value;
    const int near = diff <= 0.0 ? node.left : node.right;
    const int far = diff <= 0.0 ? node.right : node.left;
    return count(near, q, self, radius, lower) +
           count(far, q, self, radius, std::max(lower, std::fabs(diff)));
  }
};

KdTree::KdTree(const PointCloud& points, std::size_t leaf_size) : impl_(std::make_unique<Impl>()) {
  impl_->cloud = &points;
  impl_->leaf_size = std::max<std::size_t>(1, leaf_size);
  impl_->index.resize(points.n);
  std::iota(impl_->index.begin(), impl_->index.end(), std::size_t{0});
  if (points.n > 0) impl_->build(0, points.n);
}

KdTree::~KdTree() = default;
KdTree::KdTree(KdTree&&) noexcept = default;
KdTree& KdTree::operator=(KdTree&&) noexcept = default;

std::vector<std::pair<double, std::size_t>> KdTree::k_nearest(std::size_t query_index, int k) const {
  TopK top(k);
  impl_->knn(0, impl_->cloud->row(query_index), query_index, 0.0, top);
  return top.items();
}

std::size_t KdTree::count_within(std::size_t query_index, double radius) const {
  return impl_->count(0, impl_->cloud->row(query_index), query_index, radius, 0.0);
}

// ---------------------------------------------------------------------------

std::vector<double> kth_neighbor_distances(const PointCloud& points, int k, SearchMethod method,
                                           unsigned threads) {
  check_k(points, k);
  std::vector<double> out(points.n);
  const auto kk = static_cast<std::size_t>(k);
  switch (resolve(points, method)) {
    case SearchMethod::kSorted1D: {
      const Sorted1D sorted(points);
      parallel_for(points.n, threads, [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) out[i] = sorted.knn(i, k)[kk - 1].first;
      });
      break;
    }
    case SearchMethod::kKdTree: {
      const KdTree tree(points);
      parallel_for(points.n, threads, [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) out[i] = tree.k_nearest(i, k)[kk - 1].first;
      });
      break;
    }
    case SearchMethod::kBruteForce:
    case SearchMethod::kAuto:
      parallel_for(points.n, threads, [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) out[i] = brute_knn(points, i, k)[kk - 1].first;
      });
      break;
  }
  return out;
}

std::vector<std::size_t> count_strictly_within(const PointCloud& points,
                                               std::span<const double> radii,
                                               SearchMethod method, unsigned threads) {
  if (radii.size() != points.n) throw ShapeError("one radius per point required");
  std::vector<std::size_t> out(points.n);
  switch (resolve(points, method)) {
    case SearchMethod::kSorted1D: {
      const Sorted1D sorted(points);
      parallel_for(points.n, threads, [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) out[i] = sorted.count(i, radii[i]);
      });
      break;
    }
    case SearchMethod::kKdTree: {
      const KdTree tree(points);
      parallel_for(points.n, threads, [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) out[i] = tree.count_within(i, radii[i]);
      });
      break;
    }
    case SearchMethod::kBruteForce:
    case SearchMethod::kAuto:
      parallel_for(points.n, threads, [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) out[i] = brute_count(points, i, radii[i]);
      });
      break;
  }
  return out;
}

std::vector<std::vector<std::size_t>> k_nearest_indices(const PointCloud& points, int k,
                                                        SearchMethod method) {
  check_k(points, k);
  std::vector<std::vector<std::size_t>> out(points.n);
  auto strip = [](const std::vector<Candidate>& c) {
    std::vector<std::size_t> idx;
    idx.reserve(c.size());
    for (const auto& [d, j] : c) idx.push_back(j);
    return idx;
  };
  switch (resolve(points, method)) {
    case SearchMethod::kSorted1D: {
      const Sorted1D sorted(points);
      for (std::size_t i = 0; i < points.n; ++i) out[i] = strip(sorted.knn(i, k));
      break;
    }
    case SearchMethod::kKdTree: {
      const KdTree tree(points);
      for (std::size_t i = 0; i < points.n; ++i) out[i] = strip(tree.k_nearest(i, k));
      break;
    }
    case SearchMethod::kBruteForce:
    case SearchMethod::kAuto:
      for (std::size_t i = 0; i < points.n; ++i) out[i] = strip(brute_knn(points, i, k));
      break;
  }
  return out;
}

}  // namespace leakage::neighbors
