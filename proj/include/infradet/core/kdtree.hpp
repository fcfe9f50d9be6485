#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstddef>
#include <limits>
#include <numeric>
#include <vector>

namespace infradet {

/// 3D k-d tree over an immutable point set. Nearest-neighbor ties break
/// toward the lowest point index. Leaves hold small buckets of points, which
/// keeps the tree shallow and the hot loops cache-friendly.
class KdTree3 {
 public:
  KdTree3() = default;

  explicit KdTree3(const std::vector<Eigen::Vector3d>& points) : points_(points) {
    if (points_.empty()) return;
    order_.resize(points_.size());
    std::iota(order_.begin(), order_.end(), 0);
    nodes_.reserve(2 * points_.size() / kLeafSize + 2);
    root_ = build(0, static_cast<int>(order_.size()), 0);
  }

  size_t size() const { return points_.size(); }

  /// Index of the nearest point, or -1 on an empty tree.
  int nearest(const Eigen::Vector3d& q, double* out_dist2 = nullptr) const {
    int best = -1;
    double best_d2 = std::numeric_limits<double>::infinity();
    if (root_ >= 0) nearest_rec(root_, q, best, best_d2);
    if (out_dist2) *out_dist2 = best_d2;
    return best;
  }

  /// Index of the nearest point within `max_dist` of q, or -1 if none.
  /// Seeding the search bound with the cap prunes far subtrees immediately,
  /// which is much faster than an unbounded query when the cap is tight.
  int nearest_within(const Eigen::Vector3d& q, double max_dist, double* out_dist2 = nullptr) const {
    int best = -1;
    double best_d2 = max_dist * max_dist;
    if (root_ >= 0) nearest_rec(root_, q, best, best_d2);
    if (out_dist2) *out_dist2 = best_d2;
    return best;
  }

  /// All point indices within `radius` of q, sorted ascending.
  std::vector<int> radius_search(const Eigen::Vector3d& q, double radius) const {
    std::vector<int> out;
    if (root_ >= 0) radius_rec(root_, q, radius * radius, out);
    std::sort(out.begin(), out.end());
    return out;
  }

  /// Count of points within `radius` of q (no allocation of the index list).
  int radius_count(const Eigen::Vector3d& q, double radius) const {
    int n = 0;
    if (root_ >= 0) count_rec(root_, q, radius * radius, n);
    return n;
  }

 private:
  static constexpr int kLeafSize = 16;

  struct Node {
    double split{0.0};
    int left{-1};   // child node, or bucket begin for a leaf
    int right{-1};  // child node, or bucket end for a leaf
    int axis{-1};   // -1 marks a leaf
  };

  int build(int lo, int hi, int depth) {
    const int self = static_cast<int>(nodes_.size());
    nodes_.push_back({});
    if (hi - lo <= kLeafSize) {
      nodes_[self] = {0.0, lo, hi, -1};
      return self;
    }
    const int axis = depth % 3;
    const int mid = (lo + hi) / 2;
    std::nth_element(order_.begin() + lo, order_.begin() + mid, order_.begin() + hi,
                     [&](int a, int b) {
                       const double va = points_[a][axis], vb = points_[b][axis];
                       if (va != vb) return va < vb;
                       return a < b;
                     });
    nodes_[self].axis = axis;
    nodes_[self].split = points_[order_[mid]][axis];
    const int l = build(lo, mid, depth + 1);
    const int r = build(mid, hi, depth + 1);
    nodes_[self].left = l;
    nodes_[self].right = r;
    return self;
  }

  void scan_leaf(const Node& n, const Eigen::Vector3d& q, int& best, double& best_d2) const {
    for (int k = n.left; k < n.right; ++k) {
      const int idx = order_[k];
      const double d2 = (points_[idx] - q).squaredNorm();
      if (d2 < best_d2 || (d2 == best_d2 && idx < best)) {
        best_d2 = d2;
        best = idx;
      }
    }
  }

  void nearest_rec(int ni, const Eigen::Vector3d& q, int& best, double& best_d2) const {
    const Node& n = nodes_[ni];
    if (n.axis < 0) {
      scan_leaf(n, q, best, best_d2);
      return;
    }
    const double delta = q[n.axis] - n.split;
    const int first = delta < 0.0 ? n.left : n.right;
    const int second = delta < 0.0 ? n.right : n.left;
    nearest_rec(first, q, best, best_d2);
    if (delta * delta <= best_d2) nearest_rec(second, q, best, best_d2);
  }

  void radius_rec(int ni, const Eigen::Vector3d& q, double r2, std::vector<int>& out) const {
    const Node& n = nodes_[ni];
    if (n.axis < 0) {
      for (int k = n.left; k < n.right; ++k) {
        if ((points_[order_[k]] - q).squaredNorm() <= r2) out.push_back(order_[k]);
      }
      return;
    }
    const double delta = q[n.axis] - n.split;
    if (delta <= 0.0 || delta * delta <= r2) radius_rec(n.left, q, r2, out);
    if (delta >= 0.0 || delta * delta <= r2) radius_rec(n.right, q, r2, out);
  }

  void count_rec(int ni, const Eigen::Vector3d& q, double r2, int& n_out) const {
    const Node& n = nodes_[ni];
    if (n.axis < 0) {
      for (int k = n.left; k < n.right; ++k) {
        if ((points_[order_[k]] - q).squaredNorm() <= r2) ++n_out;
      }
      return;
    }
    const double delta = q[n.axis] - n.split;
    if (delta <= 0.0 || delta * delta <= r2) count_rec(n.left, q, r2, n_out);
    if (delta >= 0.0 || delta * delta <= r2) count_rec(n.right, q, r2, n_out);
  }

  std::vector<Eigen::Vector3d> points_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
  int root_{-1};
};

}  // namespace infradet
