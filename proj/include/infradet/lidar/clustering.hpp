#pragma once

#include <unordered_map>
#include <vector>

#include "infradet/pcl/pointcloud.hpp"

namespace infradet {

struct OutlierParams {
  int min_neighbors{15};
  double radius{0.8};

  void validate() const {
    if (min_neighbors < 1 || radius <= 0.0) {
      throw std::invalid_argument("OutlierParams: min_neighbors >= 1 and radius > 0 required");
    }
  }
};

struct ClusterParams {
  double eps{0.8};
  int min_points{3};

  void validate() const {
    if (eps <= 0.0 || min_points < 1) {
      throw std::invalid_argument("ClusterParams: eps > 0 and min_points >= 1 required");
    }
  }
};

namespace detail {

/// Hash grid with cell size equal to the query radius: every inclusive-radius
/// neighborhood is covered by the 27 surrounding cells. Faster than a k-d
/// tree for the fixed-radius queries clustering needs.
class RadiusGrid {
 public:
  RadiusGrid(const std::vector<Eigen::Vector3d>& pts, double cell) : cell_(cell) {
    if (cell_ <= 0.0) throw std::invalid_argument("RadiusGrid: cell must be positive");
    const size_t n = pts.size();
    std::vector<int> cell_of(n);
    std::vector<int> counts;
    cells_.reserve(n);
    for (size_t i = 0; i < n; ++i) {
      const int64_t k = key(cx(pts[i].x()), cx(pts[i].y()), cx(pts[i].z()));
      const auto [it, inserted] = cells_.try_emplace(k, static_cast<int>(counts.size()));
      if (inserted) counts.push_back(0);
      cell_of[i] = it->second;
      ++counts[static_cast<size_t>(it->second)];
    }
    // CSR layout: per-cell contiguous ranges of (point, index), index-ordered
    // within each cell so scans stay cache-friendly and deterministic.
    starts_.assign(counts.size() + 1, 0);
    for (size_t c = 0; c < counts.size(); ++c) starts_[c + 1] = starts_[c] + counts[c];
    pts_.resize(n);
    order_.resize(n);
    std::vector<int> cursor(starts_.begin(), starts_.end() - 1);
    for (size_t i = 0; i < n; ++i) {
      const int slot = cursor[static_cast<size_t>(cell_of[i])]++;
      pts_[static_cast<size_t>(slot)] = pts[i];
      order_[static_cast<size_t>(slot)] = static_cast<int>(i);
    }
  }

  int count_within(const Eigen::Vector3d& q, double r) const {
    int n = 0;
    visit(q, r * r, [&](int) { ++n; });
    return n;
  }

  /// Indices with |p - q| <= r, ascending.
  std::vector<int> radius_search(const Eigen::Vector3d& q, double r) const {
    std::vector<int> out;
    radius_search(q, r, out);
    return out;
  }

  void radius_search(const Eigen::Vector3d& q, double r, std::vector<int>& out) const {
    radius_search_unsorted(q, r, out);
    std::sort(out.begin(), out.end());
  }

  /// Cell-major order; cheaper when the caller treats the result as a set.
  void radius_search_unsorted(const Eigen::Vector3d& q, double r, std::vector<int>& out) const {
    out.clear();
    visit(q, r * r, [&](int i) { out.push_back(i); });
  }

 private:
  int64_t cx(double v) const { return static_cast<int64_t>(std::floor(v / cell_)); }
  static int64_t key(int64_t x, int64_t y, int64_t z) {
    // 21 bits per axis; scenes are far smaller than the 2^20-cell range
    return ((x & 0x1fffff) << 42) | ((y & 0x1fffff) << 21) | (z & 0x1fffff);
  }

  template <typename Fn>
  void visit(const Eigen::Vector3d& q, double r2, Fn&& fn) const {
    const int64_t ix = cx(q.x()), iy = cx(q.y()), iz = cx(q.z());
    for (int64_t dx = -1; dx <= 1; ++dx) {
      for (int64_t dy = -1; dy <= 1; ++dy) {
        for (int64_t dz = -1; dz <= 1; ++dz) {
          const auto it = cells_.find(key(ix + dx, iy + dy, iz + dz));
          if (it == cells_.end()) continue;
          const int lo = starts_[static_cast<size_t>(it->second)];
          const int hi = starts_[static_cast<size_t>(it->second) + 1];
          for (int s = lo; s < hi; ++s) {
            if ((pts_[static_cast<size_t>(s)] - q).squaredNorm() <= r2) fn(order_[static_cast<size_t>(s)]);
          }
        }
      }
    }
  }

  std::vector<Eigen::Vector3d> pts_;  // cell-major copy of the input points
  std::vector<int> order_;            // original index per slot
  std::vector<int> starts_;           // cell -> [start, end) slot range
  double cell_;
  std::unordered_map<int64_t, int> cells_;  // cell key -> cell id
};

}  // namespace detail

/// Keep points that have at least min_neighbors *other* points within radius.
inline PointCloud remove_radius_outliers(const PointCloud& cloud, const OutlierParams& params) {
  params.validate();
  PointCloud out;
  out.frame = cloud.frame;
  out.timestamp_ns = cloud.timestamp_ns;
  const detail::RadiusGrid grid(cloud.as_vectors(), params.radius);
  for (size_t i = 0; i < cloud.size(); ++i) {
    // count includes the query point itself
    if (grid.count_within(cloud.points[i].vec(), params.radius) - 1 >= params.min_neighbors) {
      out.points.push_back(cloud.points[i]);
      if (cloud.has_intensity()) out.intensity.push_back(cloud.intensity[i]);
    }
  }
  return out;
}

struct ClusterResult {
  std::vector<std::vector<int>> clusters;  // point indices per cluster
  std::vector<int> noise;                  // unassigned point indices
  std::vector<int> labels;                 // per point: cluster index or -1
};

/// Standard DBSCAN: core points have >= min_points neighbors (self included)
/// within eps; clusters grow by density reachability.
inline ClusterResult cluster_dbscan(const PointCloud& cloud, const ClusterParams& params) {
  params.validate();
  const size_t n = cloud.size();
  ClusterResult res;
  res.labels.assign(n, -2);  // -2 unvisited, -1 noise
  const detail::RadiusGrid grid(cloud.as_vectors(), params.eps);

  // Neighbor traversal order cannot change the result: a cluster claims the
  // full density-reachable set of its seed in one expansion, so membership
  // depends only on the ascending seed order of the outer loop. Unsorted
  // queries are therefore safe (and cheaper).
  std::vector<int> nbrs, frontier;
  for (size_t i = 0; i < n; ++i) {
    if (res.labels[i] != -2) continue;
    grid.radius_search_unsorted(cloud.points[i].vec(), params.eps, nbrs);
    if (static_cast<int>(nbrs.size()) < params.min_points) {
      res.labels[i] = -1;
      continue;
    }
    const int cluster = static_cast<int>(res.clusters.size());
    res.clusters.emplace_back();
    res.labels[i] = cluster;
    res.clusters.back().push_back(static_cast<int>(i));
    frontier.assign(nbrs.begin(), nbrs.end());
    for (size_t k = 0; k < frontier.size(); ++k) {
      const int j = frontier[k];
      if (res.labels[j] == -1) {  // border point previously marked noise
        res.labels[j] = cluster;
        res.clusters.back().push_back(j);
      }
      if (res.labels[j] != -2) continue;
      res.labels[j] = cluster;
      res.clusters.back().push_back(j);
      grid.radius_search_unsorted(cloud.points[j].vec(), params.eps, nbrs);
      if (static_cast<int>(nbrs.size()) >= params.min_points) {
        frontier.insert(frontier.end(), nbrs.begin(), nbrs.end());
      }
    }
  }
  for (size_t i = 0; i < n; ++i) {
    if (res.labels[i] == -1) res.noise.push_back(static_cast<int>(i));
  }
  for (auto& c : res.clusters) std::sort(c.begin(), c.end());
  return res;
}

}  // namespace infradet
