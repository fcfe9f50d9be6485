#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "infradet/pcl/pointcloud.hpp"

namespace infradet {

inline constexpr int kFpfhBins = 11;
inline constexpr int kFpfhDim = 3 * kFpfhBins;  // 33

struct FeatureCloud {
  PointCloud keypoints;
  std::vector<std::array<double, kFpfhDim>> descriptors;
  std::vector<bool> valid;  // false for points with too-small neighborhoods

  size_t size() const { return keypoints.size(); }
};

namespace detail {

inline int fpfh_bin(float value, float lo, float hi) {
  const int b = static_cast<int>(std::floor(kFpfhBins * (value - lo) / (hi - lo)));
  return std::clamp(b, 0, kFpfhBins - 1);
}

/// Simplified point feature histogram of one point over its neighborhood.
/// Runs in float: the 11-bin histograms are far coarser than single
/// precision, and this loop dominates feature extraction time.
inline std::array<double, kFpfhDim> spfh(const std::vector<Eigen::Vector3f>& pts,
                                         const std::vector<Eigen::Vector3f>& nrm,
                                         const std::vector<char>& nrm_ok, int i,
                                         const std::vector<int>& nbrs) {
  std::array<double, kFpfhDim> h{};
  const Eigen::Vector3f& p = pts[i];
  const Eigen::Vector3f& np = nrm[i];
  int n_used = 0;
  for (int j : nbrs) {
    if (j == i || !nrm_ok[j]) continue;
    Eigen::Vector3f d = pts[j] - p;
    const float dist = d.norm();
    if (dist < 1e-9f) continue;
    d /= dist;
    // Darboux frame at the source point
    const Eigen::Vector3f& u = np;
    Eigen::Vector3f v = d.cross(u);
    const float vn = v.norm();
    if (vn < 1e-9f) continue;
    v /= vn;
    const Eigen::Vector3f w = u.cross(v);
    const Eigen::Vector3f& nq = nrm[j];
    const float f1 = v.dot(nq);
    const float f2 = u.dot(d);
    const float f3 = std::atan2(w.dot(nq), u.dot(nq));
    h[fpfh_bin(f1, -1.0f, 1.0f)] += 1.0;
    h[kFpfhBins + fpfh_bin(f2, -1.0f, 1.0f)] += 1.0;
    h[2 * kFpfhBins + fpfh_bin(f3, -static_cast<float>(kPi), static_cast<float>(kPi))] += 1.0;
    ++n_used;
  }
  if (n_used > 0) {
    for (double& x : h) x *= 100.0 / n_used;
  }
  return h;
}

}  // namespace detail

/// 33-dimensional FPFH descriptor per point: own SPFH plus the
/// distance-weighted mean of the neighbors' SPFHs. With `descriptor_stride`
/// > 1, final descriptors are produced for every stride-th keypoint only
/// (the others stay invalid); their neighborhoods still draw on the SPFHs of
/// every point, so each emitted descriptor is unchanged — there are simply
/// fewer of them to match.
inline FeatureCloud compute_fpfh(const PointCloud& cloud, double radius,
                                 int descriptor_stride = 1) {
  if (!cloud.has_normals()) throw std::invalid_argument("compute_fpfh: cloud has no normals");
  if (radius <= 0.0) throw std::invalid_argument("compute_fpfh: radius must be positive");
  if (descriptor_stride < 1) {
    throw std::invalid_argument("compute_fpfh: descriptor_stride must be >= 1");
  }
  const size_t n = cloud.size();
  FeatureCloud out;
  out.keypoints = cloud;
  out.descriptors.assign(n, {});
  out.valid.assign(n, false);

  std::vector<Eigen::Vector3f> pts(n), nrm(n);
  std::vector<char> nrm_ok(n, 0);
  std::vector<Eigen::Vector3d> ptsd(n);
  for (size_t i = 0; i < n; ++i) {
    ptsd[i] = cloud.points[i].vec();
    pts[i] = ptsd[i].cast<float>();
    nrm_ok[i] = cloud.normal_valid(i) ? 1 : 0;
    if (nrm_ok[i]) nrm[i] = cloud.normals[i].cast<float>();
  }

  const KdTree3 tree(ptsd);
  std::vector<std::vector<int>> neighborhoods(n);
  std::vector<std::array<double, kFpfhDim>> spfhs(n);
  for (size_t i = 0; i < n; ++i) {
    if (!nrm_ok[i]) continue;
    neighborhoods[i] = tree.radius_search(ptsd[i], radius);
    spfhs[i] = detail::spfh(pts, nrm, nrm_ok, static_cast<int>(i), neighborhoods[i]);
  }
  for (size_t i = 0; i < n; i += static_cast<size_t>(descriptor_stride)) {
    if (!nrm_ok[i]) continue;
    auto& d = out.descriptors[i];
    d = spfhs[i];
    double weight_count = 0.0;
    std::array<double, kFpfhDim> acc{};
    for (int j : neighborhoods[i]) {
      if (j == static_cast<int>(i) || !nrm_ok[j]) continue;
      const float dist = (pts[j] - pts[i]).norm();
      if (dist < 1e-9f) continue;
      const double w = 1.0 / dist;
      const auto& sj = spfhs[j];
      for (int k = 0; k < kFpfhDim; ++k) acc[k] += w * sj[k];
      weight_count += 1.0;
    }
    if (weight_count > 0.0) {
      for (int k = 0; k < kFpfhDim; ++k) d[k] += acc[k] / weight_count;
      out.valid[i] = true;
    }
  }
  return out;
}

}  // namespace infradet
