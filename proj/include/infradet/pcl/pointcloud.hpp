#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "infradet/core/geometry.hpp"
#include "infradet/core/kdtree.hpp"

namespace infradet {

struct PointCloud {
  std::vector<Point3> points;
  std::vector<float> intensity;            // optional, empty or per-point
  std::vector<Eigen::Vector3d> normals;    // optional; (0,0,0) marks invalid
  std::string frame;
  int64_t timestamp_ns{0};

  size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  bool has_normals() const { return normals.size() == points.size(); }
  bool has_intensity() const { return intensity.size() == points.size(); }

  bool normal_valid(size_t i) const {
    return has_normals() && normals[i].squaredNorm() > 0.5;
  }

  std::vector<Eigen::Vector3d> as_vectors() const {
    std::vector<Eigen::Vector3d> out;
    out.reserve(points.size());
    for (const auto& p : points) out.push_back(p.vec());
    return out;
  }
};

inline PointCloud transform_cloud(const PointCloud& cloud, const RigidTransform& t) {
  PointCloud out = cloud;
  for (auto& p : out.points) p = Point3::from_vec(t.apply(p.vec()));
  for (auto& n : out.normals) n = t.rotation() * n;
  out.frame = t.target_frame();
  return out;
}

/// Centroid-per-voxel downsampling. Output order follows the voxel key
/// ordering so identical inputs produce identical outputs.
inline PointCloud voxel_downsample(const PointCloud& cloud, double voxel) {
  if (voxel <= 0.0) throw std::invalid_argument("voxel_downsample: voxel must be positive");
  struct Acc {
    Eigen::Vector3d sum{Eigen::Vector3d::Zero()};
    double intensity_sum{0.0};
    int count{0};
  };
  std::map<std::tuple<int64_t, int64_t, int64_t>, Acc> cells;
  for (size_t i = 0; i < cloud.points.size(); ++i) {
    const auto& p = cloud.points[i];
    const auto key = std::make_tuple(static_cast<int64_t>(std::floor(p.x / voxel)),
                                     static_cast<int64_t>(std::floor(p.y / voxel)),
                                     static_cast<int64_t>(std::floor(p.z / voxel)));
    auto& acc = cells[key];
    acc.sum += p.vec();
    if (cloud.has_intensity()) acc.intensity_sum += cloud.intensity[i];
    ++acc.count;
  }
  PointCloud out;
  out.frame = cloud.frame;
  out.timestamp_ns = cloud.timestamp_ns;
  out.points.reserve(cells.size());
  if (cloud.has_intensity()) out.intensity.reserve(cells.size());
  for (const auto& [key, acc] : cells) {
    out.points.push_back(Point3::from_vec(acc.sum / acc.count));
    if (cloud.has_intensity()) out.intensity.push_back(static_cast<float>(acc.intensity_sum / acc.count));
  }
  return out;
}

/// PCA normals from the radius neighborhood; orientation flipped toward
/// `viewpoint`. Points with fewer than 3 neighbors get the invalid marker
/// (0,0,0) and are skipped by feature computation.
inline PointCloud estimate_normals(const PointCloud& cloud, double radius,
                                   const Eigen::Vector3d& viewpoint = Eigen::Vector3d::Zero()) {
  if (radius <= 0.0) throw std::invalid_argument("estimate_normals: radius must be positive");
  PointCloud out = cloud;
  out.normals.assign(cloud.points.size(), Eigen::Vector3d::Zero());
  const KdTree3 tree(cloud.as_vectors());
  for (size_t i = 0; i < cloud.points.size(); ++i) {
    const Eigen::Vector3d p = cloud.points[i].vec();
    const auto nbrs = tree.radius_search(p, radius);
    if (nbrs.size() < 3) continue;
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    for (int j : nbrs) mean += cloud.points[j].vec();
    mean /= static_cast<double>(nbrs.size());
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (int j : nbrs) {
      const Eigen::Vector3d d = cloud.points[j].vec() - mean;
      cov += d * d.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
    Eigen::Vector3d n = es.eigenvectors().col(0);
    if (n.squaredNorm() < 1e-12) continue;
    n.normalize();
    if (n.dot(viewpoint - p) < 0.0) n = -n;
    out.normals[i] = n;
  }
  return out;
}

// ---------------------------------------------------------------------------
// PCD I/O (x y z intensity), ASCII and binary.

inline void save_pcd(const PointCloud& cloud, const std::string& path, bool binary = false) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_pcd: cannot open " + path);
  const bool with_i = cloud.has_intensity();
  f << "# .PCD v0.7 - Point Cloud Data file format\n";
  f << "VERSION 0.7\n";
  f << "FIELDS x y z" << (with_i ? " intensity" : "") << "\n";
  f << "SIZE 4 4 4" << (with_i ? " 4" : "") << "\n";
  f << "TYPE F F F" << (with_i ? " F" : "") << "\n";
  f << "COUNT 1 1 1" << (with_i ? " 1" : "") << "\n";
  f << "WIDTH " << cloud.size() << "\n";
  f << "HEIGHT 1\n";
  f << "VIEWPOINT 0 0 0 1 0 0 0\n";
  f << "POINTS " << cloud.size() << "\n";
  f << "DATA " << (binary ? "binary" : "ascii") << "\n";
  if (binary) {
    for (size_t i = 0; i < cloud.size(); ++i) {
      float row[4] = {static_cast<float>(cloud.points[i].x), static_cast<float>(cloud.points[i].y),
                      static_cast<float>(cloud.points[i].z), with_i ? cloud.intensity[i] : 0.0f};
      f.write(reinterpret_cast<const char*>(row), with_i ? 16 : 12);
    }
  } else {
    std::ostringstream ss;
    ss.precision(9);
    for (size_t i = 0; i < cloud.size(); ++i) {
      ss << cloud.points[i].x << " " << cloud.points[i].y << " " << cloud.points[i].z;
      if (with_i) ss << " " << cloud.intensity[i];
      ss << "\n";
    }
    f << ss.str();
  }
}

inline PointCloud load_pcd(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_pcd: cannot open " + path);
  std::vector<std::string> fields;
  size_t n_points = 0;
  bool binary = false;
  std::string line;
  while (std::getline(f, line)) {
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    if (tag == "FIELDS") {
      std::string name;
      while (ss >> name) fields.push_back(name);
    } else if (tag == "POINTS") {
      ss >> n_points;
    } else if (tag == "DATA") {
      std::string mode;
      ss >> mode;
      binary = (mode == "binary");
      break;
    }
  }
  int xi = -1, yi = -1, zi = -1, ii = -1;
  for (size_t k = 0; k < fields.size(); ++k) {
    if (fields[k] == "x") xi = static_cast<int>(k);
    if (fields[k] == "y") yi = static_cast<int>(k);
    if (fields[k] == "z") zi = static_cast<int>(k);
    if (fields[k] == "intensity") ii = static_cast<int>(k);
  }
  if (xi < 0 || yi < 0 || zi < 0) throw std::runtime_error("load_pcd: missing x/y/z fields in " + path);
  PointCloud cloud;
  cloud.points.reserve(n_points);
  if (ii >= 0) cloud.intensity.reserve(n_points);
  const size_t n_fields = fields.size();
  std::vector<float> row(n_fields);
  for (size_t i = 0; i < n_points; ++i) {
    if (binary) {
      f.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(n_fields * 4));
      if (!f) throw std::runtime_error("load_pcd: truncated binary data in " + path);
    } else {
      for (size_t k = 0; k < n_fields; ++k) {
        if (!(f >> row[k])) throw std::runtime_error("load_pcd: truncated ascii data in " + path);
      }
    }
    cloud.points.emplace_back(row[xi], row[yi], row[zi]);
    if (ii >= 0) cloud.intensity.push_back(row[ii]);
  }
  return cloud;
}

}  // namespace infradet
