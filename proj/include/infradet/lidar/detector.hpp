#pragma once

#include <fstream>
#include <optional>
#include <random>
#include <vector>

#include <json.hpp>

#include "infradet/core/geometry.hpp"
#include "infradet/lidar/clustering.hpp"
#include "infradet/pcl/pointcloud.hpp"

namespace infradet {

struct GroundParams {
  Eigen::Vector4d plane{0.0, 0.0, 1.0, 0.0};  // (a,b,c,d), unit normal
  double distance_threshold{0.2};

  void validate() const {
    if (std::abs(plane.head<3>().norm() - 1.0) > 1e-9) {
      throw std::invalid_argument("GroundParams: plane normal must be unit length");
    }
    if (distance_threshold <= 0.0) {
      throw std::invalid_argument("GroundParams: threshold must be positive");
    }
  }
};

struct RoiRegion {
  std::vector<Eigen::Vector2d> polygon;  // convex, ground plane
  double z_min{-10.0};
  double z_max{10.0};
};

/// Two-resolution polar background range image. A foreground point must be
/// closer than the stored background range by more than `margin` in both the
/// coarse and the fine cell. Unobserved cells count as infinite range.
class BackgroundModel {
 public:
  BackgroundModel() = default;
  BackgroundModel(double coarse_res, double fine_res, double margin,
                  Eigen::Vector3d sensor_origin = Eigen::Vector3d::Zero())
      : coarse_res_(coarse_res), fine_res_(fine_res), margin_(margin), origin_(sensor_origin) {
    if (fine_res_ >= coarse_res_) {
      throw std::invalid_argument("BackgroundModel: fine resolution must be finer than coarse");
    }
    if (coarse_res_ <= 0.0 || fine_res_ <= 0.0 || margin_ <= 0.0) {
      throw std::invalid_argument("BackgroundModel: resolutions and margin must be positive");
    }
  }

  double margin() const { return margin_; }
  const Eigen::Vector3d& sensor_origin() const { return origin_; }

  void observe(const PointCloud& empty_scan) {
    for (const auto& p : empty_scan.points) {
      const Eigen::Vector3d d = p.vec() - origin_;
      const double range = d.norm();
      if (range < 1e-9) continue;
      update_max(coarse_, cell_key(d, coarse_res_), range);
      update_max(fine_, cell_key(d, fine_res_), range);
    }
  }

  bool is_foreground(const Point3& p) const {
    const Eigen::Vector3d d = p.vec() - origin_;
    const double range = d.norm();
    return range < background_range(coarse_, cell_key(d, coarse_res_)) - margin_ &&
           range < background_range(fine_, cell_key(d, fine_res_)) - margin_;
  }

  nlohmann::json to_json() const {
    nlohmann::json j{{"coarse_res", coarse_res_},
                     {"fine_res", fine_res_},
                     {"margin", margin_},
                     {"sensor_origin", {origin_.x(), origin_.y(), origin_.z()}}};
    const auto dump = [](const std::map<int64_t, double>& cells) {
      nlohmann::json arr = nlohmann::json::array();
      for (const auto& [k, r] : cells) arr.push_back({k, r});
      return arr;
    };
    j["coarse_cells"] = dump(coarse_);
    j["fine_cells"] = dump(fine_);
    return j;
  }

  static BackgroundModel from_json(const nlohmann::json& j) {
    const auto o = j.at("sensor_origin");
    BackgroundModel m(j.at("coarse_res").get<double>(), j.at("fine_res").get<double>(),
                      j.at("margin").get<double>(),
                      Eigen::Vector3d(o.at(0), o.at(1), o.at(2)));
    for (const auto& c : j.at("coarse_cells")) m.coarse_[c.at(0).get<int64_t>()] = c.at(1);
    for (const auto& c : j.at("fine_cells")) m.fine_[c.at(0).get<int64_t>()] = c.at(1);
    return m;
  }

  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("BackgroundModel::save: cannot open " + path);
    out << to_json().dump() << "\n";
  }

  static BackgroundModel load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("BackgroundModel::load: cannot open " + path);
    return from_json(nlohmann::json::parse(in));
  }

 private:
  static int64_t cell_key(const Eigen::Vector3d& d, double res) {
    const double az = std::atan2(d.y(), d.x());                       // [-pi, pi]
    const double el = std::atan2(d.z(), d.head<2>().norm());          // [-pi/2, pi/2]
    const int64_t ia = static_cast<int64_t>(std::floor((az + kPi) / res));
    const int64_t ie = static_cast<int64_t>(std::floor((el + kPi / 2.0) / res));
    return ia * 100000 + ie;
  }

  static void update_max(std::map<int64_t, double>& cells, int64_t key, double range) {
    auto [it, inserted] = cells.try_emplace(key, range);
    if (!inserted) it->second = std::max(it->second, range);
  }

  static double background_range(const std::map<int64_t, double>& cells, int64_t key) {
    const auto it = cells.find(key);
    return it == cells.end() ? std::numeric_limits<double>::infinity() : it->second;
  }

  double coarse_res_{2.0 * kPi / 180.0};
  double fine_res_{0.5 * kPi / 180.0};
  double margin_{0.3};
  Eigen::Vector3d origin_{Eigen::Vector3d::Zero()};
  std::map<int64_t, double> coarse_;
  std::map<int64_t, double> fine_;
};

/// Build a background model from one or more empty-scene scans.
inline BackgroundModel build_background_model(const std::vector<PointCloud>& empty_scans,
                                              double margin = 0.3,
                                              Eigen::Vector3d sensor_origin = Eigen::Vector3d::Zero(),
                                              double coarse_res = 2.0 * kPi / 180.0,
                                              double fine_res = 0.5 * kPi / 180.0) {
  if (empty_scans.empty()) {
    throw std::invalid_argument("build_background_model: need at least one empty scan");
  }
  BackgroundModel m(coarse_res, fine_res, margin, std::move(sensor_origin));
  for (const auto& scan : empty_scans) m.observe(scan);
  return m;
}

// ---------------------------------------------------------------------------

inline PointCloud crop_roi(const PointCloud& cloud, const RoiRegion& region) {
  if (region.polygon.size() < 3) throw std::invalid_argument("crop_roi: polygon must have >= 3 vertices");
  PointCloud out;
  out.frame = cloud.frame;
  out.timestamp_ns = cloud.timestamp_ns;
  const size_t n = region.polygon.size();
  for (size_t i = 0; i < cloud.size(); ++i) {
    const auto& p = cloud.points[i];
    if (p.z < region.z_min || p.z > region.z_max) continue;
    bool inside = false;
    for (size_t a = 0, b = n - 1; a < n; b = a++) {
      const auto& pa = region.polygon[a];
      const auto& pb = region.polygon[b];
      if ((pa.y() > p.y) != (pb.y() > p.y)) {
        const double xint = pa.x() + (p.y - pa.y()) / (pb.y() - pa.y()) * (pb.x() - pa.x());
        if (p.x < xint) inside = !inside;
      }
    }
    if (!inside) continue;
    out.points.push_back(p);
    if (cloud.has_intensity()) out.intensity.push_back(cloud.intensity[i]);
  }
  return out;
}

/// Exhaustive, disjoint split into (ground, nonground) by plane distance.
inline std::pair<PointCloud, PointCloud> segment_ground(const PointCloud& cloud,
                                                        const GroundParams& params) {
  params.validate();
  PointCloud ground, nonground;
  ground.frame = nonground.frame = cloud.frame;
  ground.timestamp_ns = nonground.timestamp_ns = cloud.timestamp_ns;
  for (size_t i = 0; i < cloud.size(); ++i) {
    const auto& p = cloud.points[i];
    const double dist = std::abs(params.plane[0] * p.x + params.plane[1] * p.y +
                                 params.plane[2] * p.z + params.plane[3]);
    auto& dst = dist <= params.distance_threshold ? ground : nonground;
    dst.points.push_back(p);
    if (cloud.has_intensity()) dst.intensity.push_back(cloud.intensity[i]);
  }
  return {std::move(ground), std::move(nonground)};
}

inline PointCloud filter_background(const PointCloud& nonground, const BackgroundModel& model) {
  PointCloud out;
  out.frame = nonground.frame;
  out.timestamp_ns = nonground.timestamp_ns;
  for (size_t i = 0; i < nonground.size(); ++i) {
    if (!model.is_foreground(nonground.points[i])) continue;
    out.points.push_back(nonground.points[i]);
    if (nonground.has_intensity()) out.intensity.push_back(nonground.intensity[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Box fitting

struct BoxFit {
  OrientedBox3 box;
  bool degenerate{false};
};

namespace detail {

/// Andrew monotone chain; returns hull vertices counter-clockwise.
inline std::vector<Eigen::Vector2d> convex_hull_2d(std::vector<Eigen::Vector2d> pts) {
  std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) {
    if (a.x() != b.x()) return a.x() < b.x();
    return a.y() < b.y();
  });
  pts.erase(std::unique(pts.begin(), pts.end(),
                        [](const auto& a, const auto& b) { return a == b; }),
            pts.end());
  if (pts.size() < 3) return pts;
  const auto cross = [](const Eigen::Vector2d& o, const Eigen::Vector2d& a,
                        const Eigen::Vector2d& b) {
    return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
  };
  std::vector<Eigen::Vector2d> hull(2 * pts.size());
  size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
    hull[k++] = p;
  }
  const size_t lower = k + 1;
  for (auto it = pts.rbegin(); it != pts.rend(); ++it) {
    while (k >= lower && cross(hull[k - 2], hull[k - 1], *it) <= 0) --k;
    hull[k++] = *it;
  }
  hull.resize(k - 1);
  return hull;
}

}  // namespace detail

/// Oriented box around a cluster: yaw from the first principal component of
/// the footprint convex hull, extents along that axis, box resting on the
/// ground plane.
inline BoxFit fit_box_pca(const PointCloud& cluster, double ground_z) {
  if (cluster.size() < 3) throw std::invalid_argument("fit_box_pca: cluster must have >= 3 points");
  std::vector<Eigen::Vector2d> fp;
  fp.reserve(cluster.size());
  double max_z = -std::numeric_limits<double>::infinity();
  for (const auto& p : cluster.points) {
    fp.emplace_back(p.x, p.y);
    max_z = std::max(max_z, p.z);
  }
  const auto hull = detail::convex_hull_2d(fp);

  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  for (const auto& p : hull) mean += p;
  mean /= static_cast<double>(hull.size());
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  for (const auto& p : hull) {
    const Eigen::Vector2d d = p - mean;
    cov += d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(cov);
  const Eigen::Vector2d axis = es.eigenvectors().col(1);  // largest eigenvalue
  const double yaw = std::atan2(axis.y(), axis.x());
  const Eigen::Vector2d along(std::cos(yaw), std::sin(yaw));
  const Eigen::Vector2d across(-std::sin(yaw), std::cos(yaw));

  double lo1 = std::numeric_limits<double>::infinity(), hi1 = -lo1;
  double lo2 = lo1, hi2 = -lo1;
  for (const auto& p : fp) {
    const double c1 = p.dot(along), c2 = p.dot(across);
    lo1 = std::min(lo1, c1);
    hi1 = std::max(hi1, c1);
    lo2 = std::min(lo2, c2);
    hi2 = std::max(hi2, c2);
  }
  BoxFit fit;
  double length = hi1 - lo1;
  double width = hi2 - lo2;
  if (width < 0.2) {
    width = 0.2;
    fit.degenerate = true;
  }
  if (length < 0.2) {
    length = 0.2;
    fit.degenerate = true;
  }
  const double height = std::max(max_z - ground_z, 0.1);
  const Eigen::Vector2d center2 = ((lo1 + hi1) / 2.0) * along + ((lo2 + hi2) / 2.0) * across;
  fit.box = OrientedBox3(Point3(center2.x(), center2.y(), ground_z + height / 2.0), length, width,
                         height, yaw);
  return fit;
}

// ---------------------------------------------------------------------------
// Rule-based classification

struct CategoryRule {
  Category category{Category::Unknown};
  double length_min{0}, length_max{0};
  double width_min{0}, width_max{0};
  double height_min{0}, height_max{0};
  double density_min{0};  // points per cubic meter
};

struct ClassifierRules {
  std::vector<CategoryRule> rules;  // precedence order

  static ClassifierRules defaults() {
    return {{
        {Category::Bus, 8.0, 16.0, 2.2, 3.2, 2.6, 4.2, 0.2},
        {Category::Truck, 5.0, 10.0, 1.9, 3.0, 2.2, 4.5, 0.2},
        {Category::Car, 2.9, 6.0, 1.4, 2.3, 1.1, 2.2, 0.5},
        {Category::Motorcycle, 1.5, 2.8, 0.6, 1.3, 0.9, 1.9, 0.5},
        {Category::Bicycle, 1.2, 2.2, 0.2, 0.55, 0.8, 1.6, 0.5},
        {Category::Pedestrian, 0.2, 1.2, 0.2, 1.2, 1.2, 2.1, 1.0},
    }};
  }
};

struct Classification {
  Category category{Category::Unknown};
  double score{0.0};
};

/// First rule (precedence order) whose dimension ranges contain the box and
/// whose point density clears the minimum wins. The score reflects how far
/// inside the ranges the box sits, clamped to [0,1].
inline Classification classify_by_rules(const OrientedBox3& box, size_t point_count,
                                        const ClassifierRules& rules) {
  const double density = static_cast<double>(point_count) / box.volume();
  const auto range_margin = [](double v, double lo, double hi) {
    const double half = (hi - lo) / 2.0;
    return std::clamp(1.0 - std::abs(v - (lo + half)) / half, 0.0, 1.0);
  };
  for (const auto& r : rules.rules) {
    if (box.length < r.length_min || box.length > r.length_max) continue;
    if (box.width < r.width_min || box.width > r.width_max) continue;
    if (box.height < r.height_min || box.height > r.height_max) continue;
    if (density < r.density_min) continue;
    const double score = (range_margin(box.length, r.length_min, r.length_max) +
                          range_margin(box.width, r.width_min, r.width_max) +
                          range_margin(box.height, r.height_min, r.height_max) +
                          std::clamp(density / (2.0 * std::max(r.density_min, 1e-9)), 0.0, 1.0)) /
                         4.0;
    return {r.category, std::clamp(score, 0.0, 1.0)};
  }
  return {Category::Unknown, 0.0};
}

// ---------------------------------------------------------------------------
// Full detector

struct LidarDetectorConfig {
  RoiRegion roi;
  GroundParams ground;
  std::optional<BackgroundModel> background;
  OutlierParams outliers;
  ClusterParams clusters;
  ClassifierRules rules = ClassifierRules::defaults();
  double ground_z{0.0};
  std::string sensor_id{"lidar"};
};

/// Unsupervised detection pipeline: crop, ground split, background filter,
/// outlier removal, clustering, box fit, rule classification.
inline std::vector<Detection3D> detect(const PointCloud& cloud, const LidarDetectorConfig& cfg) {
  PointCloud work = crop_roi(cloud, cfg.roi);
  auto [ground, nonground] = segment_ground(work, cfg.ground);
  PointCloud foreground =
      cfg.background ? filter_background(nonground, *cfg.background) : std::move(nonground);
  foreground = remove_radius_outliers(foreground, cfg.outliers);
  const auto clustering = cluster_dbscan(foreground, cfg.clusters);

  std::vector<Detection3D> out;
  for (const auto& idx : clustering.clusters) {
    if (idx.size() < 3) continue;
    PointCloud cluster;
    for (int i : idx) cluster.points.push_back(foreground.points[i]);
    const BoxFit fit = fit_box_pca(cluster, cfg.ground_z);
    const Classification cls = classify_by_rules(fit.box, idx.size(), cfg.rules);
    Detection3D det(fit.box, cls.category, std::clamp(std::max(cls.score, 0.1), 0.0, 1.0),
                    cfg.sensor_id);
    if (fit.degenerate) det.score = std::min(det.score, 0.1);
    det.provenance = "raw";
    out.push_back(std::move(det));
  }
  return out;
}

/// Offline helper: RANSAC plane fit for deriving the predefined ground model.
inline GroundParams fit_ground_plane_ransac(const PointCloud& cloud, double threshold = 0.2,
                                            int iterations = 200, uint64_t seed = 0) {
  if (cloud.size() < 3) throw std::invalid_argument("fit_ground_plane_ransac: need >= 3 points");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<size_t> pick(0, cloud.size() - 1);
  Eigen::Vector4d best{0, 0, 1, 0};
  size_t best_inliers = 0;
  for (int it = 0; it < iterations; ++it) {
    const Eigen::Vector3d a = cloud.points[pick(rng)].vec();
    const Eigen::Vector3d b = cloud.points[pick(rng)].vec();
    const Eigen::Vector3d c = cloud.points[pick(rng)].vec();
    Eigen::Vector3d n = (b - a).cross(c - a);
    if (n.norm() < 1e-9) continue;
    n.normalize();
    const double d = -n.dot(a);
    size_t inliers = 0;
    for (const auto& p : cloud.points) {
      if (std::abs(n.dot(p.vec()) + d) <= threshold) ++inliers;
    }
    if (inliers > best_inliers) {
      best_inliers = inliers;
      best << n.x(), n.y(), n.z(), d;
    }
  }
  GroundParams g;
  g.plane = best;
  g.distance_threshold = threshold;
  return g;
}

}  // namespace infradet
