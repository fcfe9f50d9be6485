#pragma once

#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "infradet/core/geometry.hpp"
#include "infradet/hdmap/hdmap.hpp"
#include "infradet/lidar/clustering.hpp"
#include "infradet/tracking/sort.hpp"

namespace infradet {

struct InstanceMask {
  std::string frame_id;
  Category category{Category::Unknown};
  double score{1.0};
  Box2D bbox2d;
  std::vector<Eigen::Vector2d> polygon;  // pixel vertices, non-self-intersecting
};

struct BottomContour3D {
  std::vector<Point3> points;  // all at z = ground_z
  double ground_z{0.0};
};

struct YawHypothesis {
  double theta{0.0};       // [0, pi)
  double confidence{1.0};  // from the map histogram
  std::string lane_id;
  double driving_theta{0.0};  // original [0, 2*pi) heading of the winning lane
};

struct LShapeResult {
  Eigen::Vector2d center{0.0, 0.0};
  double length{0.0};
  double width{0.0};
  double yaw{0.0};  // [0, pi)
  double score{0.0};
  bool degenerate{false};
  std::string lane_id;
  double driving_theta{0.0};
};

struct HeightSearchParams {
  double pixel_tolerance{1.0};
  int max_iterations{32};
};

struct CategoryDimensionBounds {
  double length_min, length_max;
  double width_min, width_max;
  double height_min, height_max;
  double height_prior;
};

/// Per-category dimension clamp table and height priors.
inline const std::map<Category, CategoryDimensionBounds>& default_dimension_bounds() {
  static const std::map<Category, CategoryDimensionBounds> kBounds{
      {Category::Car, {3.0, 6.0, 1.5, 2.2, 1.2, 2.2, 1.6}},
      {Category::Truck, {5.0, 13.0, 2.0, 3.0, 2.2, 4.5, 3.2}},
      {Category::Bus, {8.0, 16.0, 2.2, 3.2, 2.6, 4.2, 3.4}},
      {Category::Motorcycle, {1.5, 2.8, 0.5, 1.3, 0.9, 1.9, 1.4}},
      {Category::Pedestrian, {0.2, 1.2, 0.2, 1.2, 1.4, 2.1, 1.75}},
      {Category::Bicycle, {1.2, 2.2, 0.2, 0.9, 0.8, 1.6, 1.3}},
      {Category::Unknown, {0.2, 20.0, 0.2, 5.0, 0.5, 5.0, 1.8}},
  };
  return kBounds;
}

// ---------------------------------------------------------------------------
// Mask processing

namespace detail {

/// Y-intersections of the polygon boundary with the vertical line x = u.
inline std::vector<double> column_crossings(const std::vector<Eigen::Vector2d>& poly, double u) {
  std::vector<double> ys;
  const size_t n = poly.size();
  for (size_t i = 0, j = n - 1; i < n; j = i++) {
    const auto& a = poly[i];
    const auto& b = poly[j];
    if ((a.x() > u) != (b.x() > u)) {
      ys.push_back(a.y() + (u - a.x()) / (b.x() - a.x()) * (b.y() - a.y()));
    }
  }
  std::sort(ys.begin(), ys.end());
  return ys;
}

inline bool pixel_in_polygon(const std::vector<Eigen::Vector2d>& poly, double u, double v) {
  const auto ys = column_crossings(poly, u);
  int below = 0;
  for (double y : ys) {
    if (y > v) ++below;
  }
  return below % 2 == 1;
}

}  // namespace detail

/// Lowest (max-v) mask pixel per occupied pixel column, ordered by u.
/// Pixel centers at integer coordinates + 0.5.
inline std::vector<Pixel> extract_bottom_contour(const InstanceMask& mask) {
  if (mask.polygon.size() < 3) throw std::invalid_argument("extract_bottom_contour: bad polygon");
  double min_x = mask.polygon[0].x(), max_x = min_x;
  double min_y = mask.polygon[0].y(), max_y = min_y;
  for (const auto& p : mask.polygon) {
    min_x = std::min(min_x, p.x());
    max_x = std::max(max_x, p.x());
    min_y = std::min(min_y, p.y());
    max_y = std::max(max_y, p.y());
  }
  std::vector<Pixel> out;
  for (int col = static_cast<int>(std::floor(min_x)); col <= static_cast<int>(std::ceil(max_x));
       ++col) {
    const double u = col + 0.5;
    const auto ys = detail::column_crossings(mask.polygon, u);
    if (ys.size() < 2) continue;
    // lowest pixel center covered by the last inside interval
    const double y_bottom = ys.back();
    const double y_top = ys[ys.size() - 2];
    const int v_lo = static_cast<int>(std::ceil(y_top - 0.5));
    const int v_hi = static_cast<int>(std::floor(y_bottom - 0.5));
    if (v_hi < v_lo) continue;
    out.push_back({u, v_hi + 0.5});
  }
  return out;
}

/// Raycast contour pixels onto the ground plane; misses are dropped.
inline BottomContour3D ground_contour(const std::vector<Pixel>& pixels, const CameraModel& cam,
                                      double ground_z) {
  BottomContour3D out;
  out.ground_z = ground_z;
  for (const auto& px : pixels) {
    if (const auto p = raycast_to_ground(cam, px, ground_z)) out.points.push_back(*p);
  }
  return out;
}

/// Keep the largest DBSCAN cluster of the contour; ties break toward the
/// cluster closest to the camera.
inline BottomContour3D denoise_contour(const BottomContour3D& contour, const ClusterParams& params,
                                       const Eigen::Vector3d& camera_position = Eigen::Vector3d::Zero()) {
  if (contour.points.empty()) throw std::invalid_argument("denoise_contour: empty contour");
  PointCloud pc;
  pc.points = contour.points;
  const auto clustering = cluster_dbscan(pc, params);
  if (clustering.clusters.empty()) return contour;
  const auto cluster_dist = [&](const std::vector<int>& idx) {
    Eigen::Vector3d c = Eigen::Vector3d::Zero();
    for (int i : idx) c += contour.points[i].vec();
    return (c / static_cast<double>(idx.size()) - camera_position).norm();
  };
  size_t best = 0;
  for (size_t i = 1; i < clustering.clusters.size(); ++i) {
    const auto& a = clustering.clusters[i];
    const auto& b = clustering.clusters[best];
    if (a.size() > b.size() || (a.size() == b.size() && cluster_dist(a) < cluster_dist(b))) {
      best = i;
    }
  }
  BottomContour3D out;
  out.ground_z = contour.ground_z;
  for (int i : clustering.clusters[best]) out.points.push_back(contour.points[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Augmented L-shape fitting

/// Fold an angular difference in [0, pi) into [0, pi/2]: opposed-parallel
/// headings count as parallel.
inline double delta_angle(double delta) {
  if (delta < 0.0 || delta >= kPi) throw std::invalid_argument("delta_angle: input outside [0, pi)");
  return std::min(delta, kPi - delta);
}

inline constexpr size_t kHistoryLimit = kHistoryCapacity;  // T = 6
inline constexpr double kStationaryDisplacement = 0.05;    // meters

/// Historical plausibility of a yaw hypothesis: product over history of
/// (pi/2 - folded angle between the hypothesis and each displacement
/// direction). Empty history is neutral (1); near-zero displacements
/// contribute the neutral-max factor pi/2.
inline double historical_plausibility(double theta, const Point3& position,
                                      const std::vector<Point3>& history) {
  if (history.size() > kHistoryLimit) {
    throw std::invalid_argument("historical_plausibility: history longer than T=6");
  }
  double hp = 1.0;
  for (const auto& past : history) {
    const Eigen::Vector3d d = position.vec() - past.vec();
    double factor;
    if (d.head<2>().norm() < kStationaryDisplacement) {
      factor = kPi / 2.0;
    } else {
      const double motion = std::atan2(d.y(), d.x());
      const double raw = std::fmod(std::abs(theta - motion), kPi);
      factor = kPi / 2.0 - delta_angle(raw);
    }
    hp *= factor;
  }
  return hp;
}

using HpFunction = std::function<double(double theta, const Point3& center)>;

/// Uniform [0, pi) sweep used when the map histogram is empty.
inline std::vector<YawHypothesis> uniform_yaw_sweep(double increment = 3.0 * kPi / 180.0) {
  std::vector<YawHypothesis> out;
  for (double t = 0.0; t < kPi - 1e-9; t += increment) out.push_back({t, 1.0, "", t});
  return out;
}

/// Map-histogram entries folded to [0, pi) rectangle yaw hypotheses.
inline std::vector<YawHypothesis> hypotheses_from_histogram(const YawHistogram& hist) {
  std::vector<YawHypothesis> out;
  for (const auto& e : hist.entries) {
    out.push_back({fold_to_pi(e.mean_theta), e.confidence, e.lane_id, e.mean_theta});
  }
  return out;
}

/// L-shape fit over the given yaw hypotheses. Per hypothesis the contour is
/// expressed in the rotated frame, each coordinate is assigned to the nearer
/// candidate rectangle edge, and the base score is the negative mean of the
/// two per-axis distance variances, mapped to (0,1] via exp and weighted by
/// the hypothesis confidence and the historical plausibility.
inline LShapeResult lshape_fit(const BottomContour3D& contour,
                               std::vector<YawHypothesis> hypotheses,
                               const HpFunction& hp_fn = nullptr) {
  if (contour.points.size() < 3) throw std::invalid_argument("lshape_fit: contour must have >= 3 points");
  if (hypotheses.empty()) hypotheses = uniform_yaw_sweep();
  constexpr double kSigmaRef = 0.1;  // m^2, keeps exp(score) in a usable range

  LShapeResult best;
  double best_total = -std::numeric_limits<double>::infinity();
  std::vector<double> c1, c2, d1, d2;
  c1.reserve(contour.points.size());
  c2.reserve(contour.points.size());
  for (const auto& hyp : hypotheses) {
    const double theta = fold_to_pi(hyp.theta);
    const Eigen::Vector2d along(std::cos(theta), std::sin(theta));
    const Eigen::Vector2d across(-std::sin(theta), std::cos(theta));
    c1.clear();
    c2.clear();
    for (const auto& p : contour.points) {
      const Eigen::Vector2d q(p.x, p.y);
      c1.push_back(q.dot(along));
      c2.push_back(q.dot(across));
    }
    const auto [lo1, hi1] = std::minmax_element(c1.begin(), c1.end());
    const auto [lo2, hi2] = std::minmax_element(c2.begin(), c2.end());
    // Each point is assigned to whichever of the four candidate rectangle
    // edges it is closest to; the criterion is the mean of the two per-axis
    // distance variances over the points assigned to that axis.
    d1.clear();
    d2.clear();
    for (size_t i = 0; i < c1.size(); ++i) {
      const double e1 = std::min(*hi1 - c1[i], c1[i] - *lo1);
      const double e2 = std::min(*hi2 - c2[i], c2[i] - *lo2);
      (e1 < e2 ? d1 : d2).push_back(std::min(e1, e2));
    }
    const auto variance = [](const std::vector<double>& d) {
      if (d.empty()) return 0.0;
      double mean = 0.0;
      for (double v : d) mean += v;
      mean /= static_cast<double>(d.size());
      double var = 0.0;
      for (double v : d) var += (v - mean) * (v - mean);
      return var / static_cast<double>(d.size());
    };
    const double base = -(variance(d1) + variance(d2)) / 2.0;
    const double norm_score = std::exp(base / kSigmaRef);  // (0, 1]

    const Eigen::Vector2d center =
        ((*lo1 + *hi1) / 2.0) * along + ((*lo2 + *hi2) / 2.0) * across;
    const Point3 center3(center.x(), center.y(), contour.ground_z);
    const double hp = hp_fn ? hp_fn(theta, center3) : 1.0;
    const double total = norm_score * hyp.confidence * hp;
    if (total > best_total) {
      best_total = total;
      best.center = center;
      best.length = *hi1 - *lo1;
      best.width = *hi2 - *lo2;
      best.yaw = theta;
      best.score = total;
      best.lane_id = hyp.lane_id;
      best.driving_theta = hyp.driving_theta;
    }
  }
  if (best.length < best.width) {
    std::swap(best.length, best.width);
    best.yaw = fold_to_pi(best.yaw + kPi / 2.0);
  }
  if (best.width < 0.2) {
    best.width = 0.2;
    best.degenerate = true;
  }
  if (best.length < 0.2) {
    best.length = 0.2;
    best.degenerate = true;
  }
  return best;
}

// ---------------------------------------------------------------------------
// Height estimation

struct HeightEstimate {
  OrientedBox3 box;
  bool converged{false};
  double residual_px{0.0};
  int iterations{0};
};

/// Bisection over the per-category height range, comparing the projected
/// pixel height of the 8 box corners against the mask bbox height until the
/// residual drops below pixel_tolerance.
inline HeightEstimate estimate_height_and_location(const LShapeResult& result,
                                                   const InstanceMask& mask, const CameraModel& cam,
                                                   const HeightSearchParams& params,
                                                   const CategoryDimensionBounds& bounds,
                                                   double ground_z) {
  if (params.pixel_tolerance <= 0.0 || params.max_iterations <= 0) {
    throw std::invalid_argument("estimate_height_and_location: bad search params");
  }
  const double target = mask.bbox2d.height();

  const auto projected_height = [&](double h) {
    const OrientedBox3 box(Point3(result.center.x(), result.center.y(), ground_z + h / 2.0),
                           result.length, result.width, h, result.yaw);
    double v_min = std::numeric_limits<double>::infinity();
    double v_max = -v_min;
    for (const auto& corner : box.corners()) {
      if (const auto px = project_point(cam, corner)) {
        v_min = std::min(v_min, px->v);
        v_max = std::max(v_max, px->v);
      }
    }
    if (!std::isfinite(v_min)) return -1.0;  // footprint behind camera
    return v_max - v_min;
  };

  double lo = bounds.height_min, hi = bounds.height_max;
  double h = std::clamp(bounds.height_prior, lo, hi);
  HeightEstimate est;
  double best_h = h;
  double best_res = std::numeric_limits<double>::infinity();
  for (int it = 0; it < params.max_iterations; ++it) {
    const double ph = projected_height(h);
    est.iterations = it + 1;
    if (ph < 0.0) break;
    const double res = std::abs(ph - target);
    if (res < best_res) {
      best_res = res;
      best_h = h;
    }
    if (res < params.pixel_tolerance) {
      est.converged = true;
      break;
    }
    if (ph < target) {
      lo = h;  // projected too short: grow
    } else {
      hi = h;
    }
    h = (lo + hi) / 2.0;
  }
  est.residual_px = best_res;
  est.box = OrientedBox3(Point3(result.center.x(), result.center.y(), ground_z + best_h / 2.0),
                         result.length, result.width, best_h, result.yaw);
  return est;
}

/// Clamp box dimensions into the per-category range, center preserved.
inline OrientedBox3 clamp_dimensions(const OrientedBox3& box,
                                     const CategoryDimensionBounds& bounds) {
  return {box.center, std::clamp(box.length, bounds.length_min, bounds.length_max),
          std::clamp(box.width, bounds.width_min, bounds.width_max),
          std::clamp(box.height, bounds.height_min, bounds.height_max), box.yaw};
}

// ---------------------------------------------------------------------------
// Per-frame pipeline

struct Mono3dConfig {
  double ground_z{0.0};
  ClusterParams denoise;
  HeightSearchParams height_search;
  std::map<Category, CategoryDimensionBounds> dimension_bounds = default_dimension_bounds();
  bool use_map{true};
  bool use_tracking{true};
};

inline const CategoryDimensionBounds& bounds_for(const Mono3dConfig& cfg, Category c) {
  const auto it = cfg.dimension_bounds.find(c);
  if (it != cfg.dimension_bounds.end()) return it->second;
  return cfg.dimension_bounds.at(Category::Unknown);
}

/// Monocular 3D detection for one camera frame. The tracker, when present,
/// is updated with every mask's 2D box and the resulting 3D position; the
/// grid, when present, restricts and weights the yaw hypotheses.
inline std::vector<Detection3D> detect_mono(const std::vector<InstanceMask>& masks,
                                            const CameraModel& cam, const HeadingGrid* grid,
                                            SortTracker* tracker, const Mono3dConfig& cfg) {
  std::vector<int64_t> track_ids(masks.size(), -1);
  if (tracker && cfg.use_tracking) {
    std::vector<Box2D> boxes;
    boxes.reserve(masks.size());
    for (const auto& m : masks) boxes.push_back(m.bbox2d);
    track_ids = tracker->predict_and_match(boxes);
  }

  std::vector<Detection3D> out;
  for (size_t mi = 0; mi < masks.size(); ++mi) {
    const InstanceMask& mask = masks[mi];
    const auto pixels = extract_bottom_contour(mask);
    if (pixels.size() < 3) continue;
    BottomContour3D contour = ground_contour(pixels, cam, cfg.ground_z);
    if (contour.points.size() < 3) continue;
    contour = denoise_contour(contour, cfg.denoise, cam.position());
    if (contour.points.size() < 3) continue;

    std::vector<YawHypothesis> hypotheses;
    if (grid && cfg.use_map) {
      const YawHistogram hist = lookup(*grid, contour.points);
      hypotheses = hypotheses_from_histogram(hist);
    }

    HpFunction hp_fn;
    if (tracker && cfg.use_tracking && track_ids[mi] >= 0) {
      const auto history = tracker->get_history(track_ids[mi]);
      if (!history.empty()) {
        hp_fn = [history](double theta, const Point3& center) {
          return historical_plausibility(theta, center, history);
        };
      }
    }

    const LShapeResult shape = lshape_fit(contour, std::move(hypotheses), hp_fn);
    const auto& bounds = bounds_for(cfg, mask.category);
    const HeightEstimate height =
        estimate_height_and_location(shape, mask, cam, cfg.height_search, bounds, cfg.ground_z);
    const OrientedBox3 box = clamp_dimensions(height.box, bounds);

    Detection3D det(box, mask.category, mask.score, cam.camera_id);
    det.provenance = "raw";
    det.track_id = track_ids[mi];
    out.push_back(std::move(det));

    if (tracker && cfg.use_tracking && track_ids[mi] >= 0) {
      tracker->commit_position(track_ids[mi], box.center);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Mask file schema:
// {"frame_id": ..., "camera_id": ..., "instances":
//   [{"category", "score", "bbox2d": [x1,y1,x2,y2], "polygon": [[u,v],...]}]}

struct MaskFrame {
  std::string frame_id;
  std::string camera_id;
  std::vector<InstanceMask> instances;
};

inline nlohmann::json mask_frame_to_json(const MaskFrame& f) {
  nlohmann::json instances = nlohmann::json::array();
  for (const auto& m : f.instances) {
    nlohmann::json poly = nlohmann::json::array();
    for (const auto& p : m.polygon) poly.push_back({p.x(), p.y()});
    instances.push_back({{"category", to_string(m.category)},
                         {"score", m.score},
                         {"bbox2d", {m.bbox2d.x1, m.bbox2d.y1, m.bbox2d.x2, m.bbox2d.y2}},
                         {"polygon", poly}});
  }
  return {{"frame_id", f.frame_id}, {"camera_id", f.camera_id}, {"instances", instances}};
}

inline MaskFrame mask_frame_from_json(const nlohmann::json& j) {
  MaskFrame f;
  f.frame_id = j.at("frame_id").get<std::string>();
  f.camera_id = j.value("camera_id", "");
  for (const auto& mj : j.at("instances")) {
    InstanceMask m;
    m.frame_id = f.frame_id;
    m.category = category_from_string(mj.at("category").get<std::string>());
    m.score = mj.at("score").get<double>();
    const auto& b = mj.at("bbox2d");
    m.bbox2d = {b.at(0), b.at(1), b.at(2), b.at(3)};
    for (const auto& p : mj.at("polygon")) m.polygon.emplace_back(p.at(0), p.at(1));
    f.instances.push_back(std::move(m));
  }
  return f;
}

inline void save_mask_frames(const std::vector<MaskFrame>& frames, const std::string& path) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& f : frames) arr.push_back(mask_frame_to_json(f));
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_mask_frames: cannot open " + path);
  out << arr.dump(2) << "\n";
}

inline std::vector<MaskFrame> load_mask_frames(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_mask_frames: cannot open " + path);
  nlohmann::json arr = nlohmann::json::parse(in);
  std::vector<MaskFrame> out;
  for (const auto& j : arr) out.push_back(mask_frame_from_json(j));
  return out;
}

}  // namespace infradet
