#pragma once

#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "infradet/core/geometry.hpp"
#include "infradet/core/iou3d.hpp"
#include "infradet/fusion/lap.hpp"

namespace infradet {

struct FusionParams {
  double gate_distance{3.0};
  bool fill_unknown_category_from_camera{false};

  void validate() const {
    if (gate_distance <= 0.0) throw std::invalid_argument("FusionParams: gate must be positive");
  }
};

namespace detail {

inline double center_distance(const Detection3D& a, const Detection3D& b) {
  return distance(a.box.center, b.box.center);
}

inline CostMatrix center_cost_matrix(const std::vector<Detection3D>& rows,
                                     const std::vector<Detection3D>& cols,
                                     double gate = -1.0) {
  CostMatrix m(rows.size(), cols.size());
  for (size_t i = 0; i < rows.size(); ++i) {
    for (size_t j = 0; j < cols.size(); ++j) {
      const double d = center_distance(rows[i], cols[j]);
      m.at(i, j) = (gate > 0.0 && d > gate) ? kForbiddenCost : d;
    }
  }
  return m;
}

}  // namespace detail

/// LiDAR-LiDAR late fusion. Matches by center distance gated at
/// params.gate_distance; a merged detection takes center/yaw/category from
/// the sensor closest to the object, mean dimensions, max score. Unmatched
/// detections from both sides pass through.
inline std::vector<Detection3D> fuse_lidar_lidar(
    const std::vector<Detection3D>& dets_a, const std::vector<Detection3D>& dets_b,
    const std::map<std::string, Point3>& sensor_positions, const FusionParams& params) {
  params.validate();
  const auto costs = detail::center_cost_matrix(dets_a, dets_b, params.gate_distance);
  const auto assignment = solve_lap(costs);

  const auto sensor_range = [&](const Detection3D& d) {
    const auto it = sensor_positions.find(d.source);
    if (it == sensor_positions.end()) return std::numeric_limits<double>::infinity();
    return distance(d.box.center, it->second);
  };

  std::vector<Detection3D> out;
  out.reserve(dets_a.size() + dets_b.size());
  for (const auto& [i, j] : assignment.pairs) {
    const Detection3D& a = dets_a[i];
    const Detection3D& b = dets_b[j];
    const Detection3D& close = sensor_range(a) <= sensor_range(b) ? a : b;
    const Detection3D& far = sensor_range(a) <= sensor_range(b) ? b : a;
    Detection3D merged = close;
    merged.box = OrientedBox3(close.box.center, (a.box.length + b.box.length) / 2.0,
                              (a.box.width + b.box.width) / 2.0,
                              (a.box.height + b.box.height) / 2.0, close.box.yaw);
    merged.score = std::max(a.score, b.score);
    if (merged.category == Category::Unknown) merged.category = far.category;
    merged.provenance = "fused_lidar";
    out.push_back(merged);
  }
  for (int i : assignment.unmatched_rows) out.push_back(dets_a[i]);
  for (int j : assignment.unmatched_cols) out.push_back(dets_b[j]);
  return out;
}

/// Camera-LiDAR late fusion: assignment on raw center distance, matches
/// post-filtered at the distance gate; a matched pair keeps the LiDAR
/// detection. Unmatched detections are tagged by provenance.
inline std::vector<Detection3D> fuse_camera_lidar(const std::vector<Detection3D>& cam_dets,
                                                  const std::vector<Detection3D>& lidar_dets,
                                                  const FusionParams& params) {
  params.validate();
  const auto costs = detail::center_cost_matrix(cam_dets, lidar_dets);
  const auto assignment = solve_lap(costs);

  std::vector<char> cam_used(cam_dets.size(), 0), lidar_used(lidar_dets.size(), 0);
  std::vector<Detection3D> out;
  out.reserve(cam_dets.size() + lidar_dets.size());
  for (const auto& [i, j] : assignment.pairs) {
    if (detail::center_distance(cam_dets[i], lidar_dets[j]) > params.gate_distance) continue;
    Detection3D merged = lidar_dets[j];
    if (params.fill_unknown_category_from_camera && merged.category == Category::Unknown) {
      merged.category = cam_dets[i].category;
    }
    merged.score = std::max(cam_dets[i].score, lidar_dets[j].score);
    merged.provenance = "fused";
    out.push_back(merged);
    cam_used[i] = 1;
    lidar_used[j] = 1;
  }
  for (size_t i = 0; i < cam_dets.size(); ++i) {
    if (cam_used[i]) continue;
    Detection3D d = cam_dets[i];
    d.provenance = "unmatched_camera";
    out.push_back(d);
  }
  for (size_t j = 0; j < lidar_dets.size(); ++j) {
    if (lidar_used[j]) continue;
    Detection3D d = lidar_dets[j];
    d.provenance = "unmatched_lidar";
    out.push_back(d);
  }
  return out;
}

/// Keep detections whose box center projects into the camera image.
inline std::vector<Detection3D> filter_fov(const std::vector<Detection3D>& dets,
                                           const CameraModel& cam) {
  std::vector<Detection3D> out;
  for (const auto& d : dets) {
    const auto px = project_point(cam, d.box.center);
    if (!px) continue;
    if (px->u < 0.0 || px->u >= cam.width || px->v < 0.0 || px->v >= cam.height) continue;
    out.push_back(d);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Shared detection JSON schema; also the ingestion format for external
// supervised detector outputs.

struct DetectionFrame {
  std::string frame_id;
  int64_t timestamp_ns{0};
  std::string source;
  std::vector<Detection3D> detections;
};

inline nlohmann::json detection_to_json(const Detection3D& d) {
  nlohmann::json j{{"category", to_string(d.category)},
                   {"score", d.score},
                   {"center", {d.box.center.x, d.box.center.y, d.box.center.z}},
                   {"dims", {d.box.length, d.box.width, d.box.height}},
                   {"yaw", d.box.yaw},
                   {"provenance", d.provenance.empty() ? "raw" : d.provenance}};
  if (d.track_id >= 0) j["track_id"] = d.track_id;
  return j;
}

inline Detection3D detection_from_json(const nlohmann::json& j, const std::string& source) {
  const auto c = j.at("center");
  const auto dims = j.at("dims");
  Detection3D d(OrientedBox3(Point3(c.at(0), c.at(1), c.at(2)), dims.at(0), dims.at(1), dims.at(2),
                             j.at("yaw").get<double>()),
                category_from_string(j.at("category").get<std::string>()),
                j.at("score").get<double>(), source);
  d.provenance = j.value("provenance", "raw");
  d.track_id = j.value("track_id", int64_t{-1});
  return d;
}

inline nlohmann::json detection_frame_to_json(const DetectionFrame& f) {
  nlohmann::json dets = nlohmann::json::array();
  for (const auto& d : f.detections) dets.push_back(detection_to_json(d));
  return {{"frame_id", f.frame_id},
          {"timestamp_ns", f.timestamp_ns},
          {"source", f.source},
          {"detections", dets}};
}

inline DetectionFrame detection_frame_from_json(const nlohmann::json& j) {
  DetectionFrame f;
  f.frame_id = j.at("frame_id").get<std::string>();
  f.timestamp_ns = j.value("timestamp_ns", int64_t{0});
  f.source = j.value("source", "");
  for (const auto& dj : j.at("detections")) {
    f.detections.push_back(detection_from_json(dj, f.source));
  }
  return f;
}

inline void save_detection_frames(const std::vector<DetectionFrame>& frames,
                                  const std::string& path) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& f : frames) arr.push_back(detection_frame_to_json(f));
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_detection_frames: cannot open " + path);
  out << arr.dump(2) << "\n";
}

inline std::vector<DetectionFrame> load_detection_frames(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_detection_frames: cannot open " + path);
  nlohmann::json arr = nlohmann::json::parse(in);
  std::vector<DetectionFrame> out;
  for (const auto& j : arr) out.push_back(detection_frame_from_json(j));
  return out;
}

}  // namespace infradet
