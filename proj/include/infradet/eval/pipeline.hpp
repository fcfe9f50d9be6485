#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "infradet/eval/evaluate.hpp"
#include "infradet/eval/synth.hpp"
#include "infradet/fusion/fusion.hpp"
#include "infradet/lidar/detector.hpp"
#include "infradet/mono3d/mono3d.hpp"
#include "infradet/registration/registration.hpp"
#include "infradet/tracking/sort.hpp"

namespace infradet {

struct PipelineOptions {
  bool use_lidar{true};
  bool use_cameras{true};
  bool early_fusion{true};  // false: per-sensor detection + LiDAR late fusion
  bool fov_filter{false};
  bool evaluate_against_gt{true};
  double fusion_gate{3.0};
  double registration_voxel{2.0};
  EvalParams eval;
  ClusterParams lidar_clusters{};
  OutlierParams lidar_outliers{};
  GroundParams ground{};
  double background_margin{0.3};
};

struct PipelineResult {
  std::vector<DetectionFrame> lidar_frames;
  std::vector<DetectionFrame> camera_frames;
  std::vector<DetectionFrame> fused_frames;  // final output
  std::optional<EvalReport> report;
};

namespace detail {

inline RoiRegion scene_roi(double extent) {
  RoiRegion roi;
  const double e = extent - 2.0;
  roi.polygon = {{-e, -e}, {e, -e}, {e, e}, {-e, e}};
  roi.z_min = -1.0;
  roi.z_max = 6.0;
  return roi;
}

inline GridExtent lanes_extent(const std::vector<Lane>& lanes) {
  GridExtent ext;
  bool first = true;
  for (const auto& lane : lanes) {
    for (const auto* border : {&lane.left_border, &lane.right_border}) {
      for (const auto& p : *border) {
        if (first) {
          ext = {p.x, p.y, p.x, p.y};
          first = false;
        }
        ext.min_x = std::min(ext.min_x, p.x);
        ext.min_y = std::min(ext.min_y, p.y);
        ext.max_x = std::max(ext.max_x, p.x);
        ext.max_y = std::max(ext.max_y, p.y);
      }
    }
  }
  return ext;
}

}  // namespace detail

/// Execute the configured stages of the perception chain over a scene
/// bundle and optionally evaluate the result against its ground truth.
inline PipelineResult run_pipeline(const SceneBundle& bundle, const PipelineOptions& opt) {
  if (!opt.use_lidar && !opt.use_cameras) {
    throw std::invalid_argument("run_pipeline: no stages enabled");
  }
  PipelineResult result;

  const double extent =
      bundle.frames.empty() ? 40.0 : std::max(40.0, detail::lanes_extent(bundle.lanes).max_x);

  // per-sensor detector configs with background models from the empty scans
  std::vector<LidarDetectorConfig> lidar_cfgs;
  std::map<std::string, Point3> sensor_positions;
  if (opt.use_lidar) {
    for (size_t si = 0; si < bundle.sensors.size(); ++si) {
      LidarDetectorConfig cfg;
      cfg.roi = detail::scene_roi(extent);
      cfg.ground = opt.ground;
      cfg.clusters = opt.lidar_clusters;
      cfg.outliers = opt.lidar_outliers;
      cfg.ground_z = bundle.ground_z;
      cfg.sensor_id = bundle.sensors[si].id;
      if (si < bundle.empty_scans.size()) {
        cfg.background = build_background_model({bundle.empty_scans[si]}, opt.background_margin,
                                                bundle.sensors[si].position.vec());
      }
      lidar_cfgs.push_back(std::move(cfg));
      sensor_positions[bundle.sensors[si].id] = bundle.sensors[si].position;
    }
  }

  // one heading grid covering the whole lane extent, shared by all cameras
  std::optional<HeadingGrid> grid;
  std::vector<SortTracker> trackers(bundle.cameras.size());
  Mono3dConfig mono_cfg;
  mono_cfg.ground_z = bundle.ground_z;
  if (opt.use_cameras && !bundle.lanes.empty()) {
    GridExtent ext = detail::lanes_extent(bundle.lanes);
    grid = rasterize(bundle.lanes, ext, 0.10);
  }

  FusionParams fusion_params;
  fusion_params.gate_distance = opt.fusion_gate;
  // Monocular classification backs up the rule classifier: merged-cloud
  // clusters can fall outside the dimension rules (registration residual
  // widens them) while the image class is still right.
  fusion_params.fill_unknown_category_from_camera = true;

  for (const auto& frame : bundle.frames) {
    std::vector<Detection3D> lidar_dets;
    if (opt.use_lidar && !frame.clouds.empty()) {
      if (opt.early_fusion && frame.clouds.size() >= 2) {
        const auto merged = register_clouds(
            frame.clouds, 0, RegistrationParams::from_voxel(opt.registration_voxel));
        lidar_dets = detect(merged.cloud, lidar_cfgs[0]);
        for (auto& d : lidar_dets) d.source = "lidar_ef";
      } else {
        for (size_t si = 0; si < frame.clouds.size(); ++si) {
          auto dets = detect(frame.clouds[si], lidar_cfgs[si]);
          lidar_dets = si == 0 ? std::move(dets)
                               : fuse_lidar_lidar(lidar_dets, dets, sensor_positions, fusion_params);
        }
      }
      DetectionFrame lf;
      lf.frame_id = frame.frame_id;
      lf.timestamp_ns = frame.gt.timestamp_ns;
      lf.source = opt.early_fusion ? "lidar_ef" : "lidar_lf";
      lf.detections = lidar_dets;
      result.lidar_frames.push_back(std::move(lf));
    }

    std::vector<Detection3D> cam_dets;
    if (opt.use_cameras) {
      for (size_t ci = 0; ci < bundle.cameras.size() && ci < frame.masks.size(); ++ci) {
        const auto dets = detect_mono(frame.masks[ci].instances, bundle.cameras[ci],
                                      grid ? &*grid : nullptr, &trackers[ci], mono_cfg);
        cam_dets.insert(cam_dets.end(), dets.begin(), dets.end());
      }
      DetectionFrame cf;
      cf.frame_id = frame.frame_id;
      cf.timestamp_ns = frame.gt.timestamp_ns;
      cf.source = "mono3d";
      cf.detections = cam_dets;
      result.camera_frames.push_back(std::move(cf));
    }

    std::vector<Detection3D> fused;
    if (opt.use_lidar && opt.use_cameras) {
      fused = fuse_camera_lidar(cam_dets, lidar_dets, fusion_params);
    } else {
      fused = opt.use_lidar ? lidar_dets : cam_dets;
    }
    if (opt.fov_filter && !bundle.cameras.empty()) {
      fused = filter_fov(fused, bundle.cameras[0]);
    }
    DetectionFrame ff;
    ff.frame_id = frame.frame_id;
    ff.timestamp_ns = frame.gt.timestamp_ns;
    ff.source = "infradet3d";
    ff.detections = std::move(fused);
    result.fused_frames.push_back(std::move(ff));
  }

  if (opt.evaluate_against_gt) {
    std::vector<GroundTruthFrame> gt;
    for (const auto& f : bundle.frames) gt.push_back(f.gt);
    result.report = evaluate(gt, result.fused_frames, opt.eval);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Bundle file layout: config.json + per-frame PCDs + masks/map/gt JSON.

inline nlohmann::json camera_to_json(const CameraModel& cam) {
  const Eigen::Matrix4d m = cam.extrinsic.matrix();
  std::vector<double> flat;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) flat.push_back(m(i, j));
  return {{"id", cam.camera_id}, {"fx", cam.fx},       {"fy", cam.fy},
          {"cx", cam.cx},        {"cy", cam.cy},       {"width", cam.width},
          {"height", cam.height}, {"extrinsic", flat}};
}

inline CameraModel camera_from_json(const nlohmann::json& j) {
  const auto flat = j.at("extrinsic").get<std::vector<double>>();
  Eigen::Matrix3d r;
  Eigen::Vector3d t;
  for (int i = 0; i < 3; ++i) {
    for (int k = 0; k < 3; ++k) r(i, k) = flat[i * 4 + k];
    t(i) = flat[i * 4 + 3];
  }
  return {j.at("fx"), j.at("fy"), j.at("cx"),      j.at("cy"),
          j.at("width"), j.at("height"), RigidTransform(r, t, "cam", "base"),
          j.at("id").get<std::string>()};
}

inline void save_bundle(const SceneBundle& bundle, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::json cfg;
  cfg["ground_z"] = bundle.ground_z;

  save_lanes(bundle.lanes, dir + "/lanes.json");
  cfg["map"] = "lanes.json";

  for (size_t si = 0; si < bundle.sensors.size(); ++si) {
    const auto& s = bundle.sensors[si];
    nlohmann::json sj{{"id", s.id}, {"position", {s.position.x, s.position.y, s.position.z}}};
    if (si < bundle.empty_scans.size()) {
      const std::string f = "empty_" + s.id + ".pcd";
      save_pcd(bundle.empty_scans[si], dir + "/" + f, true);
      sj["empty_scan"] = f;
    }
    nlohmann::json frames = nlohmann::json::array();
    for (const auto& frame : bundle.frames) {
      const std::string f = frame.frame_id + "_" + s.id + ".pcd";
      save_pcd(frame.clouds[si], dir + "/" + f, true);
      frames.push_back(f);
    }
    sj["frames"] = frames;
    cfg["sensors"].push_back(sj);
  }

  for (size_t ci = 0; ci < bundle.cameras.size(); ++ci) {
    nlohmann::json cj = camera_to_json(bundle.cameras[ci]);
    std::vector<MaskFrame> mask_frames;
    for (const auto& frame : bundle.frames) {
      if (ci < frame.masks.size()) mask_frames.push_back(frame.masks[ci]);
    }
    const std::string f = "masks_" + bundle.cameras[ci].camera_id + ".json";
    save_mask_frames(mask_frames, dir + "/" + f);
    cj["masks"] = f;
    cfg["cameras"].push_back(cj);
  }

  std::vector<GroundTruthFrame> gt;
  nlohmann::json frame_ids = nlohmann::json::array();
  for (const auto& frame : bundle.frames) {
    gt.push_back(frame.gt);
    frame_ids.push_back(frame.frame_id);
  }
  save_openlabel(gt, dir + "/gt.json");
  cfg["gt"] = "gt.json";
  cfg["frames"] = frame_ids;

  std::ofstream out(dir + "/config.json");
  if (!out) throw std::runtime_error("save_bundle: cannot open " + dir + "/config.json");
  out << cfg.dump(2) << "\n";
}

inline SceneBundle load_bundle(const std::string& dir) {
  std::ifstream in(dir + "/config.json");
  if (!in) throw std::runtime_error("load_bundle: cannot open " + dir + "/config.json");
  nlohmann::json cfg = nlohmann::json::parse(in);
  SceneBundle bundle;
  bundle.ground_z = cfg.value("ground_z", 0.0);
  bundle.lanes = load_lanes(dir + "/" + cfg.at("map").get<std::string>());

  const auto gt = load_openlabel(dir + "/" + cfg.at("gt").get<std::string>());
  std::map<std::string, const GroundTruthFrame*> gt_by_id;
  for (const auto& f : gt) gt_by_id[f.frame_id] = &f;

  const auto frame_ids = cfg.at("frames").get<std::vector<std::string>>();
  bundle.frames.resize(frame_ids.size());
  for (size_t fi = 0; fi < frame_ids.size(); ++fi) {
    bundle.frames[fi].frame_id = frame_ids[fi];
    if (auto it = gt_by_id.find(frame_ids[fi]); it != gt_by_id.end()) {
      bundle.frames[fi].gt = *it->second;
    }
  }

  if (cfg.contains("sensors")) {
    for (const auto& sj : cfg.at("sensors")) {
      SensorSpec s;
      s.id = sj.at("id").get<std::string>();
      const auto& p = sj.at("position");
      s.position = Point3(p.at(0), p.at(1), p.at(2));
      bundle.sensors.push_back(s);
      if (sj.contains("empty_scan")) {
        bundle.empty_scans.push_back(load_pcd(dir + "/" + sj.at("empty_scan").get<std::string>()));
      }
      const auto frames = sj.at("frames").get<std::vector<std::string>>();
      for (size_t fi = 0; fi < frames.size() && fi < bundle.frames.size(); ++fi) {
        bundle.frames[fi].clouds.push_back(load_pcd(dir + "/" + frames[fi]));
      }
    }
  }

  if (cfg.contains("cameras")) {
    for (const auto& cj : cfg.at("cameras")) {
      bundle.cameras.push_back(camera_from_json(cj));
      const auto masks = load_mask_frames(dir + "/" + cj.at("masks").get<std::string>());
      std::map<std::string, const MaskFrame*> by_id;
      for (const auto& m : masks) by_id[m.frame_id] = &m;
      for (auto& frame : bundle.frames) {
        if (auto it = by_id.find(frame.frame_id); it != by_id.end()) {
          frame.masks.push_back(*it->second);
        } else {
          MaskFrame empty;
          empty.frame_id = frame.frame_id;
          empty.camera_id = bundle.cameras.back().camera_id;
          frame.masks.push_back(std::move(empty));
        }
      }
    }
  }
  return bundle;
}

/// Write pipeline outputs (per-stage detections, report JSON + markdown).
inline void save_pipeline_result(const PipelineResult& result, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  if (!result.lidar_frames.empty()) {
    save_detection_frames(result.lidar_frames, dir + "/detections_lidar.json");
  }
  if (!result.camera_frames.empty()) {
    save_detection_frames(result.camera_frames, dir + "/detections_camera.json");
  }
  save_detection_frames(result.fused_frames, dir + "/detections_fused.json");
  if (result.report) {
    std::ofstream rj(dir + "/report.json");
    rj << eval_report_to_json(*result.report).dump(2) << "\n";
    std::ofstream rm(dir + "/report.md");
    rm << eval_report_to_markdown(*result.report);
  }
}

}  // namespace infradet
