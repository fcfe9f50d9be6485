// Command-line front end for the roadside perception pipeline:
// synthetic scene generation, registration, detection, fusion, evaluation.

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>

#include "infradet/eval/pipeline.hpp"

using namespace infradet;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfigError = 1;
constexpr int kExitDataError = 2;
constexpr int kExitInternalError = 3;

int run_synth(uint64_t seed, int objects, int frames, const std::string& output) {
  SceneSpec spec;
  spec.object_count = objects;
  spec.frame_count = frames;
  const SceneBundle bundle = generate_synthetic_scene(seed, spec);
  save_bundle(bundle, output);
  std::cout << "wrote bundle with " << bundle.frames.size() << " frame(s) to " << output << "\n";
  return kExitOk;
}

int run_register(const std::vector<std::string>& pcds, const std::string& output, double voxel) {
  if (pcds.size() < 2) {
    std::cerr << "register: need at least two PCD files\n";
    return kExitConfigError;
  }
  std::vector<PointCloud> clouds;
  for (const auto& p : pcds) clouds.push_back(load_pcd(p));
  const auto merged = register_clouds(clouds, 0, RegistrationParams::from_voxel(voxel));
  std::filesystem::create_directories(output);
  save_pcd(merged.cloud, output + "/merged.pcd", true);
  nlohmann::json results = nlohmann::json::array();
  for (size_t i = 0; i < merged.results.size(); ++i) {
    nlohmann::json rj = registration_result_to_json(merged.results[i]);
    rj["source"] = pcds[i];
    rj["registered"] = static_cast<bool>(merged.registered[i]);
    results.push_back(rj);
  }
  std::ofstream out(output + "/registration.json");
  out << results.dump(2) << "\n";
  std::cout << "merged " << merged.cloud.size() << " points -> " << output << "/merged.pcd\n";
  return kExitOk;
}

PipelineOptions options_from_config(const std::string& bundle_dir) {
  PipelineOptions opt;
  const std::string path = bundle_dir + "/config.json";
  std::ifstream in(path);
  if (in) {
    const nlohmann::json cfg = nlohmann::json::parse(in);
    if (cfg.contains("pipeline")) {
      const auto& p = cfg["pipeline"];
      opt.use_lidar = p.value("use_lidar", opt.use_lidar);
      opt.use_cameras = p.value("use_cameras", opt.use_cameras);
      opt.early_fusion = p.value("early_fusion", opt.early_fusion);
      opt.fov_filter = p.value("fov_filter", opt.fov_filter);
      opt.fusion_gate = p.value("fusion_gate", opt.fusion_gate);
      opt.registration_voxel = p.value("registration_voxel", opt.registration_voxel);
      opt.eval.iou_threshold = p.value("eval_iou_threshold", opt.eval.iou_threshold);
      opt.eval.score_threshold = p.value("eval_score_threshold", opt.eval.score_threshold);
    }
  }
  return opt;
}

int run_full(const std::string& bundle_dir, const std::string& output, bool camera_only,
             bool lidar_only, bool late_fusion) {
  const SceneBundle bundle = load_bundle(bundle_dir);
  PipelineOptions opt = options_from_config(bundle_dir);
  if (camera_only) opt.use_lidar = false;
  if (lidar_only) opt.use_cameras = false;
  if (late_fusion) opt.early_fusion = false;
  const PipelineResult result = run_pipeline(bundle, opt);
  save_pipeline_result(result, output);
  if (result.report) {
    std::cout << eval_report_to_markdown(*result.report);
  }
  std::cout << "results written to " << output << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Roadside multi-sensor 3D perception pipeline"};
  app.require_subcommand(1);

  std::string output = "out";
  uint64_t seed = 42;
  app.add_option("--output", output, "Output directory")->capture_default_str();
  app.add_option("--seed", seed, "Random seed")->capture_default_str();

  auto* synth = app.add_subcommand("synth", "Generate a synthetic scene bundle");
  int objects = 5, frames = 1;
  synth->add_option("--objects", objects, "Object count")->capture_default_str();
  synth->add_option("--frames", frames, "Frame count")->capture_default_str();

  auto* reg = app.add_subcommand("register", "Register PCD files into a merged cloud");
  std::vector<std::string> pcds;
  double voxel = 2.0;
  reg->add_option("pcds", pcds, "PCD files (first is the target)")->required();
  reg->add_option("--voxel", voxel, "Downsampling voxel size (m)")->capture_default_str();

  auto* detect_lidar = app.add_subcommand("detect-lidar", "Unsupervised LiDAR detection on a bundle");
  auto* detect_mono = app.add_subcommand("detect-mono", "Monocular 3D detection on a bundle");
  auto* fuse = app.add_subcommand("fuse", "Full fusion pipeline on a bundle");
  auto* run = app.add_subcommand("run", "Run the configured pipeline on a bundle");
  std::string bundle_dir;
  for (auto* cmd : {detect_lidar, detect_mono, fuse, run}) {
    cmd->add_option("--config", bundle_dir, "Bundle directory (with config.json)")->required();
  }

  auto* eval = app.add_subcommand("eval", "Evaluate detection JSON against OpenLABEL ground truth");
  std::string det_file, gt_file;
  double iou_thr = 0.1, score_thr = 0.0;
  eval->add_option("--detections", det_file, "Detection frames JSON")->required();
  eval->add_option("--gt", gt_file, "OpenLABEL ground truth JSON")->required();
  eval->add_option("--iou", iou_thr, "IoU threshold")->capture_default_str();
  eval->add_option("--score", score_thr, "Score threshold")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // Map CLI11's exit codes onto ours: help is success, bad usage is a
    // configuration error.
    return app.exit(e) == 0 ? kExitOk : kExitConfigError;
  }

  try {
    if (synth->parsed()) return run_synth(seed, objects, frames, output);
    if (reg->parsed()) return run_register(pcds, output, voxel);
    if (detect_lidar->parsed()) return run_full(bundle_dir, output, false, true, false);
    if (detect_mono->parsed()) return run_full(bundle_dir, output, true, false, false);
    if (fuse->parsed() || run->parsed()) return run_full(bundle_dir, output, false, false, false);
    if (eval->parsed()) {
      const auto gt = load_openlabel(gt_file);
      const auto dets = load_detection_frames(det_file);
      EvalParams params;
      params.iou_threshold = iou_thr;
      params.score_threshold = score_thr;
      const EvalReport report = evaluate(gt, dets, params);
      std::filesystem::create_directories(output);
      std::ofstream rj(output + "/report.json");
      rj << eval_report_to_json(report).dump(2) << "\n";
      std::cout << eval_report_to_markdown(report);
      return kExitOk;
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const std::runtime_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitDataError;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternalError;
  }
  return kExitConfigError;
}
