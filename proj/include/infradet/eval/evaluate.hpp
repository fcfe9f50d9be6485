#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "infradet/core/geometry.hpp"
#include "infradet/core/iou3d.hpp"
#include "infradet/fusion/fusion.hpp"

namespace infradet {

struct GroundTruthObject {
  OrientedBox3 box;
  Category category{Category::Unknown};
  std::string object_id;
};

struct GroundTruthFrame {
  std::string frame_id;
  int64_t timestamp_ns{0};
  std::vector<GroundTruthObject> objects;
};

struct EvalParams {
  double iou_threshold{0.1};
  std::vector<Category> classes{Category::Car,        Category::Truck,      Category::Bus,
                                Category::Motorcycle, Category::Pedestrian, Category::Bicycle};
  double score_threshold{0.0};

  void validate() const {
    if (iou_threshold <= 0.0 || iou_threshold > 1.0) {
      throw std::invalid_argument("EvalParams: iou_threshold must be in (0,1]");
    }
  }
};

struct ClassReport {
  Category category{Category::Unknown};
  double ap{0.0};         // percent
  double precision{0.0};  // percent, at the end of the ranked list
  double recall{0.0};     // percent
  int tp{0}, fp{0}, fn{0};
  int gt_count{0};
};

struct EvalReport {
  std::vector<ClassReport> per_class;  // classes present in GT only
  double map{0.0};                     // macro mean over per_class
  std::string interpolation{"all-point precision envelope"};
};

// ---------------------------------------------------------------------------
// OpenLABEL cuboid subset ingestion.
// Cuboid val: [x, y, z, qx, qy, qz, qw, length, width, height].

inline std::vector<GroundTruthFrame> load_openlabel(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_openlabel: cannot open " + path);
  nlohmann::json root = nlohmann::json::parse(in);
  const auto& frames_j = root.at("openlabel").at("frames");
  std::vector<GroundTruthFrame> frames;
  for (const auto& [frame_id, fj] : frames_j.items()) {
    GroundTruthFrame frame;
    frame.frame_id = frame_id;
    if (fj.contains("frame_properties")) {
      frame.timestamp_ns = fj["frame_properties"].value("timestamp", int64_t{0});
    }
    if (fj.contains("objects")) {
      for (const auto& [obj_id, oj] : fj["objects"].items()) {
        try {
          const auto& od = oj.at("object_data");
          const auto& val = od.at("cuboid").at("val");
          if (val.size() != 10) throw std::runtime_error("cuboid val must have 10 entries");
          const double qx = val.at(3), qy = val.at(4), qz = val.at(5), qw = val.at(6);
          const double yaw =
              std::atan2(2.0 * (qw * qz + qx * qy), 1.0 - 2.0 * (qy * qy + qz * qz));
          GroundTruthObject obj;
          obj.object_id = obj_id;
          obj.category = category_from_string(oj.value("type", std::string{"Unknown"}));
          obj.box = OrientedBox3(Point3(val.at(0), val.at(1), val.at(2)), val.at(7), val.at(8),
                                 val.at(9), yaw);
          frame.objects.push_back(std::move(obj));
        } catch (const std::exception& e) {
          throw std::runtime_error("load_openlabel: object '" + obj_id + "' in frame '" +
                                   frame_id + "': " + e.what());
        }
      }
    }
    frames.push_back(std::move(frame));
  }
  std::sort(frames.begin(), frames.end(),
            [](const auto& a, const auto& b) { return a.frame_id < b.frame_id; });
  return frames;
}

inline void save_openlabel(const std::vector<GroundTruthFrame>& frames, const std::string& path) {
  nlohmann::json frames_j = nlohmann::json::object();
  for (const auto& f : frames) {
    nlohmann::json objects = nlohmann::json::object();
    for (const auto& o : f.objects) {
      const double half = o.box.yaw / 2.0;
      objects[o.object_id] = {
          {"type", to_string(o.category)},
          {"object_data",
           {{"cuboid",
             {{"val",
               {o.box.center.x, o.box.center.y, o.box.center.z, 0.0, 0.0, std::sin(half),
                std::cos(half), o.box.length, o.box.width, o.box.height}}}}}}};
    }
    frames_j[f.frame_id] = {{"frame_properties", {{"timestamp", f.timestamp_ns}}},
                            {"objects", objects}};
  }
  nlohmann::json root{{"openlabel", {{"frames", frames_j}}}};
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_openlabel: cannot open " + path);
  out << root.dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// mAP evaluation

namespace detail {

/// Area under the all-point precision envelope of a ranked TP/FP list.
inline double average_precision(const std::vector<char>& is_tp, int gt_count) {
  if (gt_count == 0 || is_tp.empty()) return 0.0;
  std::vector<double> precisions, recalls;
  int tp = 0, fp = 0;
  for (char t : is_tp) {
    t ? ++tp : ++fp;
    precisions.push_back(static_cast<double>(tp) / (tp + fp));
    recalls.push_back(static_cast<double>(tp) / gt_count);
  }
  // precision envelope from the right
  for (int i = static_cast<int>(precisions.size()) - 2; i >= 0; --i) {
    precisions[i] = std::max(precisions[i], precisions[i + 1]);
  }
  double ap = 0.0;
  double prev_recall = 0.0;
  for (size_t i = 0; i < recalls.size(); ++i) {
    ap += (recalls[i] - prev_recall) * precisions[i];
    prev_recall = recalls[i];
  }
  return ap;
}

}  // namespace detail

/// Per-class greedy best-IoU-first matching against ground truth, all-point
/// interpolated AP, macro mAP over classes present in GT.
inline EvalReport evaluate(const std::vector<GroundTruthFrame>& gt,
                           const std::vector<DetectionFrame>& dets, const EvalParams& params) {
  params.validate();
  std::map<std::string, const GroundTruthFrame*> gt_by_id;
  for (const auto& f : gt) gt_by_id[f.frame_id] = &f;
  for (const auto& f : dets) {
    if (!gt_by_id.count(f.frame_id)) {
      throw std::runtime_error("evaluate: detection frame '" + f.frame_id +
                               "' missing from ground truth");
    }
  }

  EvalReport report;
  double ap_sum = 0.0;
  for (Category cls : params.classes) {
    int gt_count = 0;
    for (const auto& f : gt) {
      for (const auto& o : f.objects) {
        if (o.category == cls) ++gt_count;
      }
    }
    if (gt_count == 0) continue;  // class absent from this split

    struct Ranked {
      double score;
      size_t frame;
      size_t det;
    };
    std::vector<Ranked> ranked;
    for (size_t fi = 0; fi < dets.size(); ++fi) {
      for (size_t di = 0; di < dets[fi].detections.size(); ++di) {
        const auto& d = dets[fi].detections[di];
        if (d.category != cls || d.score < params.score_threshold) continue;
        ranked.push_back({d.score, fi, di});
      }
    }
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const Ranked& a, const Ranked& b) { return a.score > b.score; });

    std::map<std::string, std::vector<char>> gt_used;
    for (const auto& f : gt) gt_used[f.frame_id].assign(f.objects.size(), 0);

    std::vector<char> is_tp;
    for (const auto& r : ranked) {
      const auto& d = dets[r.frame].detections[r.det];
      const GroundTruthFrame& gframe = *gt_by_id.at(dets[r.frame].frame_id);
      auto& used = gt_used[gframe.frame_id];
      double best_iou = 0.0;
      int best_gi = -1;
      for (size_t gi = 0; gi < gframe.objects.size(); ++gi) {
        if (used[gi] || gframe.objects[gi].category != cls) continue;
        const double iou = iou3d(d.box, gframe.objects[gi].box);
        if (iou > best_iou) {
          best_iou = iou;
          best_gi = static_cast<int>(gi);
        }
      }
      if (best_gi >= 0 && best_iou >= params.iou_threshold) {
        used[best_gi] = 1;
        is_tp.push_back(1);
      } else {
        is_tp.push_back(0);
      }
    }

    ClassReport cr;
    cr.category = cls;
    cr.gt_count = gt_count;
    cr.tp = static_cast<int>(std::count(is_tp.begin(), is_tp.end(), 1));
    cr.fp = static_cast<int>(is_tp.size()) - cr.tp;
    cr.fn = gt_count - cr.tp;
    cr.ap = 100.0 * detail::average_precision(is_tp, gt_count);
    cr.precision = is_tp.empty() ? 0.0 : 100.0 * cr.tp / static_cast<double>(is_tp.size());
    cr.recall = 100.0 * cr.tp / static_cast<double>(gt_count);
    ap_sum += cr.ap;
    report.per_class.push_back(cr);
  }
  report.map = report.per_class.empty() ? 0.0 : ap_sum / report.per_class.size();
  return report;
}

inline nlohmann::json eval_report_to_json(const EvalReport& r) {
  nlohmann::json classes = nlohmann::json::array();
  for (const auto& c : r.per_class) {
    classes.push_back({{"class", to_string(c.category)},
                       {"ap", c.ap},
                       {"precision", c.precision},
                       {"recall", c.recall},
                       {"tp", c.tp},
                       {"fp", c.fp},
                       {"fn", c.fn},
                       {"gt_count", c.gt_count}});
  }
  return {{"mAP", r.map}, {"interpolation", r.interpolation}, {"classes", classes}};
}

/// Leaderboard-style markdown table (Precision / Recall / AP per class).
inline std::string eval_report_to_markdown(const EvalReport& r) {
  std::ostringstream os;
  os.precision(2);
  os << std::fixed;
  os << "AP interpolation: " << r.interpolation << "\n\n";
  os << "| Class | Precision | Recall | AP |\n|---|---|---|---|\n";
  for (const auto& c : r.per_class) {
    os << "| " << to_string(c.category) << " | " << c.precision << " | " << c.recall << " | "
       << c.ap << " |\n";
  }
  os << "| **mAP** |  |  | **" << r.map << "** |\n";
  return os.str();
}

}  // namespace infradet
