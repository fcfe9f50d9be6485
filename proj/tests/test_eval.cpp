#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "infradet/eval/evaluate.hpp"
#include "infradet/eval/synth.hpp"

using namespace infradet;

namespace {

GroundTruthFrame gt_frame(const std::string& id,
                          const std::vector<std::pair<Point3, Category>>& objs) {
  GroundTruthFrame f;
  f.frame_id = id;
  int n = 0;
  for (const auto& [c, cat] : objs) {
    GroundTruthObject o;
    o.object_id = "obj_" + std::to_string(n++);
    o.category = cat;
    o.box = OrientedBox3(c, 4.4, 1.8, 1.6, 0.0);
    f.objects.push_back(o);
  }
  return f;
}

DetectionFrame det_frame(const std::string& id,
                         const std::vector<std::tuple<Point3, Category, double>>& objs) {
  DetectionFrame f;
  f.frame_id = id;
  f.source = "test";
  for (const auto& [c, cat, score] : objs) {
    Detection3D d(OrientedBox3(c, 4.4, 1.8, 1.6, 0.0), cat, score, "test");
    f.detections.push_back(d);
  }
  return f;
}

}  // namespace

TEST_CASE("hand-enumerated worked example: AP = 5/6") {
  // [DERIVED] 2 GT cars; ranked detections TP(0.9), FP(0.8), TP(0.7).
  // precision: 1, 1/2, 2/3 ; recall: 1/2, 1/2, 1.
  // envelope: 1, 2/3, 2/3 -> AP = 0.5*1 + 0.5*(2/3) = 5/6.
  const auto gt = gt_frame("f0", {{{0, 0, 0.8}, Category::Car}, {{20, 0, 0.8}, Category::Car}});
  const auto dets = det_frame("f0", {{{0.1, 0, 0.8}, Category::Car, 0.9},
                                     {{50, 50, 0.8}, Category::Car, 0.8},
                                     {{20.1, 0, 0.8}, Category::Car, 0.7}});
  const EvalReport report = evaluate({gt}, {dets}, EvalParams{});
  REQUIRE(report.per_class.size() == 1);
  const auto& cr = report.per_class[0];
  CHECK(cr.ap == doctest::Approx(100.0 * 5.0 / 6.0).epsilon(1e-9));
  CHECK(report.map == doctest::Approx(100.0 * 5.0 / 6.0).epsilon(1e-9));
  CHECK(cr.tp == 2);
  CHECK(cr.fp == 1);
  CHECK(cr.fn == 0);
  CHECK(cr.recall == doctest::Approx(100.0));
  CHECK(cr.precision == doctest::Approx(100.0 * 2.0 / 3.0).epsilon(1e-9));
}

TEST_CASE("detections identical to ground truth give 100/100/100") {
  const auto gt = gt_frame("f0", {{{0, 0, 0.8}, Category::Car},
                                  {{20, 0, 0.8}, Category::Truck},
                                  {{-15, 5, 0.8}, Category::Car}});
  DetectionFrame dets;
  dets.frame_id = "f0";
  for (const auto& o : gt.objects) {
    dets.detections.push_back(Detection3D(o.box, o.category, 1.0, "test"));
  }
  const EvalReport report = evaluate({gt}, {dets}, EvalParams{});
  REQUIRE(report.per_class.size() == 2);  // Car and Truck present in GT
  for (const auto& cr : report.per_class) {
    CHECK(cr.ap == doctest::Approx(100.0));
    CHECK(cr.precision == doctest::Approx(100.0));
    CHECK(cr.recall == doctest::Approx(100.0));
  }
  CHECK(report.map == doctest::Approx(100.0));
}

TEST_CASE("no detections give zero AP, empty GT classes are skipped") {
  const auto gt = gt_frame("f0", {{{0, 0, 0.8}, Category::Car}});
  const EvalReport report = evaluate({gt}, {det_frame("f0", {})}, EvalParams{});
  REQUIRE(report.per_class.size() == 1);
  CHECK(report.per_class[0].category == Category::Car);
  CHECK(report.per_class[0].ap == doctest::Approx(0.0));
  CHECK(report.per_class[0].fn == 1);
  CHECK(report.map == doctest::Approx(0.0));
}

TEST_CASE("AP is invariant under monotone score rescaling") {
  const auto gt = gt_frame("f0", {{{0, 0, 0.8}, Category::Car}, {{20, 0, 0.8}, Category::Car}});
  auto d1 = det_frame("f0", {{{0.1, 0, 0.8}, Category::Car, 0.9},
                             {{50, 50, 0.8}, Category::Car, 0.5},
                             {{20.1, 0, 0.8}, Category::Car, 0.2}});
  auto d2 = det_frame("f0", {{{0.1, 0, 0.8}, Category::Car, 0.99},
                             {{50, 50, 0.8}, Category::Car, 0.98},
                             {{20.1, 0, 0.8}, Category::Car, 0.97}});
  const double a = evaluate({gt}, {d1}, EvalParams{}).map;
  const double b = evaluate({gt}, {d2}, EvalParams{}).map;
  CHECK(a == doctest::Approx(b).epsilon(1e-12));
}

TEST_CASE("evaluate rejects detection frames missing from ground truth") {
  const auto gt = gt_frame("f0", {{{0, 0, 0.8}, Category::Car}});
  CHECK_THROWS_AS(evaluate({gt}, {det_frame("other", {})}, EvalParams{}), std::runtime_error);
  EvalParams bad;
  bad.iou_threshold = 0.0;
  CHECK_THROWS_AS(evaluate({gt}, {}, bad), std::invalid_argument);
}

TEST_CASE("duplicate detections on one object count as FP") {
  const auto gt = gt_frame("f0", {{{0, 0, 0.8}, Category::Car}});
  const auto dets = det_frame("f0", {{{0.05, 0, 0.8}, Category::Car, 0.9},
                                     {{0.10, 0, 0.8}, Category::Car, 0.8}});
  const EvalReport report = evaluate({gt}, {dets}, EvalParams{});
  REQUIRE(report.per_class.size() == 1);
  CHECK(report.per_class[0].tp == 1);
  CHECK(report.per_class[0].fp == 1);
  CHECK(report.per_class[0].ap == doctest::Approx(100.0));  // TP ranked first
}

TEST_CASE("openlabel round trip preserves boxes, categories, yaw") {
  GroundTruthFrame f;
  f.frame_id = "frame_012";
  f.timestamp_ns = 987654321;
  GroundTruthObject o;
  o.object_id = "veh_1";
  o.category = Category::Bus;
  o.box = OrientedBox3({3.5, -7.25, 1.6}, 11.0, 2.6, 3.2, 1.1);
  f.objects.push_back(o);
  const std::string path =
      (std::filesystem::temp_directory_path() / "openlabel_test.json").string();
  save_openlabel({f}, path);
  const auto back = load_openlabel(path);
  REQUIRE(back.size() == 1);
  CHECK(back[0].frame_id == "frame_012");
  CHECK(back[0].timestamp_ns == 987654321);
  REQUIRE(back[0].objects.size() == 1);
  const auto& b = back[0].objects[0];
  CHECK(b.object_id == "veh_1");
  CHECK(b.category == Category::Bus);
  CHECK(distance(b.box.center, o.box.center) < 1e-9);
  CHECK(b.box.length == doctest::Approx(11.0));
  CHECK(b.box.yaw == doctest::Approx(1.1).epsilon(1e-9));
}

TEST_CASE("malformed openlabel names the offending object and frame") {
  const std::string path =
      (std::filesystem::temp_directory_path() / "openlabel_bad.json").string();
  {
    std::ofstream out(path);
    out << R"({"openlabel":{"frames":{"frame_000":{"objects":{"bad_obj":
        {"type":"Car","object_data":{"cuboid":{"val":[1,2,3]}}}}}}}})";
  }
  try {
    load_openlabel(path);
    FAIL("expected a throw");
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("bad_obj") != std::string::npos);
    CHECK(msg.find("frame_000") != std::string::npos);
  }
  CHECK_THROWS_AS(load_openlabel("/nonexistent/gt.json"), std::runtime_error);
}

TEST_CASE("markdown report lists every class and the mAP") {
  const auto gt = gt_frame("f0", {{{0, 0, 0.8}, Category::Car}});
  const auto dets = det_frame("f0", {{{0.1, 0, 0.8}, Category::Car, 0.9}});
  const EvalReport report = evaluate({gt}, {dets}, EvalParams{});
  const std::string md = eval_report_to_markdown(report);
  CHECK(md.find("| Car |") != std::string::npos);
  CHECK(md.find("mAP") != std::string::npos);
  const nlohmann::json j = eval_report_to_json(report);
  CHECK(j.at("mAP").get<double>() == doctest::Approx(report.map));
  CHECK(j.at("classes").size() == report.per_class.size());
}

TEST_CASE("synthetic scene generation is deterministic and seed-sensitive") {
  SceneSpec spec;
  spec.object_count = 4;
  spec.frame_count = 2;
  const SceneBundle a = generate_synthetic_scene(7, spec);
  const SceneBundle b = generate_synthetic_scene(7, spec);
  const SceneBundle c = generate_synthetic_scene(8, spec);
  REQUIRE(a.frames.size() == 2);
  REQUIRE(b.frames.size() == 2);
  REQUIRE(a.frames[0].clouds.size() == a.sensors.size());
  // identical seeds: byte-identical geometry
  for (size_t fi = 0; fi < a.frames.size(); ++fi) {
    REQUIRE(a.frames[fi].clouds[0].size() == b.frames[fi].clouds[0].size());
    for (size_t i = 0; i < a.frames[fi].clouds[0].size(); ++i) {
      CHECK(a.frames[fi].clouds[0].points[i] == b.frames[fi].clouds[0].points[i]);
    }
    REQUIRE(a.frames[fi].gt.objects.size() == b.frames[fi].gt.objects.size());
  }
  // different seed: different object layout
  bool differs = a.frames[0].gt.objects.size() != c.frames[0].gt.objects.size();
  if (!differs) {
    for (size_t i = 0; i < a.frames[0].gt.objects.size(); ++i) {
      if (distance(a.frames[0].gt.objects[i].box.center,
                   c.frames[0].gt.objects[i].box.center) > 1e-9) {
        differs = true;
      }
    }
  }
  CHECK(differs);
}

TEST_CASE("synthetic ground truth objects sit on lanes with lane-consistent yaw") {
  SceneSpec spec;
  spec.object_count = 6;
  const SceneBundle bundle = generate_synthetic_scene(3, spec);
  REQUIRE(!bundle.lanes.empty());
  REQUIRE(!bundle.frames.empty());
  const GridExtent extent{-spec.extent, -spec.extent, spec.extent, spec.extent};
  const HeadingGrid grid = rasterize(bundle.lanes, extent, 0.2);
  for (const auto& o : bundle.frames[0].gt.objects) {
    const auto& entries = grid.at(o.box.center.x, o.box.center.y);
    REQUIRE(!entries.empty());
    const double lane_yaw = fold_to_pi(entries[0].theta);
    const double box_yaw = fold_to_pi(o.box.yaw);
    const double d = std::abs(lane_yaw - box_yaw);
    CHECK(std::min(d, kPi - d) < 1e-6);
    CHECK(o.box.length > 0.0);
    CHECK(o.category != Category::Unknown);
  }
}

TEST_CASE("synthetic masks project inside the image") {
  SceneSpec spec;
  spec.object_count = 5;
  const SceneBundle bundle = generate_synthetic_scene(11, spec);
  REQUIRE(!bundle.cameras.empty());
  const auto& cam = bundle.cameras[0];
  for (const auto& frame : bundle.frames) {
    REQUIRE(frame.masks.size() == bundle.cameras.size());
    for (const auto& m : frame.masks[0].instances) {
      CHECK(m.bbox2d.x1 >= 0.0);
      CHECK(m.bbox2d.y1 >= 0.0);
      CHECK(m.bbox2d.x2 <= cam.width);
      CHECK(m.bbox2d.y2 <= cam.height);
      CHECK(m.polygon.size() >= 3);
    }
  }
}
