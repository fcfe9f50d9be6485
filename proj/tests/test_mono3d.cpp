#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "infradet/mono3d/mono3d.hpp"

using namespace infradet;

namespace {

// [DERIVED] independent even-odd point-in-polygon oracle.
bool oracle_inside(const std::vector<Eigen::Vector2d>& poly, double u, double v) {
  bool inside = false;
  const size_t n = poly.size();
  for (size_t i = 0, j = n - 1; i < n; j = i++) {
    const auto& a = poly[i];
    const auto& b = poly[j];
    if ((a.y() > v) != (b.y() > v)) {
      const double x = a.x() + (v - a.y()) / (b.y() - a.y()) * (b.x() - a.x());
      if (u < x) inside = !inside;
    }
  }
  return inside;
}

CameraModel test_camera() {
  CameraModel cam;
  cam.fx = 1000;
  cam.fy = 1000;
  cam.cx = 640;
  cam.cy = 360;
  cam.width = 1280;
  cam.height = 720;
  Eigen::Vector3d fwd(0.0, 0.8, -0.6);
  fwd.normalize();
  Eigen::Vector3d right(1.0, 0.0, 0.0);
  Eigen::Vector3d down = fwd.cross(right).normalized();
  right = down.cross(fwd).normalized();
  Eigen::Matrix3d rot;
  rot.col(0) = right;
  rot.col(1) = down;
  rot.col(2) = fwd;
  cam.extrinsic = RigidTransform(rot, Eigen::Vector3d(0.0, -5.0, 9.0));
  cam.camera_id = "cam_test";
  return cam;
}

// Contour of the two camera-facing edges of a rectangle footprint (an L).
BottomContour3D lshape_contour(const Eigen::Vector2d& center, double length, double width,
                               double yaw, int per_edge, double noise_sigma, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, noise_sigma);
  const Eigen::Vector2d along(std::cos(yaw), std::sin(yaw));
  const Eigen::Vector2d across(-std::sin(yaw), std::cos(yaw));
  BottomContour3D out;
  out.ground_z = 0.0;
  // near long edge (facing -across) and near short edge (facing -along)
  for (int i = 0; i <= per_edge; ++i) {
    const double t = -0.5 + static_cast<double>(i) / per_edge;
    const Eigen::Vector2d p =
        center + t * length * along - 0.5 * width * across +
        Eigen::Vector2d(noise(rng), noise(rng));
    out.points.push_back({p.x(), p.y(), 0.0});
  }
  for (int i = 1; i < per_edge; ++i) {
    const double t = -0.5 + static_cast<double>(i) / per_edge;
    const Eigen::Vector2d p =
        center - 0.5 * length * along + t * width * across +
        Eigen::Vector2d(noise(rng), noise(rng));
    out.points.push_back({p.x(), p.y(), 0.0});
  }
  return out;
}

double yaw_dist(double a, double b) {
  const double d = std::abs(fold_to_pi(a) - fold_to_pi(b));
  return std::min(d, kPi - d);
}

}  // namespace

TEST_CASE("extract_bottom_contour matches full-raster oracle on convex masks") {
  const std::vector<std::vector<Eigen::Vector2d>> polys = {
      {{100.2, 200.7}, {180.9, 195.3}, {185.4, 260.1}, {98.8, 255.6}},
      {{300.0, 300.0}, {340.0, 280.0}, {380.0, 300.0}, {360.0, 350.0}, {320.0, 350.0}},
      {{50.3, 50.6}, {61.2, 50.6}, {61.2, 60.2}, {50.3, 60.2}},
  };
  for (const auto& poly : polys) {
    InstanceMask mask;
    mask.polygon = poly;
    const auto contour = extract_bottom_contour(mask);
    // [DERIVED] raster oracle: per column, lowest pixel center inside polygon.
    std::map<int, double> oracle;
    for (int u = 0; u < 500; ++u) {
      for (int v = 0; v < 500; ++v) {
        if (oracle_inside(poly, u + 0.5, v + 0.5)) {
          oracle[u] = std::max(oracle.count(u) ? oracle[u] : -1.0, v + 0.5);
        }
      }
    }
    REQUIRE(contour.size() == oracle.size());
    for (const auto& px : contour) {
      const int col = static_cast<int>(px.u);
      REQUIRE(oracle.count(col) == 1);
      CHECK(px.v == doctest::Approx(oracle[col]));
    }
  }
  InstanceMask bad;
  bad.polygon = {{0.0, 0.0}, {1.0, 1.0}};
  CHECK_THROWS_AS(extract_bottom_contour(bad), std::invalid_argument);
}

TEST_CASE("ground_contour points lie on the plane and reproject to the pixel") {
  const CameraModel cam = test_camera();
  std::vector<Pixel> pixels;
  for (double u = 200.0; u <= 1000.0; u += 50.0) pixels.push_back({u, 500.0});
  const BottomContour3D contour = ground_contour(pixels, cam, 0.0);
  REQUIRE(contour.points.size() == pixels.size());
  for (size_t i = 0; i < contour.points.size(); ++i) {
    CHECK(contour.points[i].z == doctest::Approx(0.0));
    const auto back = project_point(cam, contour.points[i]);
    REQUIRE(back.has_value());
    CHECK(back->u == doctest::Approx(pixels[i].u).epsilon(1e-6));
    CHECK(back->v == doctest::Approx(pixels[i].v).epsilon(1e-6));
  }
}

TEST_CASE("denoise_contour drops small far clusters") {
  BottomContour3D contour;
  contour.ground_z = 0.0;
  for (int i = 0; i < 30; ++i) contour.points.push_back({5.0 + 0.1 * i, 3.0, 0.0});
  for (int i = 0; i < 4; ++i) contour.points.push_back({40.0 + 0.1 * i, 20.0, 0.0});
  ClusterParams params;  // eps 0.8, min 3
  const BottomContour3D clean = denoise_contour(contour, params);
  CHECK(clean.points.size() == 30);
  for (const auto& p : clean.points) CHECK(p.x < 10.0);
  CHECK_THROWS_AS(denoise_contour(BottomContour3D{}, params), std::invalid_argument);
}

TEST_CASE("delta_angle table and domain") {
  CHECK(delta_angle(0.0) == 0.0);
  CHECK(delta_angle(2.5) == kPi - 2.5);
  CHECK(delta_angle(kPi / 2.0) == kPi / 2.0);
  CHECK(delta_angle(0.3) == doctest::Approx(0.3));
  CHECK(delta_angle(kPi - 0.3) == doctest::Approx(0.3));
  CHECK_THROWS_AS(delta_angle(-0.1), std::invalid_argument);
  CHECK_THROWS_AS(delta_angle(kPi), std::invalid_argument);
}

TEST_CASE("historical plausibility closed-form values") {
  const Point3 pos{0.0, 0.0, 0.0};
  // [PAPER] HP = prod (pi/2 - folded angle to each displacement direction).
  CHECK(historical_plausibility(0.0, pos, {{-1.0, 0.0, 0.0}}) ==
        doctest::Approx(kPi / 2.0).epsilon(1e-12));
  CHECK(historical_plausibility(kPi / 2.0, pos, {{-1.0, 0.0, 0.0}}) ==
        doctest::Approx(0.0));
  CHECK(historical_plausibility(0.0, pos, {{-1.0, 0.0, 0.0}, {-2.0, 0.0, 0.0}}) ==
        doctest::Approx(kPi * kPi / 4.0).epsilon(1e-12));
  // empty history is neutral
  CHECK(historical_plausibility(1.234, pos, {}) == doctest::Approx(1.0));
  // stationary object: neutral-max factor per entry
  CHECK(historical_plausibility(0.7, pos, {{0.01, 0.0, 0.0}}) ==
        doctest::Approx(kPi / 2.0).epsilon(1e-12));
  // 45 degrees off: factor pi/2 - pi/4
  CHECK(historical_plausibility(kPi / 4.0, pos, {{-1.0, 0.0, 0.0}}) ==
        doctest::Approx(kPi / 4.0).epsilon(1e-12));
  CHECK_THROWS_AS(historical_plausibility(0.0, pos, std::vector<Point3>(7, {1, 0, 0})),
                  std::invalid_argument);
}

TEST_CASE("uniform sweep covers [0, pi) at 3 degrees") {
  const auto sweep = uniform_yaw_sweep();
  CHECK(sweep.size() == 60);
  CHECK(sweep.front().theta == doctest::Approx(0.0));
  CHECK(sweep.back().theta < kPi);
  for (size_t i = 1; i < sweep.size(); ++i) {
    CHECK(sweep[i].theta - sweep[i - 1].theta == doctest::Approx(3.0 * kPi / 180.0));
  }
}

TEST_CASE("lshape_fit recovers a clean L at 25 degrees with the basic sweep") {
  const double truth = 25.0 * kPi / 180.0;
  const BottomContour3D contour = lshape_contour({8.0, 12.0}, 4.4, 1.8, truth, 40, 0.0, 1);
  const LShapeResult fit = lshape_fit(contour, {});
  CHECK(yaw_dist(fit.yaw, truth) < 3.0 * kPi / 180.0);
  CHECK(fit.length == doctest::Approx(4.4).epsilon(0.05));
  CHECK(fit.width == doctest::Approx(1.8).epsilon(0.1));
  CHECK(fit.center.x() == doctest::Approx(8.0).epsilon(0.05));
  CHECK(fit.center.y() == doctest::Approx(12.0).epsilon(0.05));
  CHECK(fit.score > 0.0);
  CHECK(fit.score <= 1.0);
  CHECK_FALSE(fit.degenerate);
}

TEST_CASE("lshape_fit with an exact map hypothesis beats sweep granularity") {
  const double truth = 25.0 * kPi / 180.0;
  const BottomContour3D contour = lshape_contour({8.0, 12.0}, 4.4, 1.8, truth, 40, 0.01, 2);
  std::vector<YawHypothesis> hyps = {{truth, 1.0, "lane_x", truth},
                                     {fold_to_pi(truth + 0.5), 0.4, "lane_y", truth + 0.5}};
  const LShapeResult fit = lshape_fit(contour, hyps);
  CHECK(fit.yaw == doctest::Approx(truth));
  CHECK(fit.lane_id == "lane_x");
  CHECK(fit.driving_theta == doctest::Approx(truth));
}

TEST_CASE("lshape_fit HP steers the choice between two symmetric hypotheses") {
  // A square contour cannot disambiguate 25 vs 115 degrees; history can.
  const double truth = 25.0 * kPi / 180.0;
  const BottomContour3D contour = lshape_contour({0.0, 0.0}, 2.0, 2.0, truth, 30, 0.0, 3);
  std::vector<YawHypothesis> hyps = {{truth, 1.0, "a", truth},
                                     {fold_to_pi(truth + kPi / 2.0), 1.0, "b", truth + kPi / 2.0}};
  const std::vector<Point3> history = {
      {-std::cos(truth), -std::sin(truth), 0.0}};  // moved along `truth`
  const HpFunction hp = [&](double theta, const Point3& center) {
    return historical_plausibility(theta, center, history);
  };
  const LShapeResult fit = lshape_fit(contour, hyps, hp);
  CHECK(yaw_dist(fit.yaw, truth) < 1e-9);
}

TEST_CASE("lshape_fit swaps so that length >= width") {
  const double truth = 80.0 * kPi / 180.0;
  const BottomContour3D contour = lshape_contour({3.0, 4.0}, 4.0, 1.6, truth, 40, 0.0, 4);
  const LShapeResult fit = lshape_fit(contour, {});
  CHECK(fit.length >= fit.width);
  CHECK_THROWS_AS(lshape_fit(BottomContour3D{}, {}), std::invalid_argument);
}

TEST_CASE("height search reproduces a forward-rendered box height") {
  const CameraModel cam = test_camera();
  const double true_h = 1.62;
  const OrientedBox3 truth({2.0, 18.0, true_h / 2.0}, 4.4, 1.8, true_h, 0.4);
  double v_min = 1e30, v_max = -1e30, u_min = 1e30, u_max = -1e30;
  for (const auto& c : truth.corners()) {
    const auto px = project_point(cam, c);
    REQUIRE(px.has_value());
    v_min = std::min(v_min, px->v);
    v_max = std::max(v_max, px->v);
    u_min = std::min(u_min, px->u);
    u_max = std::max(u_max, px->u);
  }
  InstanceMask mask;
  mask.category = Category::Car;
  mask.bbox2d = {u_min, v_min, u_max, v_max};
  LShapeResult shape;
  shape.center = {2.0, 18.0};
  shape.length = 4.4;
  shape.width = 1.8;
  shape.yaw = 0.4;
  const auto& bounds = default_dimension_bounds().at(Category::Car);
  const HeightEstimate est =
      estimate_height_and_location(shape, mask, cam, HeightSearchParams{}, bounds, 0.0);
  CHECK(est.converged);
  CHECK(est.residual_px < 1.0);
  CHECK(std::abs(est.box.height - true_h) / true_h < 0.05);
  CHECK(est.box.center.z == doctest::Approx(est.box.height / 2.0));
  CHECK_THROWS_AS(estimate_height_and_location(shape, mask, cam, HeightSearchParams{0.0, 10},
                                               bounds, 0.0),
                  std::invalid_argument);
}

TEST_CASE("clamp_dimensions clamps into category bounds") {
  const auto& bounds = default_dimension_bounds().at(Category::Car);
  const OrientedBox3 big({0, 0, 1}, 10.0, 3.5, 3.0, 0.1);
  const OrientedBox3 clamped = clamp_dimensions(big, bounds);
  CHECK(clamped.length == doctest::Approx(bounds.length_max));
  CHECK(clamped.width == doctest::Approx(bounds.width_max));
  CHECK(clamped.height == doctest::Approx(bounds.height_max));
  CHECK(clamped.yaw == doctest::Approx(big.yaw));
}

TEST_CASE("mask frame json round trip") {
  MaskFrame f;
  f.frame_id = "frame_004";
  f.camera_id = "cam_test";
  InstanceMask m;
  m.category = Category::Truck;
  m.score = 0.87;
  m.bbox2d = {10.0, 20.0, 110.0, 220.0};
  m.polygon = {{10.0, 20.0}, {110.0, 20.0}, {110.0, 220.0}, {10.0, 220.0}};
  f.instances.push_back(m);
  const MaskFrame back = mask_frame_from_json(mask_frame_to_json(f));
  CHECK(back.frame_id == f.frame_id);
  CHECK(back.camera_id == f.camera_id);
  REQUIRE(back.instances.size() == 1);
  CHECK(back.instances[0].category == Category::Truck);
  CHECK(back.instances[0].score == doctest::Approx(0.87));
  CHECK(back.instances[0].bbox2d.x2 == doctest::Approx(110.0));
  REQUIRE(back.instances[0].polygon.size() == 4);
}

TEST_CASE("detect_mono produces a plausible box for a rendered vehicle") {
  const CameraModel cam = test_camera();
  const OrientedBox3 truth({1.0, 16.0, 0.8}, 4.4, 1.8, 1.6, 0.2);
  std::vector<Eigen::Vector2d> poly;
  // convex hull of projected corners as the mask polygon
  std::vector<Eigen::Vector2d> pts;
  for (const auto& c : truth.corners()) {
    const auto px = project_point(cam, c);
    REQUIRE(px.has_value());
    pts.emplace_back(px->u, px->v);
  }
  // simple gift-wrap via sort by angle around centroid (convex enough here)
  Eigen::Vector2d ctr = Eigen::Vector2d::Zero();
  for (const auto& p : pts) ctr += p;
  ctr /= pts.size();
  std::sort(pts.begin(), pts.end(), [&](const auto& a, const auto& b) {
    return std::atan2(a.y() - ctr.y(), a.x() - ctr.x()) <
           std::atan2(b.y() - ctr.y(), b.x() - ctr.x());
  });
  InstanceMask mask;
  mask.category = Category::Car;
  mask.score = 0.9;
  mask.polygon = pts;
  double u1 = 1e30, v1 = 1e30, u2 = -1e30, v2 = -1e30;
  for (const auto& p : pts) {
    u1 = std::min(u1, p.x());
    v1 = std::min(v1, p.y());
    u2 = std::max(u2, p.x());
    v2 = std::max(v2, p.y());
  }
  mask.bbox2d = {u1, v1, u2, v2};

  Mono3dConfig cfg;
  const auto dets = detect_mono({mask}, cam, nullptr, nullptr, cfg);
  REQUIRE(dets.size() == 1);
  CHECK(dets[0].category == Category::Car);
  CHECK(dets[0].source == "cam_test");
  // Monocular box from the mask silhouette: centers within ~2 m.
  CHECK(std::abs(dets[0].box.center.x - truth.center.x) < 2.0);
  CHECK(std::abs(dets[0].box.center.y - truth.center.y) < 2.5);
}
