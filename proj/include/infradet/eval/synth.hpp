#pragma once

#include <random>
#include <vector>

#include "infradet/core/geometry.hpp"
#include "infradet/eval/evaluate.hpp"
#include "infradet/hdmap/hdmap.hpp"
#include "infradet/lidar/detector.hpp"
#include "infradet/mono3d/mono3d.hpp"
#include "infradet/pcl/pointcloud.hpp"

namespace infradet {

struct SensorSpec {
  std::string id;
  Point3 position;
};

struct SceneSpec {
  int object_count{5};
  int frame_count{1};
  double noise_sigma{0.02};
  double object_speed{2.0};       // meters per frame along the lane
  int points_per_object{400};     // for a car-sized (~25 m^2) surface; scaled by area
  int ground_points{4000};
  int wall_points{2000};
  double extent{40.0};            // half-size of the square scene
  std::vector<SensorSpec> sensors{{"lidar_south", Point3(0.0, -10.0, 6.0)},
                                  {"lidar_north", Point3(0.0, 10.0, 6.0)}};
  bool with_cameras{true};
};

struct SyntheticFrame {
  std::string frame_id;
  std::vector<PointCloud> clouds;  // one per sensor, intersection frame
  std::vector<MaskFrame> masks;    // one per camera
  GroundTruthFrame gt;
};

struct SceneBundle {
  std::vector<Lane> lanes;
  std::vector<SensorSpec> sensors;
  std::vector<CameraModel> cameras;
  std::vector<SyntheticFrame> frames;
  std::vector<PointCloud> empty_scans;  // per sensor, for background models
  double ground_z{0.0};
};

namespace detail {

struct SynthObject {
  Category category;
  double length, width, height;
  int lane;         // index into bundle.lanes
  double s;         // arc position along the lane center
  double direction; // lane heading
};

inline Lane make_straight_lane(const std::string& id, const Eigen::Vector2d& from,
                               const Eigen::Vector2d& to, double width) {
  const Eigen::Vector2d d = (to - from).normalized();
  const Eigen::Vector2d left(-d.y(), d.x());
  Lane lane;
  lane.lane_id = id;
  const double hw = width / 2.0;
  for (double t : {0.0, 0.5, 1.0}) {
    const Eigen::Vector2d c = from + t * (to - from);
    lane.left_border.emplace_back(c.x() + hw * left.x(), c.y() + hw * left.y(), 0.0);
    lane.right_border.emplace_back(c.x() - hw * left.x(), c.y() - hw * left.y(), 0.0);
  }
  return lane;
}

inline void sample_box_surface(const OrientedBox3& box, int n, double sigma, std::mt19937_64& rng,
                               PointCloud& out) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, sigma);
  const double c = std::cos(box.yaw), s = std::sin(box.yaw);
  const double hl = box.length / 2.0, hw = box.width / 2.0, hh = box.height / 2.0;
  // faces: +-x, +-y (local), top; weights by area
  const double a_side_x = box.width * box.height;
  const double a_side_y = box.length * box.height;
  const double a_top = box.length * box.width;
  const double total = 2.0 * a_side_x + 2.0 * a_side_y + a_top;
  for (int i = 0; i < n; ++i) {
    const double pick = u01(rng) * total;
    double lx, ly, lz;
    if (pick < 2.0 * a_side_x) {
      lx = pick < a_side_x ? hl : -hl;
      ly = (u01(rng) * 2.0 - 1.0) * hw;
      lz = (u01(rng) * 2.0 - 1.0) * hh;
    } else if (pick < 2.0 * a_side_x + 2.0 * a_side_y) {
      ly = pick < 2.0 * a_side_x + a_side_y ? hw : -hw;
      lx = (u01(rng) * 2.0 - 1.0) * hl;
      lz = (u01(rng) * 2.0 - 1.0) * hh;
    } else {
      lz = hh;
      lx = (u01(rng) * 2.0 - 1.0) * hl;
      ly = (u01(rng) * 2.0 - 1.0) * hw;
    }
    const double wx = box.center.x + c * lx - s * ly + noise(rng);
    const double wy = box.center.y + s * lx + c * ly + noise(rng);
    const double wz = box.center.z + lz + noise(rng);
    out.points.emplace_back(wx, wy, wz);
  }
}

inline void sample_static_scene(const SceneSpec& spec, double sigma, std::mt19937_64& rng,
                                PointCloud& out) {
  std::uniform_real_distribution<double> ux(-spec.extent, spec.extent);
  std::normal_distribution<double> noise(0.0, sigma);
  for (int i = 0; i < spec.ground_points; ++i) {
    out.points.emplace_back(ux(rng), ux(rng), noise(rng) * 0.5);
  }
  // static wall along the +x edge of the scene
  std::uniform_real_distribution<double> uz(0.0, 4.0);
  for (int i = 0; i < spec.wall_points; ++i) {
    out.points.emplace_back(spec.extent + noise(rng), ux(rng), uz(rng));
  }
}

inline CameraModel make_camera(const std::string& id, const Point3& eye, const Point3& target) {
  const Eigen::Vector3d f = (target.vec() - eye.vec()).normalized();
  Eigen::Vector3d right = f.cross(Eigen::Vector3d::UnitZ());
  if (right.norm() < 1e-6) right = Eigen::Vector3d::UnitX();
  right.normalize();
  const Eigen::Vector3d down = f.cross(right).normalized();
  Eigen::Matrix3d r;
  r.col(0) = right;
  r.col(1) = down;
  r.col(2) = f;
  return {1000.0, 1000.0, 640.0, 360.0, 1280, 720, RigidTransform(r, eye.vec(), "cam", "base"), id};
}

inline std::pair<Category, std::array<double, 3>> sample_object_shape(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> pick(0, 5);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const auto lerp = [&](double lo, double hi) { return lo + u01(rng) * (hi - lo); };
  switch (pick(rng)) {
    case 0: return {Category::Car, {lerp(4.0, 5.2), lerp(1.7, 2.0), lerp(1.4, 1.8)}};
    case 1: return {Category::Truck, {lerp(5.8, 7.5), lerp(2.3, 2.6), lerp(2.8, 3.4)}};
    case 2: return {Category::Bus, {lerp(10.5, 13.0), lerp(2.5, 2.9), lerp(3.0, 3.8)}};
    case 3: return {Category::Motorcycle, {lerp(1.9, 2.3), lerp(0.7, 0.9), lerp(1.2, 1.5)}};
    case 4: return {Category::Pedestrian, {lerp(0.4, 0.6), lerp(0.4, 0.6), lerp(1.6, 1.9)}};
    default: return {Category::Bicycle, {lerp(1.5, 1.9), lerp(0.4, 0.5), lerp(1.0, 1.4)}};
  }
}

}  // namespace detail

/// Deterministic synthetic intersection: objects placed on lanes with
/// lane-consistent yaw, LiDAR clouds from box surfaces plus ground and a
/// static wall, instance masks from projected box silhouettes, full ground
/// truth recorded. A pure function of (seed, spec).
inline SceneBundle generate_synthetic_scene(uint64_t seed, const SceneSpec& spec) {
  if (spec.object_count < 0 || spec.frame_count < 1) {
    throw std::invalid_argument("generate_synthetic_scene: bad spec");
  }
  std::mt19937_64 rng(seed);
  SceneBundle bundle;
  bundle.sensors = spec.sensors;
  const double e = spec.extent;
  bundle.lanes.push_back(detail::make_straight_lane("lane_east", {-e, 0.0}, {e, 0.0}, 4.0));
  bundle.lanes.push_back(detail::make_straight_lane("lane_west", {e, 8.0}, {-e, 8.0}, 4.0));
  bundle.lanes.push_back(detail::make_straight_lane("lane_north", {16.0, -e}, {16.0, e}, 4.0));

  if (spec.with_cameras) {
    bundle.cameras.push_back(
        detail::make_camera("cam_south", Point3(2.0, -28.0, 9.0), Point3(4.0, 4.0, 0.0)));
  }

  // objects: fixed lane and arc spacing, constant speed along the lane
  const std::array<Eigen::Vector2d, 3> lane_from{{{-e, 0.0}, {e, 8.0}, {16.0, -e}}};
  const std::array<Eigen::Vector2d, 3> lane_dir{{{1.0, 0.0}, {-1.0, 0.0}, {0.0, 1.0}}};
  std::vector<detail::SynthObject> objects;
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::vector<double> next_s{0.0, 0.0, 0.0};
  for (int i = 0; i < spec.object_count; ++i) {
    detail::SynthObject obj;
    const auto [cat, dims] = detail::sample_object_shape(rng);
    obj.category = cat;
    obj.length = dims[0];
    obj.width = dims[1];
    obj.height = dims[2];
    obj.lane = i % 3;
    next_s[obj.lane] += 16.0 + u01(rng) * 6.0;
    obj.s = next_s[obj.lane];
    obj.direction = std::atan2(lane_dir[obj.lane].y(), lane_dir[obj.lane].x());
    objects.push_back(obj);
  }

  for (size_t si = 0; si < spec.sensors.size(); ++si) {
    PointCloud empty;
    empty.frame = "base";
    detail::sample_static_scene(spec, spec.noise_sigma, rng, empty);
    bundle.empty_scans.push_back(std::move(empty));
  }

  for (int fi = 0; fi < spec.frame_count; ++fi) {
    SyntheticFrame frame;
    frame.frame_id = "frame_" + std::string(3 - std::to_string(fi).size(), '0') + std::to_string(fi);
    frame.gt.frame_id = frame.frame_id;
    frame.gt.timestamp_ns = fi * 100000000LL;

    std::vector<OrientedBox3> boxes;
    for (size_t oi = 0; oi < objects.size(); ++oi) {
      const auto& obj = objects[oi];
      const double s = obj.s + fi * spec.object_speed;
      const Eigen::Vector2d c = lane_from[obj.lane] + s * lane_dir[obj.lane];
      if (std::abs(c.x()) > e - 4.0 || std::abs(c.y()) > e - 4.0) continue;  // left the scene
      const OrientedBox3 box(Point3(c.x(), c.y(), obj.height / 2.0), obj.length, obj.width,
                             obj.height, obj.direction);
      boxes.push_back(box);
      GroundTruthObject gto;
      gto.box = box;
      gto.category = obj.category;
      gto.object_id = "obj_" + std::to_string(oi);
      frame.gt.objects.push_back(std::move(gto));
    }

    for (size_t si = 0; si < spec.sensors.size(); ++si) {
      PointCloud cloud;
      cloud.frame = "base";
      cloud.timestamp_ns = frame.gt.timestamp_ns;
      detail::sample_static_scene(spec, spec.noise_sigma, rng, cloud);
      for (const auto& box : boxes) {
        // Keep surface density roughly constant across categories: a bus has
        // ~5x the sampled area of a car and needs proportionally more points
        // to survive the detector's radius-outlier filter, as it would with a
        // real scanning LiDAR.
        const double area = 2.0 * box.width * box.height + 2.0 * box.length * box.height +
                            box.length * box.width;
        const int n = std::max(spec.points_per_object,
                               static_cast<int>(spec.points_per_object * area / 25.0));
        detail::sample_box_surface(box, n, spec.noise_sigma, rng, cloud);
      }
      frame.clouds.push_back(std::move(cloud));
    }

    for (const auto& cam : bundle.cameras) {
      MaskFrame mf;
      mf.frame_id = frame.frame_id;
      mf.camera_id = cam.camera_id;
      for (size_t bi = 0; bi < boxes.size(); ++bi) {
        std::vector<Eigen::Vector2d> pts;
        bool visible = true;
        for (const auto& corner : boxes[bi].corners()) {
          const auto px = project_point(cam, corner);
          if (!px || px->u < 0.0 || px->u >= cam.width || px->v < 0.0 || px->v >= cam.height) {
            visible = false;
            break;
          }
          pts.emplace_back(px->u, px->v);
        }
        if (!visible) continue;
        auto hull = detail::convex_hull_2d(pts);
        if (hull.size() < 3) continue;
        InstanceMask mask;
        mask.frame_id = frame.frame_id;
        mask.category = frame.gt.objects[bi].category;
        mask.score = 1.0;
        mask.polygon = hull;
        double x1 = hull[0].x(), x2 = x1, y1 = hull[0].y(), y2 = y1;
        for (const auto& p : hull) {
          x1 = std::min(x1, p.x());
          x2 = std::max(x2, p.x());
          y1 = std::min(y1, p.y());
          y2 = std::max(y2, p.y());
        }
        mask.bbox2d = {x1, y1, x2, y2};
        mf.instances.push_back(std::move(mask));
      }
      frame.masks.push_back(std::move(mf));
    }
    bundle.frames.push_back(std::move(frame));
  }
  return bundle;
}

}  // namespace infradet
