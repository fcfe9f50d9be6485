#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace infradet {

constexpr double kPi = 3.14159265358979323846;

/// Normalize an angle into [-pi, pi).
inline double wrap_to_pi(double a) {
  a = std::fmod(a + kPi, 2.0 * kPi);
  if (a < 0.0) a += 2.0 * kPi;
  return a - kPi;
}

/// Normalize an angle into [0, 2*pi).
inline double wrap_to_2pi(double a) {
  a = std::fmod(a, 2.0 * kPi);
  if (a < 0.0) a += 2.0 * kPi;
  return a;
}

/// Fold an angle into [0, pi). Rectangle yaw is pi-periodic.
inline double fold_to_pi(double a) {
  a = std::fmod(a, kPi);
  if (a < 0.0) a += kPi;
  return a;
}

struct Point3 {
  double x{0.0};
  double y{0.0};
  double z{0.0};

  Point3() = default;
  Point3(double x_, double y_, double z_) : x(x_), y(y_), z(z_) {
    if (!std::isfinite(x) || !std::isfinite(y) || !std::isfinite(z)) {
      throw std::invalid_argument("Point3: non-finite component");
    }
  }

  Eigen::Vector3d vec() const { return {x, y, z}; }
  static Point3 from_vec(const Eigen::Vector3d& v) { return {v.x(), v.y(), v.z()}; }

  Point3 operator+(const Point3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Point3 operator-(const Point3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  double norm() const { return std::sqrt(x * x + y * y + z * z); }

  bool operator==(const Point3& o) const { return x == o.x && y == o.y && z == o.z; }
};

inline double distance(const Point3& a, const Point3& b) { return (a - b).norm(); }

/// Rigid SE(3) transform between two named frames.
class RigidTransform {
 public:
  RigidTransform() : rotation_(Eigen::Matrix3d::Identity()) {}

  RigidTransform(const Eigen::Matrix3d& rotation, const Eigen::Vector3d& translation,
                 std::string source_frame = {}, std::string target_frame = {})
      : rotation_(rotation),
        translation_(translation),
        source_frame_(std::move(source_frame)),
        target_frame_(std::move(target_frame)) {
    const double ortho = (rotation_ * rotation_.transpose() - Eigen::Matrix3d::Identity()).norm();
    if (ortho > 1e-6 || std::abs(rotation_.determinant() - 1.0) > 1e-6) {
      throw std::invalid_argument("RigidTransform: rotation is not a proper orthonormal matrix");
    }
  }

  static RigidTransform identity(std::string frame = {}) {
    RigidTransform t;
    t.source_frame_ = frame;
    t.target_frame_ = frame;
    return t;
  }

  static RigidTransform from_yaw(double yaw, const Eigen::Vector3d& translation = Eigen::Vector3d::Zero(),
                                 std::string source_frame = {}, std::string target_frame = {}) {
    Eigen::Matrix3d r = Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitZ()).toRotationMatrix();
    return {r, translation, std::move(source_frame), std::move(target_frame)};
  }

  const Eigen::Matrix3d& rotation() const { return rotation_; }
  const Eigen::Vector3d& translation() const { return translation_; }
  const std::string& source_frame() const { return source_frame_; }
  const std::string& target_frame() const { return target_frame_; }

  RigidTransform inverse() const {
    RigidTransform t;
    t.rotation_ = rotation_.transpose();
    t.translation_ = -(rotation_.transpose() * translation_);
    t.source_frame_ = target_frame_;
    t.target_frame_ = source_frame_;
    return t;
  }

  /// this ∘ other: applies `other` first.
  RigidTransform compose(const RigidTransform& other) const {
    RigidTransform t;
    t.rotation_ = rotation_ * other.rotation_;
    t.translation_ = rotation_ * other.translation_ + translation_;
    t.source_frame_ = other.source_frame_;
    t.target_frame_ = target_frame_;
    return t;
  }

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return rotation_ * p + translation_; }

  Eigen::Matrix4d matrix() const {
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.topLeftCorner<3, 3>() = rotation_;
    m.topRightCorner<3, 1>() = translation_;
    return m;
  }

 private:
  Eigen::Matrix3d rotation_;
  Eigen::Vector3d translation_{Eigen::Vector3d::Zero()};
  std::string source_frame_;
  std::string target_frame_;
};

/// Transform a point, checking frame compatibility when both sides name a frame.
inline Point3 apply_transform(const RigidTransform& t, const Point3& p,
                              const std::string& point_frame = {}) {
  if (!point_frame.empty() && !t.source_frame().empty() && point_frame != t.source_frame()) {
    throw std::invalid_argument("apply_transform: frame mismatch: point in '" + point_frame +
                                "', transform expects '" + t.source_frame() + "'");
  }
  return Point3::from_vec(t.apply(p.vec()));
}

/// Rotation angle (radians) between two rigid transforms.
inline double rotation_error(const RigidTransform& a, const RigidTransform& b) {
  const Eigen::Matrix3d r = a.rotation().transpose() * b.rotation();
  double c = (r.trace() - 1.0) / 2.0;
  c = std::clamp(c, -1.0, 1.0);
  return std::acos(c);
}

inline double translation_error(const RigidTransform& a, const RigidTransform& b) {
  return (a.translation() - b.translation()).norm();
}

/// Pinhole camera with extrinsic camera->world pose.
/// Camera frame convention: +z forward, +x right, +y down.
struct CameraModel {
  double fx{0.0}, fy{0.0}, cx{0.0}, cy{0.0};
  int width{0}, height{0};
  RigidTransform extrinsic;  // camera -> intersection frame
  std::string camera_id;

  CameraModel() = default;
  CameraModel(double fx_, double fy_, double cx_, double cy_, int w, int h,
              RigidTransform ext = {}, std::string id = {})
      : fx(fx_), fy(fy_), cx(cx_), cy(cy_), width(w), height(h), extrinsic(std::move(ext)),
        camera_id(std::move(id)) {
    if (fx <= 0.0 || fy <= 0.0) throw std::invalid_argument("CameraModel: focal lengths must be positive");
    if (cx < 0.0 || cx > w || cy < 0.0 || cy > h) {
      throw std::invalid_argument("CameraModel: principal point outside image bounds");
    }
  }

  Eigen::Vector3d position() const { return extrinsic.translation(); }
};

struct Pixel {
  double u{0.0};
  double v{0.0};
};

/// Project a world-frame point; nullopt when the point is behind the camera.
inline std::optional<Pixel> project_point(const CameraModel& cam, const Point3& p) {
  const Eigen::Vector3d pc = cam.extrinsic.inverse().apply(p.vec());
  if (pc.z() <= 1e-12) return std::nullopt;
  return Pixel{cam.fx * pc.x() / pc.z() + cam.cx, cam.fy * pc.y() / pc.z() + cam.cy};
}

/// Intersect the camera ray through `pixel` with the plane z = ground_z.
inline std::optional<Point3> raycast_to_ground(const CameraModel& cam, const Pixel& pixel,
                                               double ground_z) {
  const Eigen::Vector3d dir_cam((pixel.u - cam.cx) / cam.fx, (pixel.v - cam.cy) / cam.fy, 1.0);
  const Eigen::Vector3d origin = cam.extrinsic.translation();
  const Eigen::Vector3d dir = cam.extrinsic.rotation() * dir_cam;
  if (std::abs(dir.z()) < 1e-12) return std::nullopt;
  const double t = (ground_z - origin.z()) / dir.z();
  if (t <= 0.0) return std::nullopt;
  return Point3::from_vec(origin + t * dir);
}

/// Ground-aligned oriented box; yaw about +z, normalized to [-pi, pi).
struct OrientedBox3 {
  Point3 center;
  double length{0.0};
  double width{0.0};
  double height{0.0};
  double yaw{0.0};

  OrientedBox3() = default;
  OrientedBox3(Point3 c, double l, double w, double h, double yaw_)
      : center(c), length(l), width(w), height(h), yaw(wrap_to_pi(yaw_)) {
    if (l <= 0.0 || w <= 0.0 || h <= 0.0) {
      throw std::invalid_argument("OrientedBox3: dimensions must be positive");
    }
  }

  double volume() const { return length * width * height; }

  /// Footprint corners in the ground plane, counter-clockwise.
  std::array<Eigen::Vector2d, 4> footprint() const {
    const double c = std::cos(yaw), s = std::sin(yaw);
    const Eigen::Vector2d ax(c, s), ay(-s, c);
    const Eigen::Vector2d ctr(center.x, center.y);
    const double hl = length / 2.0, hw = width / 2.0;
    return {ctr + hl * ax + hw * ay, ctr - hl * ax + hw * ay,
            ctr - hl * ax - hw * ay, ctr + hl * ax - hw * ay};
  }

  std::array<Point3, 8> corners() const {
    const auto fp = footprint();
    std::array<Point3, 8> out;
    for (int i = 0; i < 4; ++i) {
      out[i] = Point3(fp[i].x(), fp[i].y(), center.z - height / 2.0);
      out[i + 4] = Point3(fp[i].x(), fp[i].y(), center.z + height / 2.0);
    }
    return out;
  }
};

enum class Category : uint8_t { Car, Truck, Bus, Motorcycle, Pedestrian, Bicycle, Unknown };

inline const char* to_string(Category c) {
  switch (c) {
    case Category::Car: return "Car";
    case Category::Truck: return "Truck";
    case Category::Bus: return "Bus";
    case Category::Motorcycle: return "Motorcycle";
    case Category::Pedestrian: return "Pedestrian";
    case Category::Bicycle: return "Bicycle";
    default: return "Unknown";
  }
}

inline Category category_from_string(const std::string& s) {
  if (s == "Car" || s == "CAR") return Category::Car;
  if (s == "Truck" || s == "TRUCK" || s == "Trailer") return Category::Truck;
  if (s == "Bus" || s == "BUS") return Category::Bus;
  if (s == "Motorcycle" || s == "MOTORCYCLE") return Category::Motorcycle;
  if (s == "Pedestrian" || s == "PEDESTRIAN") return Category::Pedestrian;
  if (s == "Bicycle" || s == "BICYCLE") return Category::Bicycle;
  return Category::Unknown;
}

struct Detection3D {
  OrientedBox3 box;
  Category category{Category::Unknown};
  double score{1.0};
  std::string source;       // sensor that produced the detection
  std::string provenance;   // fusion bookkeeping: raw, fused, unmatched_camera, ...
  int64_t track_id{-1};     // -1 when untracked

  Detection3D() = default;
  Detection3D(OrientedBox3 b, Category c, double s, std::string src = {})
      : box(b), category(c), score(s), source(std::move(src)) {
    if (score < 0.0 || score > 1.0) throw std::invalid_argument("Detection3D: score outside [0,1]");
  }
};

}  // namespace infradet
