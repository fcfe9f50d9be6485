#pragma once

#include <algorithm>
#include <vector>

#include "infradet/core/geometry.hpp"

namespace infradet {

namespace detail {

inline double polygon_area(const std::vector<Eigen::Vector2d>& poly) {
  double a = 0.0;
  const size_t n = poly.size();
  for (size_t i = 0; i < n; ++i) {
    const auto& p = poly[i];
    const auto& q = poly[(i + 1) % n];
    a += p.x() * q.y() - q.x() * p.y();
  }
  return std::abs(a) / 2.0;
}

/// Sutherland-Hodgman clip of `subject` against convex `clip` (CCW).
inline std::vector<Eigen::Vector2d> clip_convex(std::vector<Eigen::Vector2d> subject,
                                                const std::vector<Eigen::Vector2d>& clip) {
  constexpr double kEps = 1e-9;
  for (size_t i = 0; i < clip.size() && !subject.empty(); ++i) {
    const Eigen::Vector2d a = clip[i];
    const Eigen::Vector2d b = clip[(i + 1) % clip.size()];
    const Eigen::Vector2d edge = b - a;
    std::vector<Eigen::Vector2d> out;
    out.reserve(subject.size() + 4);
    for (size_t j = 0; j < subject.size(); ++j) {
      const Eigen::Vector2d& p = subject[j];
      const Eigen::Vector2d& q = subject[(j + 1) % subject.size()];
      const double dp = edge.x() * (p.y() - a.y()) - edge.y() * (p.x() - a.x());
      const double dq = edge.x() * (q.y() - a.y()) - edge.y() * (q.x() - a.x());
      const bool in_p = dp >= -kEps;
      const bool in_q = dq >= -kEps;
      if (in_p) out.push_back(p);
      if (in_p != in_q) {
        const double t = dp / (dp - dq);
        out.push_back(p + t * (q - p));
      }
    }
    subject = std::move(out);
  }
  return subject;
}

}  // namespace detail

/// Overlap area of two oriented box footprints in the ground plane.
inline double footprint_intersection_area(const OrientedBox3& a, const OrientedBox3& b) {
  const auto fa = a.footprint();
  const auto fb = b.footprint();
  std::vector<Eigen::Vector2d> pa(fa.begin(), fa.end());
  std::vector<Eigen::Vector2d> pb(fb.begin(), fb.end());
  const auto inter = detail::clip_convex(pa, pb);
  if (inter.size() < 3) return 0.0;
  return detail::polygon_area(inter);
}

/// Yaw-aware 3D IoU: footprint polygon intersection times vertical overlap.
inline double iou3d(const OrientedBox3& a, const OrientedBox3& b) {
  const double zlo = std::max(a.center.z - a.height / 2.0, b.center.z - b.height / 2.0);
  const double zhi = std::min(a.center.z + a.height / 2.0, b.center.z + b.height / 2.0);
  const double dz = zhi - zlo;
  if (dz <= 0.0) return 0.0;
  const double inter = footprint_intersection_area(a, b) * dz;
  const double uni = a.volume() + b.volume() - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

/// Axis-aligned 2D IoU on [x1,y1,x2,y2] boxes (screen-space tracking).
struct Box2D {
  double x1{0}, y1{0}, x2{0}, y2{0};
  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return std::max(0.0, width()) * std::max(0.0, height()); }
};

inline double iou2d(const Box2D& a, const Box2D& b) {
  const double w = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double h = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (w <= 0.0 || h <= 0.0) return 0.0;
  const double inter = w * h;
  return inter / (a.area() + b.area() - inter);
}

}  // namespace infradet
