#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <deque>
#include <map>
#include <vector>

#include "infradet/core/geometry.hpp"
#include "infradet/core/iou3d.hpp"
#include "infradet/fusion/lap.hpp"

namespace infradet {

struct TrackerParams {
  double iou_gate{0.3};
  int max_age{3};
  int min_hits{1};

  void validate() const {
    if (iou_gate <= 0.0 || iou_gate >= 1.0) {
      throw std::invalid_argument("TrackerParams: iou_gate must be in (0,1)");
    }
  }
};

inline constexpr size_t kHistoryCapacity = 6;

namespace detail {

/// Constant-velocity Kalman filter over [cx, cy, area, aspect] measurements,
/// SORT reference noise covariances.
class KalmanBox {
 public:
  explicit KalmanBox(const Box2D& box) {
    x_.setZero();
    x_.head<4>() = observe(box);
    p_.setIdentity();
    p_.diagonal().tail<3>().setConstant(1000.0);  // uncertain initial velocities
    p_ *= 10.0;
    f_.setIdentity();
    for (int i = 0; i < 3; ++i) f_(i, i + 4) = 1.0;
    h_.setZero();
    h_.topLeftCorner<4, 4>().setIdentity();
    q_.setIdentity();
    q_(6, 6) = 0.01;
    q_.diagonal().segment<2>(4).setConstant(0.01);
    r_.setIdentity();
    r_.diagonal().tail<2>().setConstant(10.0);
  }

  void predict() {
    if (x_(6) + x_(2) <= 0.0) x_(6) = 0.0;  // area cannot go negative
    x_ = f_ * x_;
    p_ = f_ * p_ * f_.transpose() + q_;
  }

  void update(const Box2D& box) {
    const Eigen::Vector4d z = observe(box);
    const Eigen::Vector4d y = z - h_ * x_;
    const Eigen::Matrix4d s = h_ * p_ * h_.transpose() + r_;
    const Eigen::Matrix<double, 7, 4> k = p_ * h_.transpose() * s.inverse();
    x_ += k * y;
    p_ = (Eigen::Matrix<double, 7, 7>::Identity() - k * h_) * p_;
  }

  Box2D box() const {
    const double area = std::max(x_(2), 1e-6);
    const double ratio = std::max(x_(3), 1e-6);
    const double w = std::sqrt(area * ratio);
    const double h = area / w;
    return {x_(0) - w / 2.0, x_(1) - h / 2.0, x_(0) + w / 2.0, x_(1) + h / 2.0};
  }

 private:
  static Eigen::Vector4d observe(const Box2D& b) {
    const double w = b.width(), h = b.height();
    return {b.x1 + w / 2.0, b.y1 + h / 2.0, w * h, w / std::max(h, 1e-9)};
  }

  Eigen::Matrix<double, 7, 1> x_;
  Eigen::Matrix<double, 7, 7> p_, f_, q_;
  Eigen::Matrix<double, 4, 7> h_;
  Eigen::Matrix4d r_;
};

}  // namespace detail

struct Track {
  int64_t track_id{-1};
  detail::KalmanBox kalman;
  int age{0};
  int hits{0};
  int time_since_update{0};
  std::deque<Point3> history;  // most recent first, capacity kHistoryCapacity

  Track(int64_t id, const Box2D& box) : track_id(id), kalman(box) {}
};

/// Screen-space SORT tracker feeding position history to the historical
/// plausibility scoring.
class SortTracker {
 public:
  explicit SortTracker(TrackerParams params = {}) : params_(params) { params_.validate(); }

  /// Predict all tracks, associate by 2D IoU, spawn tracks for unmatched
  /// boxes and drop stale tracks. Returns one track id per input box.
  std::vector<int64_t> predict_and_match(const std::vector<Box2D>& boxes) {
    for (auto& t : tracks_) {
      t.kalman.predict();
      ++t.age;
      ++t.time_since_update;
    }

    CostMatrix costs(boxes.size(), tracks_.size());
    for (size_t i = 0; i < boxes.size(); ++i) {
      for (size_t j = 0; j < tracks_.size(); ++j) {
        const double iou = iou2d(boxes[i], tracks_[j].kalman.box());
        costs.at(i, j) = iou < params_.iou_gate ? kForbiddenCost : 1.0 - iou;
      }
    }
    const auto assignment = solve_lap(costs);

    std::vector<int64_t> ids(boxes.size(), -1);
    for (const auto& [i, j] : assignment.pairs) {
      Track& t = tracks_[j];
      t.kalman.update(boxes[i]);
      t.time_since_update = 0;
      ++t.hits;
      ids[i] = t.track_id;
    }
    for (int i : assignment.unmatched_rows) {
      tracks_.emplace_back(next_id_++, boxes[i]);
      tracks_.back().hits = 1;
      ids[i] = tracks_.back().track_id;
    }
    std::erase_if(tracks_, [&](const Track& t) { return t.time_since_update > params_.max_age; });
    return ids;
  }

  /// Append a 3D position to the track's ring buffer (capacity 6).
  void commit_position(int64_t track_id, const Point3& position) {
    Track* t = find(track_id);
    if (!t) throw std::invalid_argument("commit_position: unknown track id");
    t->history.push_front(position);
    while (t->history.size() > kHistoryCapacity) t->history.pop_back();
  }

  /// Snapshot of historical positions, most recent first. Unknown ids yield
  /// an empty list so plausibility scoring stays neutral.
  std::vector<Point3> get_history(int64_t track_id) const {
    const Track* t = find(track_id);
    if (!t) return {};
    return {t->history.begin(), t->history.end()};
  }

  const std::vector<Track>& tracks() const { return tracks_; }

 private:
  Track* find(int64_t id) {
    for (auto& t : tracks_)
      if (t.track_id == id) return &t;
    return nullptr;
  }
  const Track* find(int64_t id) const {
    for (const auto& t : tracks_)
      if (t.track_id == id) return &t;
    return nullptr;
  }

  TrackerParams params_;
  std::vector<Track> tracks_;
  int64_t next_id_{0};
};

}  // namespace infradet
