#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "infradet/core/geometry.hpp"

namespace infradet {

struct Lane {
  std::string lane_id;
  std::vector<Point3> left_border;   // ordered in driving direction
  std::vector<Point3> right_border;
};

struct HeadingGridCellEntry {
  std::string lane_id;
  double theta{0.0};  // [0, 2*pi), driving direction
};

struct GridExtent {
  double min_x{0}, min_y{0}, max_x{0}, max_y{0};
};

struct YawHistogramEntry {
  std::string lane_id;
  double mean_theta{0.0};  // circular mean, [0, 2*pi)
  double confidence{0.0};  // hits / max hits
  int hits{0};
};

struct YawHistogram {
  std::vector<YawHistogramEntry> entries;  // sorted by descending confidence
  int total_hits{0};
  bool empty() const { return entries.empty(); }
};

namespace detail {

/// Even-odd point-in-polygon test in the ground plane.
inline bool point_in_polygon(double x, double y, const std::vector<Eigen::Vector2d>& poly) {
  bool inside = false;
  const size_t n = poly.size();
  for (size_t i = 0, j = n - 1; i < n; j = i++) {
    const auto& a = poly[i];
    const auto& b = poly[j];
    if ((a.y() > y) != (b.y() > y)) {
      const double xint = a.x() + (y - a.y()) / (b.y() - a.y()) * (b.x() - a.x());
      if (x < xint) inside = !inside;
    }
  }
  return inside;
}

struct PolylineSampler {
  std::vector<Eigen::Vector2d> pts;
  std::vector<double> cum;  // cumulative arc length
  double total{0.0};

  explicit PolylineSampler(const std::vector<Point3>& border) {
    for (const auto& p : border) pts.emplace_back(p.x, p.y);
    cum.resize(pts.size(), 0.0);
    for (size_t i = 1; i < pts.size(); ++i) {
      cum[i] = cum[i - 1] + (pts[i] - pts[i - 1]).norm();
    }
    total = cum.back();
  }

  /// Normalized arc-length parameter of the closest point on the polyline.
  double closest_param(const Eigen::Vector2d& q) const {
    double best_d2 = std::numeric_limits<double>::infinity();
    double best_s = 0.0;
    for (size_t i = 0; i + 1 < pts.size(); ++i) {
      const Eigen::Vector2d d = pts[i + 1] - pts[i];
      const double len2 = d.squaredNorm();
      double t = len2 > 0.0 ? (q - pts[i]).dot(d) / len2 : 0.0;
      t = std::clamp(t, 0.0, 1.0);
      const Eigen::Vector2d proj = pts[i] + t * d;
      const double d2 = (q - proj).squaredNorm();
      if (d2 < best_d2) {
        best_d2 = d2;
        best_s = cum[i] + t * std::sqrt(len2);
      }
    }
    return total > 0.0 ? best_s / total : 0.0;
  }

  /// Unit tangent at a normalized arc-length parameter.
  Eigen::Vector2d tangent_at(double s_norm) const {
    const double s = std::clamp(s_norm, 0.0, 1.0) * total;
    for (size_t i = 0; i + 1 < pts.size(); ++i) {
      if (s <= cum[i + 1] || i + 2 == pts.size()) {
        Eigen::Vector2d d = pts[i + 1] - pts[i];
        const double n = d.norm();
        return n > 0.0 ? Eigen::Vector2d(d / n) : Eigen::Vector2d(1.0, 0.0);
      }
    }
    return {1.0, 0.0};
  }
};

}  // namespace detail

/// Sparse 10x10 cm rasterization of lane surfaces; each covered cell stores
/// the set of (lane_id, heading) pairs applying there.
class HeadingGrid {
 public:
  HeadingGrid() = default;
  HeadingGrid(const GridExtent& extent, double cell_size)
      : origin_x_(extent.min_x), origin_y_(extent.min_y), cell_size_(cell_size) {
    if (cell_size_ <= 0.0) throw std::invalid_argument("HeadingGrid: cell_size must be positive");
    width_ = static_cast<int>(std::ceil((extent.max_x - extent.min_x) / cell_size_));
    height_ = static_cast<int>(std::ceil((extent.max_y - extent.min_y) / cell_size_));
    if (width_ <= 0 || height_ <= 0) throw std::invalid_argument("HeadingGrid: extent has no area");
  }

  double cell_size() const { return cell_size_; }
  int width() const { return width_; }
  int height() const { return height_; }
  size_t occupied_cells() const { return cells_.size(); }

  void add(int ix, int iy, HeadingGridCellEntry entry) {
    entry.theta = wrap_to_2pi(entry.theta);
    cells_[key(ix, iy)].push_back(std::move(entry));
  }

  /// Entries of the cell containing (x, y); empty outside all lanes.
  const std::vector<HeadingGridCellEntry>& at(double x, double y) const {
    static const std::vector<HeadingGridCellEntry> kEmpty;
    const int ix = static_cast<int>(std::floor((x - origin_x_) / cell_size_));
    const int iy = static_cast<int>(std::floor((y - origin_y_) / cell_size_));
    if (ix < 0 || iy < 0 || ix >= width_ || iy >= height_) return kEmpty;
    const auto it = cells_.find(key(ix, iy));
    return it == cells_.end() ? kEmpty : it->second;
  }

  double cell_center_x(int ix) const { return origin_x_ + (ix + 0.5) * cell_size_; }
  double cell_center_y(int iy) const { return origin_y_ + (iy + 0.5) * cell_size_; }

 private:
  int64_t key(int ix, int iy) const { return static_cast<int64_t>(iy) * width_ + ix; }

  double origin_x_{0}, origin_y_{0};
  double cell_size_{0.1};
  int width_{0}, height_{0};
  std::unordered_map<int64_t, std::vector<HeadingGridCellEntry>> cells_;
};

/// Lane JSON schema:
/// {"lanes": [{"id": "...", "left": [[x,y,z],...], "right": [[x,y,z],...]}],
///  "metadata": {"lane_count": N}}
inline std::vector<Lane> load_lanes(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_lanes: cannot open " + path);
  nlohmann::json j = nlohmann::json::parse(in);
  std::vector<Lane> lanes;
  if (!j.contains("lanes")) return lanes;
  for (const auto& lj : j.at("lanes")) {
    Lane lane;
    lane.lane_id = lj.at("id").get<std::string>();
    for (const auto& p : lj.at("left")) lane.left_border.emplace_back(p.at(0), p.at(1), p.at(2));
    for (const auto& p : lj.at("right")) lane.right_border.emplace_back(p.at(0), p.at(1), p.at(2));
    if (lane.left_border.size() < 2 || lane.right_border.size() < 2) {
      throw std::runtime_error("load_lanes: lane '" + lane.lane_id + "' has a border with < 2 vertices");
    }
    lanes.push_back(std::move(lane));
  }
  return lanes;
}

inline void save_lanes(const std::vector<Lane>& lanes, const std::string& path) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& lane : lanes) {
    nlohmann::json lj{{"id", lane.lane_id}};
    for (const auto& p : lane.left_border) lj["left"].push_back({p.x, p.y, p.z});
    for (const auto& p : lane.right_border) lj["right"].push_back({p.x, p.y, p.z});
    arr.push_back(std::move(lj));
  }
  nlohmann::json j{{"lanes", arr}, {"metadata", {{"lane_count", lanes.size()}}}};
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_lanes: cannot open " + path);
  out << j.dump(2) << "\n";
}

/// Rasterize lanes into a heading grid over `extent`. A cell belongs to a
/// lane when its center falls inside the polygon formed by the left border
/// and the reversed right border; the heading is the average of the two
/// border tangents matched by normalized arc length.
inline HeadingGrid rasterize(const std::vector<Lane>& lanes, const GridExtent& extent,
                             double cell_size = 0.10) {
  HeadingGrid grid(extent, cell_size);
  for (const auto& lane : lanes) {
    std::vector<Eigen::Vector2d> poly;
    for (const auto& p : lane.left_border) poly.emplace_back(p.x, p.y);
    for (auto it = lane.right_border.rbegin(); it != lane.right_border.rend(); ++it) {
      poly.emplace_back(it->x, it->y);
    }
    double lo_x = poly[0].x(), hi_x = poly[0].x(), lo_y = poly[0].y(), hi_y = poly[0].y();
    for (const auto& p : poly) {
      lo_x = std::min(lo_x, p.x());
      hi_x = std::max(hi_x, p.x());
      lo_y = std::min(lo_y, p.y());
      hi_y = std::max(hi_y, p.y());
    }
    const detail::PolylineSampler left(lane.left_border);
    const detail::PolylineSampler right(lane.right_border);

    for (int iy = 0; iy < grid.height(); ++iy) {
      const double cy = grid.cell_center_y(iy);
      if (cy < lo_y || cy > hi_y) continue;
      for (int ix = 0; ix < grid.width(); ++ix) {
        const double cx = grid.cell_center_x(ix);
        if (cx < lo_x || cx > hi_x) continue;
        if (!detail::point_in_polygon(cx, cy, poly)) continue;
        const Eigen::Vector2d q(cx, cy);
        const Eigen::Vector2d tl = left.tangent_at(left.closest_param(q));
        const Eigen::Vector2d tr = right.tangent_at(right.closest_param(q));
        const Eigen::Vector2d sum = tl + tr;
        const double theta = sum.squaredNorm() > 1e-12 ? std::atan2(sum.y(), sum.x())
                                                       : std::atan2(tl.y(), tl.x());
        grid.add(ix, iy, {lane.lane_id, wrap_to_2pi(theta)});
      }
    }
  }
  return grid;
}

/// Aggregate the grid cells under a 3D bottom contour into a per-lane yaw
/// histogram: hit counts, circular-mean heading, and confidences normalized
/// by the maximum hit count.
inline YawHistogram lookup(const HeadingGrid& grid, const std::vector<Point3>& contour) {
  if (contour.empty()) throw std::invalid_argument("lookup: contour must be non-empty");
  struct Acc {
    double sin_sum{0.0}, cos_sum{0.0};
    int hits{0};
  };
  std::map<std::string, Acc> by_lane;
  int total = 0;
  for (const auto& p : contour) {
    for (const auto& e : grid.at(p.x, p.y)) {
      auto& acc = by_lane[e.lane_id];
      acc.sin_sum += std::sin(e.theta);
      acc.cos_sum += std::cos(e.theta);
      ++acc.hits;
      ++total;
    }
  }
  YawHistogram hist;
  hist.total_hits = total;
  int max_hits = 0;
  for (const auto& [id, acc] : by_lane) max_hits = std::max(max_hits, acc.hits);
  for (const auto& [id, acc] : by_lane) {
    YawHistogramEntry e;
    e.lane_id = id;
    e.hits = acc.hits;
    e.mean_theta = wrap_to_2pi(std::atan2(acc.sin_sum, acc.cos_sum));
    e.confidence = static_cast<double>(acc.hits) / max_hits;
    hist.entries.push_back(std::move(e));
  }
  std::sort(hist.entries.begin(), hist.entries.end(), [](const auto& a, const auto& b) {
    if (a.confidence != b.confidence) return a.confidence > b.confidence;
    return a.lane_id < b.lane_id;
  });
  return hist;
}

}  // namespace infradet
