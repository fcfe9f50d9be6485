#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "infradet/hdmap/hdmap.hpp"

using namespace infradet;

namespace {

Lane straight_lane(const std::string& id, double y0, double y1, double x0, double x1) {
  Lane lane;
  lane.lane_id = id;
  lane.left_border = {{x0, y1, 0.0}, {x1, y1, 0.0}};
  lane.right_border = {{x0, y0, 0.0}, {x1, y0, 0.0}};
  return lane;
}

// Quarter-circle arc lane around the origin, radii r0 < r1, CCW driving.
Lane arc_lane(const std::string& id, double r0, double r1, int segments) {
  Lane lane;
  lane.lane_id = id;
  for (int i = 0; i <= segments; ++i) {
    const double a = (kPi / 2.0) * i / segments;
    lane.left_border.push_back({r1 * std::cos(a), r1 * std::sin(a), 0.0});
    lane.right_border.push_back({r0 * std::cos(a), r0 * std::sin(a), 0.0});
  }
  return lane;
}

}  // namespace

TEST_CASE("straight lane rasterizes with heading zero") {
  const Lane lane = straight_lane("straight", 0.0, 4.0, 0.0, 30.0);
  const GridExtent extent{-1.0, -1.0, 31.0, 5.0};
  const HeadingGrid grid = rasterize({lane}, extent, 0.10);
  CHECK(grid.cell_size() == doctest::Approx(0.10));
  // [DERIVED] occupied cell count ~ lane area / cell area = 30*4/0.01 = 12000.
  CHECK(grid.occupied_cells() > 11000);
  CHECK(grid.occupied_cells() < 13000);
  for (double x : {1.0, 10.0, 25.0}) {
    for (double y : {0.5, 2.0, 3.5}) {
      const auto& entries = grid.at(x, y);
      REQUIRE(entries.size() == 1);
      CHECK(entries[0].lane_id == "straight");
      const double t = entries[0].theta;
      CHECK(std::min(t, 2.0 * kPi - t) < 1e-9);
    }
  }
  CHECK(grid.at(-0.5, 2.0).empty());    // before the lane
  CHECK(grid.at(10.0, 4.5).empty());    // beside the lane
  CHECK(grid.at(100.0, 100.0).empty()); // outside the grid
}

TEST_CASE("arc lane headings follow the tangent within 2 degrees") {
  const Lane lane = arc_lane("arc", 18.0, 22.0, 64);
  const GridExtent extent{-1.0, -1.0, 23.0, 23.0};
  const HeadingGrid grid = rasterize({lane}, extent, 0.10);
  CHECK(grid.occupied_cells() > 1000);
  for (double a : {0.2, 0.5, 0.8, 1.1, 1.4}) {
    const double r = 20.0;
    const double x = r * std::cos(a), y = r * std::sin(a);
    const auto& entries = grid.at(x, y);
    REQUIRE(!entries.empty());
    // [DERIVED] CCW tangent at angle a is a + pi/2.
    const double expect = wrap_to_2pi(a + kPi / 2.0);
    const double diff = std::abs(wrap_to_pi(entries[0].theta - expect));
    CHECK(diff < 2.0 * kPi / 180.0);
  }
}

TEST_CASE("lookup over one lane has confidence 1 and the lane heading") {
  const Lane lane = straight_lane("east", 0.0, 4.0, 0.0, 30.0);
  const GridExtent extent{-1.0, -1.0, 31.0, 5.0};
  const HeadingGrid grid = rasterize({lane}, extent, 0.10);
  std::vector<Point3> contour;
  for (double x = 5.0; x <= 9.0; x += 0.2) contour.push_back({x, 2.0, 0.0});
  const YawHistogram hist = lookup(grid, contour);
  REQUIRE(hist.entries.size() == 1);
  CHECK(hist.entries[0].lane_id == "east");
  CHECK(hist.entries[0].confidence == doctest::Approx(1.0));
  CHECK(hist.entries[0].hits == 21);
  CHECK(hist.total_hits == 21);
  const double t = hist.entries[0].mean_theta;
  CHECK(std::min(t, 2.0 * kPi - t) < 1e-9);
}

TEST_CASE("lookup splits hits between overlapping contour and two lanes") {
  // Two adjacent lanes; contour straddles both with a 2:1 hit ratio.
  const Lane a = straight_lane("lane_a", 0.0, 4.0, 0.0, 30.0);
  Lane b = straight_lane("lane_b", 4.0, 8.0, 0.0, 30.0);
  std::reverse(b.left_border.begin(), b.left_border.end());
  std::reverse(b.right_border.begin(), b.right_border.end());
  std::swap(b.left_border, b.right_border);  // westbound lane
  const GridExtent extent{-1.0, -1.0, 31.0, 9.0};
  const HeadingGrid grid = rasterize({a, b}, extent, 0.10);
  std::vector<Point3> contour;
  for (int i = 0; i < 20; ++i) contour.push_back({10.0 + 0.1 * i, 2.0, 0.0});  // lane_a
  for (int i = 0; i < 10; ++i) contour.push_back({10.0 + 0.1 * i, 6.0, 0.0});  // lane_b
  const YawHistogram hist = lookup(grid, contour);
  REQUIRE(hist.entries.size() == 2);
  CHECK(hist.entries[0].lane_id == "lane_a");
  CHECK(hist.entries[0].confidence == doctest::Approx(1.0));
  CHECK(hist.entries[1].lane_id == "lane_b");
  CHECK(hist.entries[1].confidence == doctest::Approx(0.5));
  CHECK(hist.total_hits == 30);
  // lane_b drives west: mean heading pi.
  CHECK(std::abs(wrap_to_pi(hist.entries[1].mean_theta - kPi)) < 1e-9);
}

TEST_CASE("circular mean handles wrap-around at zero") {
  HeadingGrid grid(GridExtent{0.0, 0.0, 1.0, 1.0}, 0.1);
  grid.add(1, 1, {"wrap", 0.1});
  grid.add(1, 1, {"wrap", 2.0 * kPi - 0.1});
  const YawHistogram hist = lookup(grid, {{0.15, 0.15, 0.0}});
  REQUIRE(hist.entries.size() == 1);
  // [DERIVED] circular mean of +-0.1 rad is 0, not pi.
  const double t = hist.entries[0].mean_theta;
  CHECK(std::min(t, 2.0 * kPi - t) < 1e-9);
}

TEST_CASE("lookup rejects empty contour and returns empty off-lane") {
  const Lane lane = straight_lane("only", 0.0, 4.0, 0.0, 10.0);
  const HeadingGrid grid = rasterize({lane}, GridExtent{-1, -1, 11, 5}, 0.10);
  CHECK_THROWS_AS(lookup(grid, {}), std::invalid_argument);
  const YawHistogram hist = lookup(grid, {{100.0, 100.0, 0.0}});
  CHECK(hist.empty());
  CHECK(hist.total_hits == 0);
}

TEST_CASE("lane json round trip with metadata cross-check") {
  const std::vector<Lane> lanes = {straight_lane("l1", 0.0, 4.0, 0.0, 30.0),
                                   arc_lane("l2", 10.0, 14.0, 16)};
  const std::string path =
      (std::filesystem::temp_directory_path() / "lanes_test.json").string();
  save_lanes(lanes, path);
  // metadata lane_count must match the array length
  {
    std::ifstream in(path);
    const nlohmann::json j = nlohmann::json::parse(in);
    CHECK(j.at("metadata").at("lane_count").get<size_t>() == j.at("lanes").size());
  }
  const std::vector<Lane> back = load_lanes(path);
  REQUIRE(back.size() == 2);
  CHECK(back[0].lane_id == "l1");
  CHECK(back[1].lane_id == "l2");
  REQUIRE(back[1].left_border.size() == lanes[1].left_border.size());
  for (size_t i = 0; i < back[1].left_border.size(); ++i) {
    CHECK(distance(back[1].left_border[i], lanes[1].left_border[i]) < 1e-12);
  }
  CHECK_THROWS_AS(load_lanes("/nonexistent/lanes.json"), std::runtime_error);
}

TEST_CASE("load_lanes rejects degenerate borders") {
  const std::string path =
      (std::filesystem::temp_directory_path() / "bad_lanes.json").string();
  {
    std::ofstream out(path);
    out << R"({"lanes":[{"id":"x","left":[[0,0,0]],"right":[[0,1,0],[5,1,0]]}]})";
  }
  CHECK_THROWS_AS(load_lanes(path), std::runtime_error);
}

TEST_CASE("grid constructor validation") {
  CHECK_THROWS_AS(HeadingGrid(GridExtent{0, 0, 10, 10}, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(HeadingGrid(GridExtent{5, 5, 5, 5}, 0.1), std::invalid_argument);
}
