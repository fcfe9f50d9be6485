#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "infradet/tracking/sort.hpp"

using namespace infradet;

namespace {

Box2D box_at(double cx, double cy, double w = 60.0, double h = 40.0) {
  return {cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0};
}

}  // namespace

TEST_CASE("new boxes get fresh track ids") {
  SortTracker tracker;
  const auto ids = tracker.predict_and_match({box_at(100, 100), box_at(500, 300)});
  REQUIRE(ids.size() == 2);
  CHECK(ids[0] != ids[1]);
  CHECK(ids[0] >= 0);
  CHECK(ids[1] >= 0);
  CHECK(tracker.tracks().size() == 2);
}

TEST_CASE("a static box keeps its id across frames") {
  SortTracker tracker;
  const auto first = tracker.predict_and_match({box_at(200, 200)});
  for (int f = 0; f < 10; ++f) {
    const auto ids = tracker.predict_and_match({box_at(200, 200)});
    REQUIRE(ids.size() == 1);
    CHECK(ids[0] == first[0]);
  }
  CHECK(tracker.tracks().size() == 1);
}

TEST_CASE("two smoothly moving boxes have zero id switches over 10 frames") {
  SortTracker tracker;
  auto ids0 = tracker.predict_and_match({box_at(100, 100), box_at(800, 400)});
  for (int f = 1; f <= 10; ++f) {
    const auto ids = tracker.predict_and_match(
        {box_at(100.0 + 5.0 * f, 100.0 + 2.0 * f), box_at(800.0 - 6.0 * f, 400.0)});
    REQUIRE(ids.size() == 2);
    CHECK(ids[0] == ids0[0]);
    CHECK(ids[1] == ids0[1]);
  }
}

TEST_CASE("history ring buffer keeps the six most recent positions") {
  SortTracker tracker;
  const auto ids = tracker.predict_and_match({box_at(100, 100)});
  for (int i = 0; i < 7; ++i) {
    tracker.predict_and_match({box_at(100, 100)});
    tracker.commit_position(ids[0], {static_cast<double>(i), 0.0, 0.0});
  }
  const auto history = tracker.get_history(ids[0]);
  REQUIRE(history.size() == kHistoryCapacity);
  // most recent first: 6, 5, 4, 3, 2, 1 (the 0 entry fell out)
  for (size_t k = 0; k < history.size(); ++k) {
    CHECK(history[k].x == doctest::Approx(6.0 - static_cast<double>(k)));
  }
}

TEST_CASE("get_history returns a value snapshot, not a live view") {
  SortTracker tracker;
  const auto ids = tracker.predict_and_match({box_at(100, 100)});
  tracker.commit_position(ids[0], {1.0, 0.0, 0.0});
  const auto snap = tracker.get_history(ids[0]);
  tracker.commit_position(ids[0], {2.0, 0.0, 0.0});
  REQUIRE(snap.size() == 1);
  CHECK(snap[0].x == doctest::Approx(1.0));
  CHECK(tracker.get_history(ids[0]).size() == 2);
}

TEST_CASE("unknown ids: empty history, commit throws") {
  SortTracker tracker;
  CHECK(tracker.get_history(999).empty());
  CHECK_THROWS_AS(tracker.commit_position(999, {0, 0, 0}), std::invalid_argument);
}

TEST_CASE("stale tracks are dropped after max_age misses") {
  TrackerParams params;
  params.max_age = 2;
  SortTracker tracker(params);
  tracker.predict_and_match({box_at(100, 100)});
  for (int f = 0; f < 3; ++f) tracker.predict_and_match({});
  CHECK(tracker.tracks().empty());
}

TEST_CASE("ids are never reused after a track dies") {
  TrackerParams params;
  params.max_age = 1;
  SortTracker tracker(params);
  const auto a = tracker.predict_and_match({box_at(100, 100)});
  tracker.predict_and_match({});
  tracker.predict_and_match({});  // track dropped
  const auto b = tracker.predict_and_match({box_at(100, 100)});
  CHECK(b[0] != a[0]);
  CHECK(b[0] > a[0]);
}

TEST_CASE("distant boxes below the iou gate spawn new tracks") {
  SortTracker tracker;
  const auto a = tracker.predict_and_match({box_at(100, 100)});
  const auto b = tracker.predict_and_match({box_at(700, 500)});
  CHECK(b[0] != a[0]);
  CHECK(tracker.tracks().size() == 2);
}

TEST_CASE("tracker params validation") {
  TrackerParams bad;
  bad.iou_gate = 1.5;
  CHECK_THROWS_AS(SortTracker{bad}, std::invalid_argument);
}
