#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "sforge/scenario_gen.hpp"
#include "sforge/errors.hpp"
#include "sforge/kinematics.hpp"
#include "test_helpers.hpp"

using namespace sforge;

namespace {

GeneratorConfig layout_config(RoadLayout layout, int n_agents = 4) {
  GeneratorConfig cfg;
  cfg.layout = layout;
  cfg.n_agents = n_agents;
  return cfg;
}

void check_identical(const Scenario& a, const Scenario& b) {
  REQUIRE(a.agents.size() == b.agents.size());
  CHECK(a.map.rows == b.map.rows);
  CHECK(a.map.cols == b.map.cols);
  CHECK(a.map.origin_x == b.map.origin_x);
  CHECK(a.map.origin_y == b.map.origin_y);
  CHECK(a.map.sdf == b.map.sdf);
  for (size_t i = 0; i < a.agents.size(); ++i) {
    const Agent& x = a.agents[i];
    const Agent& y = b.agents[i];
    CHECK(x.id == y.id);
    CHECK(x.role == y.role);
    CHECK(x.footprint.length == y.footprint.length);
    CHECK(x.footprint.width == y.footprint.width);
    REQUIRE(x.past.size() == y.past.size());
    REQUIRE(x.future.has_value());
    REQUIRE(y.future.has_value());
    REQUIRE(x.future->size() == y.future->size());
    for (size_t t = 0; t < x.past.size(); ++t) {
      CHECK(x.past[t].x == y.past[t].x);
      CHECK(x.past[t].y == y.past[t].y);
      CHECK(x.past[t].heading == y.past[t].heading);
      CHECK(x.past[t].speed == y.past[t].speed);
    }
    for (size_t t = 0; t < x.future->size(); ++t) {
      CHECK((*x.future)[t].x == (*y.future)[t].x);
      CHECK((*x.future)[t].y == (*y.future)[t].y);
      CHECK((*x.future)[t].heading == (*y.future)[t].heading);
      CHECK((*x.future)[t].speed == (*y.future)[t].speed);
    }
  }
}

// Past plus future as one aligned frame sequence.
std::vector<std::vector<AgentState>> all_frames(const Scenario& sc) {
  std::vector<std::vector<AgentState>> frames;
  const size_t steps = sc.agents.front().past.size() + sc.agents.front().future->size();
  for (size_t t = 0; t < steps; ++t) {
    std::vector<AgentState> frame;
    for (const Agent& agent : sc.agents) {
      frame.push_back(t < agent.past.size() ? agent.past[t]
                                            : (*agent.future)[t - agent.past.size()]);
    }
    frames.push_back(std::move(frame));
  }
  return frames;
}

}  // namespace

TEST_CASE("layout names round-trip") {
  for (RoadLayout layout :
       {RoadLayout::kStraight, RoadLayout::kCurve, RoadLayout::kIntersection}) {
    CHECK(layout_from_name(layout_name(layout)) == layout);
  }
  CHECK(layout_name(RoadLayout::kStraight) == "straight");
  CHECK_THROWS_AS(layout_from_name("roundabout"), ValidationError);
}

TEST_CASE("generator config validation") {
  GeneratorConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  auto reject = [](GeneratorConfig c) { CHECK_THROWS_AS(c.validate(), ConfigError); };
  GeneratorConfig c = cfg;
  c.n_agents = 1;
  reject(c);
  c = cfg;
  c.n_agents = 9;
  reject(c);
  c = cfg;
  c.dt = 0.0;
  reject(c);
  c = cfg;
  c.t_hist = 0;
  reject(c);
  c = cfg;
  c.t_future = 0;
  reject(c);
  c = cfg;
  c.lane_width = 0.0;
  reject(c);
  c = cfg;
  c.spawn_span = -1.0;
  reject(c);
  c = cfg;
  c.min_speed = 0.0;
  reject(c);
  c = cfg;
  c.max_speed = c.min_speed - 1.0;
  reject(c);
  c = cfg;
  c.idm.max_accel = 0.0;
  reject(c);
}

TEST_CASE("layout maps are valid and shaped by the lanes") {
  const SceneMap straight = build_layout_map(layout_config(RoadLayout::kStraight));
  CHECK_NOTHROW(straight.validate());
  REQUIRE(straight.centerlines.size() == 2);
  // Two directed lanes offset either side of the road axis.
  CHECK(straight.centerlines[0].y(0) == doctest::Approx(-2.5));
  CHECK(straight.centerlines[0].x(0) < straight.centerlines[0].x(straight.centerlines[0].size() - 1));
  CHECK(straight.centerlines[1].y(0) == doctest::Approx(2.5));
  CHECK(straight.centerlines[1].x(0) > straight.centerlines[1].x(straight.centerlines[1].size() - 1));
  CHECK(straight.sdf_query(0.0, 0.0) > 3.0);
  // Outside the band; the grid border clamp caps how negative it can get.
  CHECK(straight.sdf_query(0.0, 30.0) < -1.0);

  const SceneMap curve = build_layout_map(layout_config(RoadLayout::kCurve));
  CHECK_NOTHROW(curve.validate());
  REQUIRE(curve.centerlines.size() == 2);
  for (const Polyline& lane : curve.centerlines) {
    double x = 0.0, y = 0.0;
    lane.point_at(0.5 * lane.length(), &x, &y);
    CHECK(curve.sdf_query(x, y) > 1.5);
  }
  CHECK(curve.sdf_query(-20.0, 30.0) < -3.0);

  const SceneMap cross = build_layout_map(layout_config(RoadLayout::kIntersection));
  CHECK_NOTHROW(cross.validate());
  REQUIRE(cross.centerlines.size() == 2);
  // Both one-way roads pass through the junction at the origin.
  CHECK(cross.centerlines[0].project(0.0, 0.0).dist < 1e-9);
  CHECK(cross.centerlines[1].project(0.0, 0.0).dist < 1e-9);
  CHECK(cross.sdf_query(0.0, 0.0) > 1.5);
  CHECK(cross.sdf_query(-40.0, -40.0) < -3.0);
}

TEST_CASE("generation is deterministic per seed") {
  const GeneratorConfig cfg;
  const Scenario a = generate_synthetic_scenario(cfg, 7);
  const Scenario b = generate_synthetic_scenario(cfg, 7);
  check_identical(a, b);
  const Scenario c = generate_synthetic_scenario(cfg, 8);
  CHECK(a.agents[0].past[0].speed != c.agents[0].past[0].speed);
}

TEST_CASE("prebuilt map path matches the self-contained path") {
  const GeneratorConfig cfg = layout_config(RoadLayout::kCurve, 3);
  const SceneMap map = build_layout_map(cfg);
  check_identical(generate_synthetic_scenario(cfg, 21),
                  generate_synthetic_scenario(cfg, 21, map));
}

TEST_CASE("generated scenario structure") {
  const GeneratorConfig cfg;
  const Scenario sc = generate_synthetic_scenario(cfg, 3);
  REQUIRE(sc.agents.size() == 4);
  CHECK(sc.dt == cfg.dt);
  CHECK(sc.t_hist == cfg.t_hist);
  CHECK(sc.t_future == cfg.t_future);
  for (size_t i = 0; i < sc.agents.size(); ++i) {
    const Agent& agent = sc.agents[i];
    CHECK(agent.id == static_cast<int>(i));
    CHECK(agent.role == (i == 0 ? Role::kEgo : Role::kOther));
    REQUIRE(agent.past.size() == static_cast<size_t>(cfg.t_hist) + 1);
    REQUIRE(agent.future.has_value());
    REQUIRE(agent.future->size() == static_cast<size_t>(cfg.t_future));
    CHECK(agent.past[0].speed >= cfg.min_speed);
    CHECK(agent.past[0].speed <= cfg.max_speed);
    CHECK(agent.footprint.length >= 4.0);
    CHECK(agent.footprint.length <= 4.4);
    CHECK(agent.footprint.width >= 1.7);
    CHECK(agent.footprint.width <= 1.9);
  }
}

TEST_CASE("tracks obey the motion model with bounded actions") {
  for (uint64_t seed : {3ull, 4ull}) {
    const RoadLayout layout = seed == 3 ? RoadLayout::kStraight : RoadLayout::kCurve;
    const Scenario sc = generate_synthetic_scenario(layout_config(layout), seed);
    for (const Agent& agent : sc.agents) {
      AgentTrack track = agent.past;
      track.insert(track.end(), agent.future->begin(), agent.future->end());
      for (size_t t = 0; t + 1 < track.size(); ++t) {
        const AgentState& a = track[t];
        const AgentState& b = track[t + 1];
        const AgentAction act = recover_action(a, b, sc.dt);
        CHECK(std::abs(act.accel) <= 8.0 + 1e-9);
        CHECK(std::abs(act.yaw_rate) <= 1.0 + 1e-9);
        // The step recurrence must hold exactly on the stored doubles.
        CHECK(b.x == a.x + a.speed * std::cos(a.heading) * sc.dt);
        CHECK(b.y == a.y + a.speed * std::sin(a.heading) * sc.dt);
        // Recovered yaw rates round in the last bit near +-pi.
        CHECK(std::abs(angle_diff(wrap_angle(a.heading + act.yaw_rate * sc.dt), b.heading)) <
              1e-12);
        CHECK(std::abs(std::max(0.0, a.speed + act.accel * sc.dt) - b.speed) < 1e-12);
      }
    }
  }
}

TEST_CASE("no overlaps or off-road states across a corpus") {
  int overlapping_scenes = 0;
  for (RoadLayout layout :
       {RoadLayout::kStraight, RoadLayout::kCurve, RoadLayout::kIntersection}) {
    const GeneratorConfig cfg = layout_config(layout);
    const SceneMap map = build_layout_map(cfg);
    for (uint64_t seed = 0; seed < 60; ++seed) {
      const Scenario sc = generate_synthetic_scenario(cfg, seed, map);
      bool overlap = false;
      for (const std::vector<AgentState>& frame : all_frames(sc)) {
        for (size_t a = 0; a < frame.size(); ++a) {
          CHECK(sc.map.sdf_query(frame[a].x, frame[a].y) > 0.0);
          for (size_t b = a + 1; b < frame.size(); ++b) {
            const double d = std::hypot(frame[a].x - frame[b].x, frame[a].y - frame[b].y);
            if (d < sc.agents[a].footprint.radius() + sc.agents[b].footprint.radius()) {
              overlap = true;
            }
          }
        }
      }
      if (overlap) ++overlapping_scenes;
    }
  }
  CHECK(overlapping_scenes == 0);
}

TEST_CASE("initial spacing keeps agents apart") {
  for (RoadLayout layout :
       {RoadLayout::kStraight, RoadLayout::kCurve, RoadLayout::kIntersection}) {
    const Scenario sc = generate_synthetic_scenario(layout_config(layout, 8), 2);
    const std::vector<AgentState> frame = all_frames(sc).front();
    for (size_t a = 0; a < frame.size(); ++a) {
      for (size_t b = a + 1; b < frame.size(); ++b) {
        CHECK(std::hypot(frame[a].x - frame[b].x, frame[a].y - frame[b].y) >= 5.0 - 1e-9);
      }
    }
  }
}

TEST_CASE("crossing road traffic stays clear of the junction") {
  const Scenario sc = generate_synthetic_scenario(layout_config(RoadLayout::kIntersection, 8), 11);
  for (const Agent& agent : sc.agents) {
    // Agents heading north are on the crossing road; they must never reach
    // the junction area within the horizon.
    if (std::abs(angle_diff(agent.past[0].heading, 0.5 * M_PI)) < 0.1) {
      for (const AgentState& s : agent.past) CHECK(s.y < -8.0);
      for (const AgentState& s : *agent.future) CHECK(s.y < -8.0);
    }
  }
}

TEST_CASE("generation error paths") {
  GeneratorConfig tight;
  tight.spawn_span = 15.0;  // two agents per lane need 20 m
  CHECK_THROWS_AS(generate_synthetic_scenario(tight, 0), GenerationError);
  SceneMap empty_map = build_layout_map(GeneratorConfig{});
  empty_map.centerlines.clear();
  CHECK_THROWS_AS(generate_synthetic_scenario(GeneratorConfig{}, 0, empty_map),
                  ValidationError);
}

TEST_CASE("generated scenarios admit adversary selection") {
  for (RoadLayout layout :
       {RoadLayout::kStraight, RoadLayout::kCurve, RoadLayout::kIntersection}) {
    Scenario sc = generate_synthetic_scenario(layout_config(layout), 5);
    const int pick = select_adversary(sc);
    REQUIRE(pick >= 0);
    CHECK(sc.agents[static_cast<size_t>(pick)].role == Role::kAdversary);
    CHECK(sc.agents[static_cast<size_t>(pick)].id != sc.ego().id);
  }
}
