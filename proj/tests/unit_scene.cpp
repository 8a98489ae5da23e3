#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "sforge/errors.hpp"
#include "sforge/kinematics.hpp"
#include "sforge/rng.hpp"
#include "sforge/scene.hpp"
#include "test_helpers.hpp"

using namespace sforge;

TEST_CASE("wrap_angle maps into (-pi, pi]") {
  CHECK(wrap_angle(0.0) == doctest::Approx(0.0));
  CHECK(wrap_angle(M_PI) == doctest::Approx(M_PI));
  CHECK(wrap_angle(-M_PI) == doctest::Approx(M_PI));  // open lower end
  CHECK(wrap_angle(M_PI + 0.1) == doctest::Approx(-M_PI + 0.1));
  CHECK(wrap_angle(3.0 * M_PI) == doctest::Approx(M_PI));
  CHECK(wrap_angle(-7.5 * M_PI) == doctest::Approx(0.5 * M_PI));
  Rng rng(7);
  for (int i = 0; i < 1000; ++i) {
    const double w = wrap_angle(rng.uniform(-50.0, 50.0));
    CHECK(w > -M_PI);
    CHECK(w <= M_PI);
  }
}

TEST_CASE("kinematic_step integrates the unicycle update") {
  const AgentState s{0.0, 0.0, 0.0, 2.0};
  const AgentState n = kinematic_step(s, AgentAction{2.0, 0.0}, 0.5);
  CHECK(n.x == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(n.y == doctest::Approx(0.0));
  CHECK(n.heading == doctest::Approx(0.0));
  CHECK(n.speed == doctest::Approx(3.0).epsilon(1e-15));
}

TEST_CASE("kinematic_step clamps speed at zero") {
  const AgentState s{0.0, 0.0, 1.0, 1.0};
  const AgentState n = kinematic_step(s, AgentAction{-4.0, 0.0}, 0.5);
  CHECK(n.speed == 0.0);
  // Stopped vehicles stay put on further braking.
  const AgentState n2 = kinematic_step(n, AgentAction{-4.0, 0.0}, 0.5);
  CHECK(n2.x == n.x);
  CHECK(n2.y == n.y);
  CHECK(n2.speed == 0.0);
}

TEST_CASE("kinematic_step rejects non-positive dt") {
  CHECK_THROWS_AS(kinematic_step(AgentState{}, AgentAction{}, 0.0), ValidationError);
  CHECK_THROWS_AS(kinematic_step(AgentState{}, AgentAction{}, -0.5), ValidationError);
}

TEST_CASE("rollout with constant yaw rate traces the analytic circle") {
  // Radius v / yaw_rate; fine dt keeps Euler drift below 0.5%.
  struct Case {
    double v, w, radius;
  };
  const Case cases[] = {{2.0, 1.0 / 6.0, 12.0}, {2.0, M_PI / 6.0, 12.0 / M_PI}};
  for (const Case& c : cases) {
    const double dt = 0.01;
    const int steps = 400;
    std::vector<AgentAction> actions(steps, AgentAction{0.0, c.w});
    const AgentTrack track = rollout(AgentState{0.0, 0.0, 0.0, c.v}, actions, dt);
    REQUIRE(track.size() == static_cast<size_t>(steps) + 1);
    // Turning center for a left turn from the origin heading +x.
    const double cx = 0.0, cy = c.radius;
    for (const AgentState& s : track) {
      const double r = std::hypot(s.x - cx, s.y - cy);
      CHECK(std::abs(r - c.radius) < 0.005 * c.radius);
    }
  }
}

TEST_CASE("rollout at coarse dt stays within the Euler radius-growth bound") {
  const double v = 2.0, w = 1.0 / 6.0, dt = 0.5, radius = 12.0;
  const int steps = 12;
  std::vector<AgentAction> actions(steps, AgentAction{0.0, w});
  const AgentTrack track = rollout(AgentState{0.0, 0.0, 0.0, v}, actions, dt);
  // Forward Euler inflates the radius by at most sqrt(1 + n (w dt)^2).
  const double growth = std::sqrt(1.0 + steps * (w * dt) * (w * dt));
  for (const AgentState& s : track) {
    const double r = std::hypot(s.x - 0.0, s.y - radius);
    CHECK(r > radius - 1e-9);
    CHECK(r < radius * growth + 1e-9);
  }
}

TEST_CASE("recovered actions reproduce a random track") {
  Rng rng(42);
  for (int trial = 0; trial < 20; ++trial) {
    const double dt = 0.5;
    AgentState init{rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-3, 3),
                    rng.uniform(0, 8)};
    init.heading = wrap_angle(init.heading);
    std::vector<AgentAction> actions;
    for (int k = 0; k < 12; ++k)
      actions.push_back({rng.uniform(-8, 8), rng.uniform(-1, 1)});
    const AgentTrack track = rollout(init, actions, dt);

    AgentState s = track.front();
    for (size_t k = 0; k + 1 < track.size(); ++k) {
      const AgentAction a = recover_action(track[k], track[k + 1], dt);
      s = kinematic_step(s, a, dt);
      CHECK(std::abs(s.x - track[k + 1].x) < 1e-9);
      CHECK(std::abs(s.y - track[k + 1].y) < 1e-9);
      CHECK(std::abs(angle_diff(s.heading, track[k + 1].heading)) < 1e-9);
      CHECK(std::abs(s.speed - track[k + 1].speed) < 1e-9);
    }
  }
}

TEST_CASE("footprint radius is the circumscribed disc") {
  const VehicleFootprint f{4.0, 2.0};
  CHECK(f.radius() == doctest::Approx(std::sqrt(5.0)).epsilon(1e-14));
}

namespace {

Agent make_agent(int id, Role role, double x, double y, double speed,
                 const SceneMap& /*map*/) {
  Agent a;
  a.id = id;
  a.role = role;
  a.past = testing::straight_past(AgentState{x, y, 0.0, speed}, 4, 0.5);
  return a;
}

}  // namespace

TEST_CASE("select_adversary picks the nearest eligible non-ego agent") {
  Scenario sc;
  sc.map = testing::flat_map(30.0, /*notch_x=*/-6.0, /*notch_y=*/0.0, 2.0);
  sc.agents.push_back(make_agent(0, Role::kEgo, 0.0, 0.0, 5.0, sc.map));
  sc.agents.push_back(make_agent(1, Role::kOther, 5.0, 0.0, 2.0, sc.map));   // eligible
  sc.agents.push_back(make_agent(2, Role::kOther, 3.0, 0.0, 0.0, sc.map));   // stopped
  sc.agents.push_back(make_agent(3, Role::kOther, -6.0, 0.0, 3.0, sc.map));  // off-road
  sc.agents.push_back(make_agent(4, Role::kOther, 0.0, 5.0, 1.0, sc.map));   // tie with 1
  sc.validate_and_normalize();

  const int idx = select_adversary(sc);
  CHECK(sc.agents[static_cast<size_t>(idx)].id == 1);  // tie breaks to smallest id
  CHECK(sc.agents[static_cast<size_t>(idx)].role == Role::kAdversary);
  CHECK(sc.adversary_index() == idx);

  // Re-selection demotes the previous adversary.
  const int again = select_adversary(sc);
  CHECK(again == idx);
  int adversaries = 0;
  for (const Agent& a : sc.agents)
    if (a.role == Role::kAdversary) ++adversaries;
  CHECK(adversaries == 1);
}

TEST_CASE("select_adversary requires an eligible candidate") {
  Scenario sc;
  sc.map = testing::flat_map(20.0);
  sc.agents.push_back(make_agent(0, Role::kEgo, 0.0, 0.0, 5.0, sc.map));
  sc.agents.push_back(make_agent(1, Role::kOther, 4.0, 0.0, 0.0, sc.map));  // stopped
  sc.validate_and_normalize();
  CHECK_THROWS_AS(select_adversary(sc), ValidationError);
}

TEST_CASE("scenario validation enforces structural invariants") {
  Scenario sc;
  sc.map = testing::flat_map(20.0);
  sc.agents.push_back(make_agent(0, Role::kEgo, 0.0, 0.0, 5.0, sc.map));
  sc.agents.push_back(make_agent(1, Role::kOther, 5.0, 0.0, 5.0, sc.map));
  CHECK_NOTHROW(sc.validate_and_normalize());

  SUBCASE("duplicate ids") {
    sc.agents.push_back(make_agent(1, Role::kOther, 8.0, 0.0, 5.0, sc.map));
    CHECK_THROWS_AS(sc.validate_and_normalize(), ValidationError);
  }
  SUBCASE("exactly one ego") {
    sc.agents.push_back(make_agent(2, Role::kEgo, 8.0, 0.0, 5.0, sc.map));
    CHECK_THROWS_AS(sc.validate_and_normalize(), ValidationError);
  }
  SUBCASE("at most one adversary") {
    sc.agents.push_back(make_agent(2, Role::kAdversary, 8.0, 0.0, 5.0, sc.map));
    sc.agents.push_back(make_agent(3, Role::kAdversary, 9.0, 0.0, 5.0, sc.map));
    CHECK_THROWS_AS(sc.validate_and_normalize(), ValidationError);
  }
  SUBCASE("past length must be t_hist + 1") {
    sc.agents[0].past.pop_back();
    CHECK_THROWS_AS(sc.validate_and_normalize(), ValidationError);
  }
  SUBCASE("future length must be t_future") {
    sc.agents[1].future = AgentTrack(5);
    CHECK_THROWS_AS(sc.validate_and_normalize(), ValidationError);
  }
  SUBCASE("agents are sorted by id") {
    std::swap(sc.agents[0], sc.agents[1]);
    sc.validate_and_normalize();
    CHECK(sc.agents[0].id == 0);
    CHECK(sc.agents[1].id == 1);
  }
}
