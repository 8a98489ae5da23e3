#include "sforge/simulate.hpp"

#include <cmath>

#include "sforge/errors.hpp"
#include "sforge/util.hpp"

namespace sforge {
namespace {

void record_events(const Scenario& scenario, const std::vector<AgentState>& frame, int step,
                   std::vector<SimEvent>* events) {
  const int n = static_cast<int>(frame.size());
  for (int a = 0; a < n; ++a) {
    if (scenario.map.sdf_query(frame[static_cast<size_t>(a)].x,
                               frame[static_cast<size_t>(a)].y) < 0.0) {
      events->push_back({EventKind::kOffRoad, step, a, -1});
    }
    for (int b = a + 1; b < n; ++b) {
      const double d = std::hypot(frame[static_cast<size_t>(a)].x - frame[static_cast<size_t>(b)].x,
                                  frame[static_cast<size_t>(a)].y - frame[static_cast<size_t>(b)].y);
      if (d < scenario.agents[static_cast<size_t>(a)].footprint.radius() +
                  scenario.agents[static_cast<size_t>(b)].footprint.radius()) {
        events->push_back({EventKind::kCollision, step, a, b});
      }
    }
  }
}

}  // namespace

SimulationResult run_closed_loop(const Scenario& scenario,
                                 const std::vector<AgentTrack>& non_ego_futures,
                                 const PlannerConfig& config) {
  config.validate();
  const std::vector<int> non_ego = scenario.non_ego_indices();
  if (non_ego_futures.size() != non_ego.size()) {
    throw ValidationError("run_closed_loop: one future per non-ego agent required");
  }
  for (const AgentTrack& track : non_ego_futures) {
    if (track.size() != static_cast<size_t>(scenario.t_future)) {
      throw ValidationError("run_closed_loop: futures must have t_future states");
    }
    for (const AgentState& s : track) {
      if (!std::isfinite(s.x) || !std::isfinite(s.y) || !std::isfinite(s.heading) ||
          !std::isfinite(s.speed)) {
        throw ValidationError("run_closed_loop: non-finite state in future track");
      }
    }
  }

  size_t ego_index = 0;
  std::vector<VehicleFootprint> footprints;
  std::vector<AgentState> frame;
  for (size_t i = 0; i < scenario.agents.size(); ++i) {
    if (scenario.agents[i].role == Role::kEgo) ego_index = i;
    footprints.push_back(scenario.agents[i].footprint);
    frame.push_back(scenario.agents[i].current());
  }

  SimulationResult result;
  result.states.push_back(frame);
  record_events(scenario, frame, 0, &result.events);

  for (int step = 1; step <= scenario.t_future; ++step) {
    const int remaining = scenario.t_future - step + 1;
    AgentState ego_next;
    const double t0 = now_seconds();
    try {
      const AgentTrack plan =
          plan_ego(scenario.map, frame, footprints, ego_index, remaining, scenario.dt, config);
      ego_next = plan.front();
    } catch (const PlannerError&) {
      result.planner_failed = true;
      result.plan_seconds += now_seconds() - t0;
      return result;
    }
    result.plan_seconds += now_seconds() - t0;

    for (size_t j = 0; j < non_ego.size(); ++j) {
      frame[static_cast<size_t>(non_ego[j])] = non_ego_futures[j][static_cast<size_t>(step - 1)];
    }
    frame[ego_index] = ego_next;
    result.states.push_back(frame);
    record_events(scenario, frame, step, &result.events);
  }
  return result;
}

}  // namespace sforge
