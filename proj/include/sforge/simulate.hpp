#pragma once

#include <vector>

#include "sforge/planner.hpp"
#include "sforge/scene.hpp"

namespace sforge {

enum class EventKind { kCollision, kOffRoad };

struct SimEvent {
  EventKind kind = EventKind::kCollision;
  int step = 0;       // frame index; 0 is the initial frame
  int agent_a = 0;    // index into scenario.agents
  int agent_b = -1;   // collision partner, -1 for off-road events
};

struct SimulationResult {
  // One frame per step, aligned to scenario.agents; frame 0 holds the
  // current states, frames 1..t_future the closed-loop rollout.
  std::vector<std::vector<AgentState>> states;
  std::vector<SimEvent> events;  // every frame occurrence, in step order
  bool planner_failed = false;   // ego planner gave up; states end early
  double plan_seconds = 0.0;     // wall clock spent inside the ego planner
};

// Rolls the scenario forward for t_future steps: every non-ego agent replays
// its provided future exactly (ascending agent id order, one track per
// non-ego agent, each t_future long), while the ego replans each step from
// the currently observed states and commits the first planned state. Disc
// collisions (center distance below the footprint radius sum) and off-road
// states (negative SDF) are recorded per frame without stopping the run.
// A PlannerError mid-run sets planner_failed instead of propagating.
SimulationResult run_closed_loop(const Scenario& scenario,
                                 const std::vector<AgentTrack>& non_ego_futures,
                                 const PlannerConfig& config);

}  // namespace sforge
