#pragma once

#include <vector>

#include "sforge/scene.hpp"

namespace sforge {

// Wraps an angle to (-pi, pi].
double wrap_angle(double theta);

// Difference a - b wrapped to (-pi, pi].
double angle_diff(double a, double b);

// Forward-Euler unicycle update:
//   x' = x + v cos(theta) dt,  y' = y + v sin(theta) dt,
//   theta' = wrap(theta + yaw_rate dt),  v' = max(0, v + accel dt).
// Requires dt > 0.
AgentState kinematic_step(const AgentState& state, const AgentAction& action, double dt);

// Integrates a sequence of actions; result has actions.size() + 1 states,
// the first being `initial`.
AgentTrack rollout(const AgentState& initial, const std::vector<AgentAction>& actions,
                   double dt);

// Action that reproduces `next` from `state` under kinematic_step, derived
// by finite differences: accel = (v' - v)/dt, yaw_rate = wrap(th' - th)/dt.
AgentAction recover_action(const AgentState& state, const AgentState& next, double dt);

}  // namespace sforge
