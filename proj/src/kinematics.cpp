#include "sforge/kinematics.hpp"

#include <cmath>

#include "sforge/errors.hpp"

namespace sforge {

double wrap_angle(double theta) {
  // remainder() lands in [-pi, pi]; shift the open end so -pi maps to pi.
  double w = std::remainder(theta, 2.0 * M_PI);
  if (w <= -M_PI) w += 2.0 * M_PI;
  return w;
}

double angle_diff(double a, double b) { return wrap_angle(a - b); }

AgentState kinematic_step(const AgentState& state, const AgentAction& action, double dt) {
  if (!(dt > 0.0)) throw ValidationError("kinematic_step: dt must be positive");
  AgentState next;
  next.x = state.x + state.speed * std::cos(state.heading) * dt;
  next.y = state.y + state.speed * std::sin(state.heading) * dt;
  next.heading = wrap_angle(state.heading + action.yaw_rate * dt);
  next.speed = std::max(0.0, state.speed + action.accel * dt);
  return next;
}

AgentTrack rollout(const AgentState& initial, const std::vector<AgentAction>& actions,
                   double dt) {
  AgentTrack track;
  track.reserve(actions.size() + 1);
  track.push_back(initial);
  for (const AgentAction& a : actions) track.push_back(kinematic_step(track.back(), a, dt));
  return track;
}

AgentAction recover_action(const AgentState& state, const AgentState& next, double dt) {
  if (!(dt > 0.0)) throw ValidationError("recover_action: dt must be positive");
  AgentAction a;
  a.accel = (next.speed - state.speed) / dt;
  a.yaw_rate = angle_diff(next.heading, state.heading) / dt;
  return a;
}

}  // namespace sforge
