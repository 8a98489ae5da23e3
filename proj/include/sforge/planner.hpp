#pragma once

#include <cstddef>
#include <vector>

#include "sforge/scene.hpp"
#include "sforge/scene_map.hpp"

namespace sforge {

// Intelligent-driver-model parameters for longitudinal control.
struct IdmParams {
  double desired_speed = 8.0;   // [m/s]
  double time_headway = 1.5;    // [s]
  double min_gap = 2.0;         // [m]
  double max_accel = 2.0;       // [m/s^2]
  double comfort_decel = 3.0;   // [m/s^2]

  // Throws ConfigError unless every field is positive.
  void validate() const;
};

// IDM acceleration for a follower at speed v behind a leader at speed
// v_lead with bumper-to-bumper gap [m]. Pass an infinite gap for a free
// road; gaps are floored at 0.1 m to keep the interaction term finite.
double idm_accel(double v, double v_lead, double gap, const IdmParams& p);

// Pure-pursuit yaw rate toward the point `lookahead` meters further along
// the path from the agent's projection: kappa = 2 sin(alpha) / L, with L
// the distance to the target point and alpha the bearing error.
double pure_pursuit_yaw_rate(const Polyline& path, const AgentState& state,
                             double lookahead);

struct PlannerConfig {
  IdmParams idm;
  double emergency_decel = 8.0;  // [m/s^2], applied when the gap collapses
  double lookahead = 6.0;        // [m]

  // Throws ConfigError unless every field is positive.
  void validate() const;
};

// Plans t_future steps for the agent at `ego_index`: follows the nearest
// map centerline with IDM speed control and pure-pursuit steering while
// treating every other agent as constant velocity. Closed-loop callers
// invoke this each step and keep only the first planned state.
// The returned track starts one step after the current state.
// Throws PlannerError when no centerline lies within 10 m of the agent,
// ConfigError on bad config, ValidationError on malformed arguments.
AgentTrack plan_ego(const SceneMap& map, const std::vector<AgentState>& currents,
                    const std::vector<VehicleFootprint>& footprints, size_t ego_index,
                    int t_future, double dt, const PlannerConfig& config);

}  // namespace sforge
