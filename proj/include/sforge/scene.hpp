#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sforge/scene_map.hpp"

namespace sforge {

enum class Role { kEgo, kAdversary, kOther };

std::string role_name(Role role);
Role role_from_name(const std::string& name);

struct AgentState {
  double x = 0.0;        // [m]
  double y = 0.0;        // [m]
  double heading = 0.0;  // [rad], wrapped to (-pi, pi]
  double speed = 0.0;    // [m/s], >= 0
};

struct AgentAction {
  double accel = 0.0;     // [m/s^2]
  double yaw_rate = 0.0;  // [rad/s]
};

// Ordered states at uniform dt. For past tracks the last entry is the
// current state; future tracks start one step after the current state.
using AgentTrack = std::vector<AgentState>;

struct VehicleFootprint {
  double length = 4.2;  // [m]
  double width = 1.8;   // [m]

  // Radius of the circumscribed disc used for collision checks.
  double radius() const { return 0.5 * std::sqrt(length * length + width * width); }
};

struct Agent {
  int id = 0;
  Role role = Role::kOther;
  VehicleFootprint footprint;
  AgentTrack past;                    // length t_hist + 1, last = current
  std::optional<AgentTrack> future;   // length t_future when present

  const AgentState& current() const { return past.back(); }
};

struct Scenario {
  double dt = 0.5;    // [s]
  int t_hist = 4;     // past steps before the current state
  int t_future = 12;  // future steps
  SceneMap map;
  std::vector<Agent> agents;  // sorted by id, exactly one ego

  const Agent& ego() const;
  // Index into agents, or -1 when no adversary is assigned.
  int adversary_index() const;
  std::vector<int> non_ego_indices() const;

  // Sorts agents by id and checks structural invariants (unique ids,
  // exactly one ego, at most one adversary, track lengths, finite values).
  void validate_and_normalize();
};

// Picks the non-ego agent closest to the ego among those on drivable area
// with speed > 0; ties break to the smallest id. The chosen agent's role is
// set to adversary (any previous adversary reverts to other).
// Throws ValidationError when no candidate passes the screen.
int select_adversary(Scenario& scenario);

}  // namespace sforge
