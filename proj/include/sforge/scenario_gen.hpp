#pragma once

#include <cstdint>
#include <string>

#include "sforge/planner.hpp"
#include "sforge/scene.hpp"

namespace sforge {

enum class RoadLayout { kStraight, kCurve, kIntersection };

std::string layout_name(RoadLayout layout);
RoadLayout layout_from_name(const std::string& name);

struct GeneratorConfig {
  RoadLayout layout = RoadLayout::kStraight;
  int n_agents = 4;          // 2..8
  double dt = 0.5;           // [s]
  int t_hist = 4;            // past steps before the current state
  int t_future = 12;         // future steps
  double lane_width = 5.0;   // [m]
  double spawn_span = 45.0;  // [m], longitudinal spawn window per lane
  double min_speed = 4.0;    // [m/s], initial speed range
  double max_speed = 7.5;    // [m/s]
  IdmParams idm;

  // Throws ConfigError on out-of-range values.
  void validate() const;
};

// Builds the drivable-area SDF grid and directed lane centerlines for the
// layout. Deterministic per config and independent of the traffic seed, so
// corpus builders can construct it once and reuse it across scenarios.
SceneMap build_layout_map(const GeneratorConfig& config);

// Generates one lane-following traffic scenario: agents spawn on the lanes
// with randomized longitudinal slots, footprints, and speeds, then follow
// car-following speed control and pure-pursuit steering for
// t_hist + t_future steps. Samples with disc overlaps or off-road states at
// any recorded step are rejected and redrawn from the next sub-seed;
// GenerationError after 50 attempts. Agent 0 is the ego, all others start
// as role other. Output is bit-identical per (config, seed).
Scenario generate_synthetic_scenario(const GeneratorConfig& config, uint64_t seed);

// Same, but stamps a prebuilt layout map instead of rebuilding it.
Scenario generate_synthetic_scenario(const GeneratorConfig& config, uint64_t seed,
                                     const SceneMap& prebuilt_map);

}  // namespace sforge
