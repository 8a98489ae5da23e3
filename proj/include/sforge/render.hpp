#pragma once

#include <string>
#include <vector>

#include "sforge/scene.hpp"
#include "sforge/simulate.hpp"

namespace sforge {

struct RenderOptions {
  double scale = 6.0;   // pixels per meter
  double margin = 4.0;  // meters of padding around the map bounds
  void validate() const;
};

// One SVG frame: drivable area, centerlines, agent rectangles colored by
// role, and one marker per event. `states` follows the scenario agent order;
// `events` are the ones belonging to this frame. Output is byte-deterministic
// for fixed input (fixed-precision formatting, no timestamps).
std::string render_frame(const Scenario& scenario, const std::vector<AgentState>& states,
                         const std::vector<SimEvent>& events,
                         const RenderOptions& options = {});

// Writes frame_000.svg, frame_001.svg, ... into out_dir, one per timestep
// (past frames, then future frames when every agent has a future), and
// returns the frame count.
int render_scenario_frames(const Scenario& scenario, const std::string& out_dir,
                           const RenderOptions& options = {});

// Writes one frame per simulated state; each event is drawn on the frame
// matching its step. Returns the frame count.
int render_result_frames(const Scenario& scenario, const SimulationResult& result,
                         const std::string& out_dir, const RenderOptions& options = {});

}  // namespace sforge
