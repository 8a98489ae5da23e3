#include "sforge/scenario_gen.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "sforge/errors.hpp"
#include "sforge/kinematics.hpp"
#include "sforge/rng.hpp"

namespace sforge {
namespace {

constexpr double kPointSpacing = 2.0;     // centerline sampling [m]
constexpr double kMapMargin = 3.0;        // grid border beyond the road [m]
constexpr double kMapResolution = 0.5;    // [m/cell]
constexpr double kSpawnInset = 5.0;       // first slot offset from lane start [m]
constexpr double kMinHeadway = 10.0;      // center-to-center spawn spacing [m]
constexpr double kLookahead = 6.0;        // pure-pursuit preview [m]
constexpr double kEmergencyDecel = 8.0;   // [m/s^2]
constexpr double kJunctionHalfSpan = 7.0; // conflict zone half-length [m]
constexpr double kJunctionGapSec = 1.0;   // separation between crossing windows [s]
constexpr int kMaxAttempts = 50;

struct PathPoint {
  double x, y;    // position [m]
  double tx, ty;  // unit tangent
};

using RefPath = std::vector<PathPoint>;

void append_line(RefPath* path, double x0, double y0, double x1, double y1) {
  const double len = std::hypot(x1 - x0, y1 - y0);
  const double tx = (x1 - x0) / len;
  const double ty = (y1 - y0) / len;
  const int steps = std::max(1, static_cast<int>(std::ceil(len / kPointSpacing)));
  const int start = path->empty() ? 0 : 1;  // skip shared joint point
  for (int i = start; i <= steps; ++i) {
    const double s = len * i / steps;
    path->push_back({x0 + tx * s, y0 + ty * s, tx, ty});
  }
}

// Counterclockwise arc around (cx, cy) from angle a0 to a1 (a1 > a0).
void append_arc(RefPath* path, double cx, double cy, double radius, double a0, double a1) {
  const double len = radius * (a1 - a0);
  const int steps = std::max(1, static_cast<int>(std::ceil(len / kPointSpacing)));
  const int start = path->empty() ? 0 : 1;
  for (int i = start; i <= steps; ++i) {
    const double a = a0 + (a1 - a0) * i / steps;
    path->push_back({cx + radius * std::cos(a), cy + radius * std::sin(a),
                     -std::sin(a), std::cos(a)});
  }
}

// Each reference path yields two directed lanes offset half a lane width to
// either side: with-the-path travel on the right, opposing travel on the
// left (reversed point order).
std::vector<Polyline> lanes_from_reference(const RefPath& ref, double half_offset) {
  std::vector<double> fx, fy, rx, ry;
  fx.reserve(ref.size());
  fy.reserve(ref.size());
  for (const PathPoint& p : ref) {
    fx.push_back(p.x + half_offset * p.ty);
    fy.push_back(p.y - half_offset * p.tx);
    rx.push_back(p.x - half_offset * p.ty);
    ry.push_back(p.y + half_offset * p.tx);
  }
  std::reverse(rx.begin(), rx.end());
  std::reverse(ry.begin(), ry.end());
  std::vector<Polyline> lanes;
  lanes.emplace_back(std::move(fx), std::move(fy));
  lanes.emplace_back(std::move(rx), std::move(ry));
  return lanes;
}

std::vector<RefPath> reference_paths(RoadLayout layout) {
  std::vector<RefPath> refs;
  switch (layout) {
    case RoadLayout::kStraight: {
      RefPath r;
      append_line(&r, -75.0, 0.0, 75.0, 0.0);
      refs.push_back(std::move(r));
      break;
    }
    case RoadLayout::kCurve: {
      RefPath r;
      append_line(&r, -30.0, 0.0, 0.0, 0.0);
      append_arc(&r, 0.0, 40.0, 40.0, -0.5 * M_PI, 0.0);
      append_line(&r, 40.0, 40.0, 40.0, 70.0);
      refs.push_back(std::move(r));
      break;
    }
    case RoadLayout::kIntersection: {
      // Two one-way roads crossing at the origin. The crossing road joins
      // the junction far enough out that traffic spawned on it cannot reach
      // the junction within the scenario horizon, so the ground truth stays
      // benign; the time-window screen below guards other configurations.
      RefPath h, v;
      append_line(&h, -45.0, 0.0, 70.0, 0.0);
      append_line(&v, 0.0, -115.0, 0.0, 15.0);
      refs.push_back(std::move(h));
      refs.push_back(std::move(v));
      break;
    }
  }
  return refs;
}

struct LaneBox {
  double min_x, max_x, min_y, max_y;
};

}  // namespace

std::string layout_name(RoadLayout layout) {
  switch (layout) {
    case RoadLayout::kStraight: return "straight";
    case RoadLayout::kCurve: return "curve";
    case RoadLayout::kIntersection: return "intersection";
  }
  throw ValidationError("layout_name: unknown layout");
}

RoadLayout layout_from_name(const std::string& name) {
  if (name == "straight") return RoadLayout::kStraight;
  if (name == "curve") return RoadLayout::kCurve;
  if (name == "intersection") return RoadLayout::kIntersection;
  throw ValidationError("unknown layout: " + name);
}

void GeneratorConfig::validate() const {
  if (n_agents < 2 || n_agents > 8) {
    throw ConfigError("generator: n_agents must be in [2, 8]");
  }
  if (!(dt > 0.0) || t_hist < 1 || t_future < 1) {
    throw ConfigError("generator: dt, t_hist, and t_future must be positive");
  }
  if (!(lane_width > 0.0) || !(spawn_span > 0.0)) {
    throw ConfigError("generator: lane_width and spawn_span must be positive");
  }
  if (!(min_speed > 0.0) || !(max_speed >= min_speed)) {
    throw ConfigError("generator: need 0 < min_speed <= max_speed");
  }
  idm.validate();
}

SceneMap build_layout_map(const GeneratorConfig& config) {
  config.validate();
  const double half = 0.5 * config.lane_width;
  std::vector<Polyline> lanes;
  for (const RefPath& ref : reference_paths(config.layout)) {
    if (config.layout == RoadLayout::kIntersection) {
      // One-way roads carry a single lane on the reference itself.
      std::vector<double> xs, ys;
      for (const PathPoint& p : ref) {
        xs.push_back(p.x);
        ys.push_back(p.y);
      }
      lanes.emplace_back(std::move(xs), std::move(ys));
    } else {
      for (Polyline& lane : lanes_from_reference(ref, half)) lanes.push_back(std::move(lane));
    }
  }

  double min_x = std::numeric_limits<double>::infinity(), max_x = -min_x;
  double min_y = min_x, max_y = max_x;
  std::vector<LaneBox> boxes;
  for (const Polyline& lane : lanes) {
    LaneBox box{min_x, max_x, min_y, max_y};
    for (int i = 0; i < lane.size(); ++i) {
      box.min_x = std::min(box.min_x, lane.x(i));
      box.max_x = std::max(box.max_x, lane.x(i));
      box.min_y = std::min(box.min_y, lane.y(i));
      box.max_y = std::max(box.max_y, lane.y(i));
    }
    min_x = std::min(min_x, box.min_x);
    max_x = std::max(max_x, box.max_x);
    min_y = std::min(min_y, box.min_y);
    max_y = std::max(max_y, box.max_y);
    const double pad = half + kMapResolution;
    boxes.push_back({box.min_x - pad, box.max_x + pad, box.min_y - pad, box.max_y + pad});
  }

  const double pad = half + kMapMargin;
  const double origin_x = std::floor((min_x - pad) / kMapResolution) * kMapResolution;
  const double origin_y = std::floor((min_y - pad) / kMapResolution) * kMapResolution;
  const int cols = static_cast<int>(std::ceil((max_x + pad - origin_x) / kMapResolution));
  const int rows = static_cast<int>(std::ceil((max_y + pad - origin_y) / kMapResolution));

  std::vector<uint8_t> mask(static_cast<size_t>(rows) * cols, 0);
  for (int r = 0; r < rows; ++r) {
    const double y = origin_y + (r + 0.5) * kMapResolution;
    for (int c = 0; c < cols; ++c) {
      const double x = origin_x + (c + 0.5) * kMapResolution;
      for (size_t l = 0; l < lanes.size(); ++l) {
        const LaneBox& box = boxes[l];
        if (x < box.min_x || x > box.max_x || y < box.min_y || y > box.max_y) continue;
        if (lanes[l].project(x, y).dist <= half) {
          mask[static_cast<size_t>(r) * cols + c] = 1;
          break;
        }
      }
    }
  }

  SceneMap map = build_sdf_map(mask, rows, cols, origin_x, origin_y, kMapResolution);
  map.centerlines = std::move(lanes);
  map.validate();
  return map;
}

Scenario generate_synthetic_scenario(const GeneratorConfig& config, uint64_t seed) {
  return generate_synthetic_scenario(config, seed, build_layout_map(config));
}

Scenario generate_synthetic_scenario(const GeneratorConfig& config, uint64_t seed,
                                     const SceneMap& prebuilt_map) {
  config.validate();
  const SceneMap& map = prebuilt_map;
  const int n = config.n_agents;
  const int n_lanes = static_cast<int>(map.centerlines.size());
  if (n_lanes == 0) throw ValidationError("generate_synthetic_scenario: map has no lanes");

  std::vector<int> lane_of(static_cast<size_t>(n));
  std::vector<int> lane_count(static_cast<size_t>(n_lanes), 0);
  for (int i = 0; i < n; ++i) {
    lane_of[static_cast<size_t>(i)] = i % n_lanes;
    ++lane_count[static_cast<size_t>(i % n_lanes)];
  }
  for (int l = 0; l < n_lanes; ++l) {
    if (lane_count[static_cast<size_t>(l)] > 0 &&
        config.spawn_span / lane_count[static_cast<size_t>(l)] < kMinHeadway) {
      throw GenerationError("generate_synthetic_scenario: spawn_span too small for agents per lane");
    }
  }

  const int total_steps = config.t_hist + config.t_future;
  const double horizon = total_steps * config.dt;
  const bool crossing = config.layout == RoadLayout::kIntersection;

  for (uint64_t attempt = 0; attempt < kMaxAttempts; ++attempt) {
    Rng rng(mix_seed(seed, 0x7363656eull, attempt));

    std::vector<double> spawn_s(static_cast<size_t>(n)), speed(static_cast<size_t>(n));
    std::vector<VehicleFootprint> footprints(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
      const int lane = lane_of[static_cast<size_t>(i)];
      const double step = config.spawn_span / lane_count[static_cast<size_t>(lane)];
      const int slot = i / n_lanes;
      spawn_s[static_cast<size_t>(i)] =
          kSpawnInset + slot * step + rng.uniform(0.0, std::max(0.0, step - kMinHeadway));
      speed[static_cast<size_t>(i)] = rng.uniform(config.min_speed, config.max_speed);
      footprints[static_cast<size_t>(i)].length = rng.uniform(4.0, 4.4);
      footprints[static_cast<size_t>(i)].width = rng.uniform(1.7, 1.9);
    }

    if (crossing) {
      // Crossing-traffic screen: constant-speed junction occupancy windows on
      // different roads must be separated in time. Speeds can only rise toward
      // the desired speed (free road), so the entry bound uses the faster one.
      std::vector<double> t_in(static_cast<size_t>(n)), t_out(static_cast<size_t>(n));
      std::vector<bool> active(static_cast<size_t>(n));
      for (int i = 0; i < n; ++i) {
        const Polyline& lane = map.centerlines[static_cast<size_t>(lane_of[static_cast<size_t>(i)])];
        const double s_junction = lane.project(0.0, 0.0).s;
        const double v0 = speed[static_cast<size_t>(i)];
        const double v_fast = std::max(v0, config.idm.desired_speed);
        const double enter = s_junction - kJunctionHalfSpan - spawn_s[static_cast<size_t>(i)];
        const double leave = s_junction + kJunctionHalfSpan +
                             footprints[static_cast<size_t>(i)].length -
                             spawn_s[static_cast<size_t>(i)];
        t_in[static_cast<size_t>(i)] = enter / v_fast;
        t_out[static_cast<size_t>(i)] = leave / v0;
        active[static_cast<size_t>(i)] =
            t_in[static_cast<size_t>(i)] <= horizon && t_out[static_cast<size_t>(i)] >= 0.0;
      }
      bool clash = false;
      for (int a = 0; a < n && !clash; ++a) {
        for (int b = a + 1; b < n && !clash; ++b) {
          if (lane_of[static_cast<size_t>(a)] == lane_of[static_cast<size_t>(b)]) continue;
          if (!active[static_cast<size_t>(a)] || !active[static_cast<size_t>(b)]) continue;
          const bool separated =
              t_in[static_cast<size_t>(a)] > t_out[static_cast<size_t>(b)] + kJunctionGapSec ||
              t_in[static_cast<size_t>(b)] > t_out[static_cast<size_t>(a)] + kJunctionGapSec;
          if (!separated) clash = true;
        }
      }
      if (clash) continue;
    }

    std::vector<AgentState> cur(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
      const Polyline& lane = map.centerlines[static_cast<size_t>(lane_of[static_cast<size_t>(i)])];
      AgentState st;
      lane.point_at(spawn_s[static_cast<size_t>(i)], &st.x, &st.y);
      st.heading = lane.heading_at(spawn_s[static_cast<size_t>(i)]);
      st.speed = speed[static_cast<size_t>(i)];
      cur[static_cast<size_t>(i)] = st;
    }

    std::vector<std::vector<AgentState>> states;
    states.reserve(static_cast<size_t>(total_steps) + 1);
    states.push_back(cur);
    for (int t = 0; t < total_steps; ++t) {
      std::vector<double> along(static_cast<size_t>(n));
      for (int i = 0; i < n; ++i) {
        const Polyline& lane = map.centerlines[static_cast<size_t>(lane_of[static_cast<size_t>(i)])];
        along[static_cast<size_t>(i)] =
            lane.project(cur[static_cast<size_t>(i)].x, cur[static_cast<size_t>(i)].y).s;
      }
      std::vector<AgentState> next(static_cast<size_t>(n));
      for (int i = 0; i < n; ++i) {
        const Polyline& lane = map.centerlines[static_cast<size_t>(lane_of[static_cast<size_t>(i)])];
        double gap = std::numeric_limits<double>::infinity();
        double v_lead = 0.0;
        for (int j = 0; j < n; ++j) {
          if (j == i || lane_of[static_cast<size_t>(j)] != lane_of[static_cast<size_t>(i)]) continue;
          const double ds = along[static_cast<size_t>(j)] - along[static_cast<size_t>(i)];
          if (ds <= 0.0) continue;
          const double g = ds - 0.5 * footprints[static_cast<size_t>(i)].length -
                           0.5 * footprints[static_cast<size_t>(j)].length;
          if (g < gap) {
            gap = g;
            v_lead = cur[static_cast<size_t>(j)].speed;
          }
        }
        const double v = cur[static_cast<size_t>(i)].speed;
        double accel = idm_accel(v, v_lead, gap, config.idm);
        if (!std::isinf(gap) && gap + (v_lead - v) * config.dt < config.idm.min_gap) {
          accel = -kEmergencyDecel;
        }
        accel = std::clamp(accel, -kEmergencyDecel, config.idm.max_accel);
        double yaw_rate = pure_pursuit_yaw_rate(lane, cur[static_cast<size_t>(i)], kLookahead);
        yaw_rate = std::clamp(yaw_rate, -1.0, 1.0);
        next[static_cast<size_t>(i)] =
            kinematic_step(cur[static_cast<size_t>(i)], AgentAction{accel, yaw_rate}, config.dt);
      }
      cur = std::move(next);
      states.push_back(cur);
    }

    bool valid = true;
    for (const std::vector<AgentState>& frame : states) {
      for (int a = 0; a < n && valid; ++a) {
        if (map.sdf_query(frame[static_cast<size_t>(a)].x, frame[static_cast<size_t>(a)].y) <= 0.0) {
          valid = false;
          break;
        }
        for (int b = a + 1; b < n; ++b) {
          const double d = std::hypot(frame[static_cast<size_t>(a)].x - frame[static_cast<size_t>(b)].x,
                                      frame[static_cast<size_t>(a)].y - frame[static_cast<size_t>(b)].y);
          if (d < footprints[static_cast<size_t>(a)].radius() + footprints[static_cast<size_t>(b)].radius()) {
            valid = false;
            break;
          }
        }
      }
      if (!valid) break;
    }
    if (!valid) continue;

    Scenario scenario;
    scenario.dt = config.dt;
    scenario.t_hist = config.t_hist;
    scenario.t_future = config.t_future;
    scenario.map = map;
    scenario.agents.resize(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
      Agent& agent = scenario.agents[static_cast<size_t>(i)];
      agent.id = i;
      agent.role = i == 0 ? Role::kEgo : Role::kOther;
      agent.footprint = footprints[static_cast<size_t>(i)];
      agent.past.clear();
      for (int t = 0; t <= config.t_hist; ++t) {
        agent.past.push_back(states[static_cast<size_t>(t)][static_cast<size_t>(i)]);
      }
      AgentTrack future;
      for (int t = config.t_hist + 1; t <= total_steps; ++t) {
        future.push_back(states[static_cast<size_t>(t)][static_cast<size_t>(i)]);
      }
      agent.future = std::move(future);
    }
    scenario.validate_and_normalize();
    return scenario;
  }
  throw GenerationError("generate_synthetic_scenario: no valid sample after 50 attempts");
}

}  // namespace sforge
