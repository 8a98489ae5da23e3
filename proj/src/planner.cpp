#include "sforge/planner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sforge/errors.hpp"
#include "sforge/kinematics.hpp"

namespace sforge {
namespace {

constexpr double kMaxCenterlineDist = 10.0;  // association gate [m]
constexpr double kSameLaneLateral = 2.5;     // leader gating [m]
constexpr double kAccelBound = 8.0;          // kinematic limit [m/s^2]
constexpr double kYawRateBound = 1.0;        // kinematic limit [rad/s]

}  // namespace

void IdmParams::validate() const {
  if (!(desired_speed > 0.0) || !(time_headway > 0.0) || !(min_gap > 0.0) ||
      !(max_accel > 0.0) || !(comfort_decel > 0.0)) {
    throw ConfigError("idm: all parameters must be positive");
  }
}

double idm_accel(double v, double v_lead, double gap, const IdmParams& p) {
  const double free_term = 1.0 - std::pow(v / p.desired_speed, 4.0);
  if (std::isinf(gap)) return p.max_accel * free_term;
  const double s = std::max(gap, 0.1);
  const double dv = v - v_lead;
  const double s_star =
      p.min_gap +
      std::max(0.0, v * p.time_headway +
                        v * dv / (2.0 * std::sqrt(p.max_accel * p.comfort_decel)));
  return p.max_accel * (free_term - (s_star / s) * (s_star / s));
}

double pure_pursuit_yaw_rate(const Polyline& path, const AgentState& state,
                             double lookahead) {
  const Polyline::Projection proj = path.project(state.x, state.y);
  double tx = 0.0, ty = 0.0;
  path.point_at(proj.s + lookahead, &tx, &ty);
  const double dist = std::hypot(tx - state.x, ty - state.y);
  if (dist < 1e-9) return 0.0;
  const double alpha = wrap_angle(std::atan2(ty - state.y, tx - state.x) - state.heading);
  // Floor the chord length so a clamped target near the path end cannot
  // produce an unbounded curvature.
  const double kappa = 2.0 * std::sin(alpha) / std::max(dist, 1.0);
  return state.speed * kappa;
}

void PlannerConfig::validate() const {
  idm.validate();
  if (!(emergency_decel > 0.0) || !(lookahead > 0.0)) {
    throw ConfigError("planner: emergency_decel and lookahead must be positive");
  }
}

AgentTrack plan_ego(const SceneMap& map, const std::vector<AgentState>& currents,
                    const std::vector<VehicleFootprint>& footprints, size_t ego_index,
                    int t_future, double dt, const PlannerConfig& config) {
  config.validate();
  if (currents.empty() || currents.size() != footprints.size()) {
    throw ValidationError("plan_ego: currents and footprints must match and be non-empty");
  }
  if (ego_index >= currents.size()) throw ValidationError("plan_ego: ego_index out of range");
  if (t_future <= 0 || !(dt > 0.0)) {
    throw ValidationError("plan_ego: t_future and dt must be positive");
  }
  if (map.centerlines.empty()) throw PlannerError("plan_ego: map has no centerlines");

  const Polyline* line = nullptr;
  double best = std::numeric_limits<double>::infinity();
  for (const Polyline& cl : map.centerlines) {
    const double d = cl.project(currents[ego_index].x, currents[ego_index].y).dist;
    if (d < best) {
      best = d;
      line = &cl;
    }
  }
  if (best > kMaxCenterlineDist) {
    throw PlannerError("plan_ego: no centerline within 10 m of the agent");
  }

  std::vector<AgentState> others = currents;
  AgentState cur = currents[ego_index];
  AgentTrack plan;
  plan.reserve(static_cast<size_t>(t_future));
  const AgentAction coast{0.0, 0.0};

  for (int step = 0; step < t_future; ++step) {
    const double s_ego = line->project(cur.x, cur.y).s;
    double gap = std::numeric_limits<double>::infinity();
    double v_lead = 0.0;
    for (size_t j = 0; j < others.size(); ++j) {
      if (j == ego_index) continue;
      const Polyline::Projection pj = line->project(others[j].x, others[j].y);
      if (pj.dist >= kSameLaneLateral || pj.s <= s_ego) continue;
      const double g = (pj.s - s_ego) - 0.5 * footprints[j].length -
                       0.5 * footprints[ego_index].length;
      if (g < gap) {
        gap = g;
        v_lead = others[j].speed;
      }
    }

    double accel = idm_accel(cur.speed, v_lead, gap, config.idm);
    if (!std::isinf(gap) && gap + (v_lead - cur.speed) * dt < config.idm.min_gap) {
      accel = -config.emergency_decel;
    }
    accel = std::clamp(accel, -config.emergency_decel, config.idm.max_accel);
    accel = std::clamp(accel, -kAccelBound, kAccelBound);
    double yaw_rate = pure_pursuit_yaw_rate(*line, cur, config.lookahead);
    yaw_rate = std::clamp(yaw_rate, -kYawRateBound, kYawRateBound);

    cur = kinematic_step(cur, AgentAction{accel, yaw_rate}, dt);
    plan.push_back(cur);
    for (size_t j = 0; j < others.size(); ++j) {
      if (j != ego_index) others[j] = kinematic_step(others[j], coast, dt);
    }
  }
  return plan;
}

}  // namespace sforge
