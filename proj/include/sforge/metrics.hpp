#pragma once

#include <limits>
#include <vector>

#include "sforge/scene.hpp"
#include "sforge/simulate.hpp"

namespace sforge {

struct PredictionMetrics {
  double ade = 0.0;       // mean displacement over samples, agents, steps [m]
  double fde = 0.0;       // mean final displacement [m]
  double min_sfde = 0.0;  // best sample's scene-averaged final displacement [m]
  double fdd = 0.0;       // final displacement diversity across samples [m]
};

// Compares M sampled future sets against the ground-truth futures of the
// non-ego agents (samples follow the ascending-id non-ego order, t_future
// states per track). fdd is the per-agent maximum pairwise distance between
// sampled final positions, averaged over agents; with M = 1 the pair set is
// empty and fdd is 0.
PredictionMetrics prediction_metrics(const Scenario& gt,
                                     const std::vector<std::vector<AgentTrack>>& samples);

// Field-wise arithmetic mean; throws ValidationError when empty.
PredictionMetrics mean_prediction_metrics(const std::vector<PredictionMetrics>& per_scene);

// Classified incidents and acceleration stats of one closed-loop run.
struct RunSummary {
  bool valid = false;  // false when the ego planner failed
  bool has_adversary = false;
  int other_count = 0;  // non-ego, non-adversary agents
  bool adv_ego_collision = false;
  bool adv_other_collision = false;
  bool adv_offroad = false;
  int others_colliding_ego = 0;    // distinct agents
  int others_colliding_other = 0;  // distinct agents in other-other pairs
  int others_offroad = 0;          // distinct agents
  double min_adv_ego_distance = std::numeric_limits<double>::infinity();
  double adv_abs_accel_sum = 0.0;
  int adv_accel_count = 0;
  double other_abs_accel_sum = 0.0;
  int other_accel_count = 0;
};

RunSummary summarize_run(const Scenario& scenario, const SimulationResult& result);

// Percentage rates over (agent, run) units: adversary classes count one unit
// per valid run with an adversary, other classes one unit per other agent
// per valid run. Planner-failed runs are excluded everywhere.
struct BehaviorRates {
  double adv_ego_collision_pct = 0.0;
  double adv_other_collision_pct = 0.0;
  double adv_offroad_pct = 0.0;
  double other_ego_collision_pct = 0.0;
  double other_other_collision_pct = 0.0;
  double other_offroad_pct = 0.0;
  double adv_mean_abs_accel = 0.0;   // [m/s^2]
  double other_mean_abs_accel = 0.0; // [m/s^2]
  int valid_runs = 0;
  int excluded_runs = 0;
};

BehaviorRates behavior_rates(const std::vector<RunSummary>& runs);

// Throws ValidationError on empty input.
double median(std::vector<double> values);

// One-sided Wilcoxon signed-rank test of a < b for paired samples: normal
// approximation with continuity correction, average ranks for tied absolute
// differences, zero differences dropped. Needs at least 5 non-zero pairs.
double wilcoxon_signed_rank_p(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace sforge
