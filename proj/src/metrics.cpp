#include "sforge/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "sforge/errors.hpp"

namespace sforge {
namespace {

double dist(const AgentState& a, const AgentState& b) { return std::hypot(a.x - b.x, a.y - b.y); }

double normal_cdf(double z) { return 0.5 * std::erfc(-z / M_SQRT2); }

}  // namespace

PredictionMetrics prediction_metrics(const Scenario& gt,
                                     const std::vector<std::vector<AgentTrack>>& samples) {
  const std::vector<int> non_ego = gt.non_ego_indices();
  if (samples.empty()) throw ValidationError("prediction_metrics: no samples");
  std::vector<const AgentTrack*> truth;
  for (int idx : non_ego) {
    const Agent& agent = gt.agents[static_cast<size_t>(idx)];
    if (!agent.future) throw ValidationError("prediction_metrics: ground truth lacks futures");
    truth.push_back(&*agent.future);
  }
  const size_t n_agents = truth.size();
  const size_t horizon = static_cast<size_t>(gt.t_future);
  for (const std::vector<AgentTrack>& sample : samples) {
    if (sample.size() != n_agents) {
      throw ValidationError("prediction_metrics: sample agent count mismatch");
    }
    for (const AgentTrack& track : sample) {
      if (track.size() != horizon) {
        throw ValidationError("prediction_metrics: sample horizon mismatch");
      }
    }
  }

  PredictionMetrics out;
  double sum_all = 0.0;
  double sum_final = 0.0;
  double best_sfde = std::numeric_limits<double>::infinity();
  for (const std::vector<AgentTrack>& sample : samples) {
    double final_sum = 0.0;
    for (size_t j = 0; j < n_agents; ++j) {
      for (size_t t = 0; t < horizon; ++t) sum_all += dist(sample[j][t], (*truth[j])[t]);
      final_sum += dist(sample[j].back(), truth[j]->back());
    }
    sum_final += final_sum;
    best_sfde = std::min(best_sfde, final_sum / static_cast<double>(n_agents));
  }
  const double m = static_cast<double>(samples.size());
  out.ade = sum_all / (m * static_cast<double>(n_agents) * static_cast<double>(horizon));
  out.fde = sum_final / (m * static_cast<double>(n_agents));
  out.min_sfde = best_sfde;

  double fdd_sum = 0.0;
  for (size_t j = 0; j < n_agents; ++j) {
    double widest = 0.0;
    for (size_t m1 = 0; m1 < samples.size(); ++m1) {
      for (size_t m2 = m1 + 1; m2 < samples.size(); ++m2) {
        widest = std::max(widest, dist(samples[m1][j].back(), samples[m2][j].back()));
      }
    }
    fdd_sum += widest;
  }
  out.fdd = fdd_sum / static_cast<double>(n_agents);
  return out;
}

PredictionMetrics mean_prediction_metrics(const std::vector<PredictionMetrics>& per_scene) {
  if (per_scene.empty()) throw ValidationError("mean_prediction_metrics: no scenes");
  PredictionMetrics out;
  for (const PredictionMetrics& p : per_scene) {
    out.ade += p.ade;
    out.fde += p.fde;
    out.min_sfde += p.min_sfde;
    out.fdd += p.fdd;
  }
  const double n = static_cast<double>(per_scene.size());
  out.ade /= n;
  out.fde /= n;
  out.min_sfde /= n;
  out.fdd /= n;
  return out;
}

RunSummary summarize_run(const Scenario& scenario, const SimulationResult& result) {
  RunSummary summary;
  summary.valid = !result.planner_failed;
  const int adv = scenario.adversary_index();
  summary.has_adversary = adv >= 0;
  int ego = -1;
  for (size_t i = 0; i < scenario.agents.size(); ++i) {
    if (scenario.agents[i].role == Role::kEgo) ego = static_cast<int>(i);
    if (scenario.agents[i].role == Role::kOther) ++summary.other_count;
  }
  if (!summary.valid) return summary;

  std::set<int> hit_ego, hit_other, off_road;
  for (const SimEvent& e : result.events) {
    if (e.kind == EventKind::kOffRoad) {
      if (e.agent_a == adv) {
        summary.adv_offroad = true;
      } else if (e.agent_a != ego) {
        off_road.insert(e.agent_a);
      }
      continue;
    }
    const bool has_adv = e.agent_a == adv || e.agent_b == adv;
    const bool has_ego = e.agent_a == ego || e.agent_b == ego;
    if (has_adv && has_ego) {
      summary.adv_ego_collision = true;
    } else if (has_adv) {
      summary.adv_other_collision = true;
    } else if (has_ego) {
      hit_ego.insert(e.agent_a == ego ? e.agent_b : e.agent_a);
    } else {
      hit_other.insert(e.agent_a);
      hit_other.insert(e.agent_b);
    }
  }
  summary.others_colliding_ego = static_cast<int>(hit_ego.size());
  summary.others_colliding_other = static_cast<int>(hit_other.size());
  summary.others_offroad = static_cast<int>(off_road.size());

  for (const std::vector<AgentState>& frame : result.states) {
    if (adv >= 0 && ego >= 0) {
      summary.min_adv_ego_distance =
          std::min(summary.min_adv_ego_distance,
                   dist(frame[static_cast<size_t>(adv)], frame[static_cast<size_t>(ego)]));
    }
  }
  for (size_t i = 0; i < scenario.agents.size(); ++i) {
    const Role role = scenario.agents[i].role;
    if (role == Role::kEgo) continue;
    for (size_t t = 0; t + 1 < result.states.size(); ++t) {
      const double a =
          std::abs(result.states[t + 1][i].speed - result.states[t][i].speed) / scenario.dt;
      if (role == Role::kAdversary) {
        summary.adv_abs_accel_sum += a;
        ++summary.adv_accel_count;
      } else {
        summary.other_abs_accel_sum += a;
        ++summary.other_accel_count;
      }
    }
  }
  return summary;
}

BehaviorRates behavior_rates(const std::vector<RunSummary>& runs) {
  if (runs.empty()) throw ValidationError("behavior_rates: no runs");
  BehaviorRates rates;
  int adv_units = 0;
  int other_units = 0;
  int adv_ego = 0, adv_other = 0, adv_off = 0;
  int oth_ego = 0, oth_oth = 0, oth_off = 0;
  double adv_acc_sum = 0.0, other_acc_sum = 0.0;
  int adv_acc_n = 0, other_acc_n = 0;
  for (const RunSummary& run : runs) {
    if (!run.valid) {
      ++rates.excluded_runs;
      continue;
    }
    ++rates.valid_runs;
    if (run.has_adversary) {
      ++adv_units;
      adv_ego += run.adv_ego_collision ? 1 : 0;
      adv_other += run.adv_other_collision ? 1 : 0;
      adv_off += run.adv_offroad ? 1 : 0;
    }
    other_units += run.other_count;
    oth_ego += run.others_colliding_ego;
    oth_oth += run.others_colliding_other;
    oth_off += run.others_offroad;
    adv_acc_sum += run.adv_abs_accel_sum;
    adv_acc_n += run.adv_accel_count;
    other_acc_sum += run.other_abs_accel_sum;
    other_acc_n += run.other_accel_count;
  }
  if (adv_units > 0) {
    rates.adv_ego_collision_pct = 100.0 * adv_ego / adv_units;
    rates.adv_other_collision_pct = 100.0 * adv_other / adv_units;
    rates.adv_offroad_pct = 100.0 * adv_off / adv_units;
  }
  if (other_units > 0) {
    rates.other_ego_collision_pct = 100.0 * oth_ego / other_units;
    rates.other_other_collision_pct = 100.0 * oth_oth / other_units;
    rates.other_offroad_pct = 100.0 * oth_off / other_units;
  }
  if (adv_acc_n > 0) rates.adv_mean_abs_accel = adv_acc_sum / adv_acc_n;
  if (other_acc_n > 0) rates.other_mean_abs_accel = other_acc_sum / other_acc_n;
  return rates;
}

double median(std::vector<double> values) {
  if (values.empty()) throw ValidationError("median: empty input");
  const size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<long>(mid), values.end());
  const double upper = values[mid];
  if (values.size() % 2 == 1) return upper;
  std::nth_element(values.begin(), values.begin() + static_cast<long>(mid) - 1, values.end());
  return 0.5 * (values[mid - 1] + upper);
}

double wilcoxon_signed_rank_p(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ValidationError("wilcoxon: length mismatch");
  std::vector<double> diffs;
  for (size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    if (!std::isfinite(d)) throw ValidationError("wilcoxon: non-finite difference");
    if (d != 0.0) diffs.push_back(d);
  }
  const size_t n = diffs.size();
  if (n < 5) throw ValidationError("wilcoxon: needs at least 5 non-zero differences");

  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](size_t x, size_t y) {
    return std::abs(diffs[x]) < std::abs(diffs[y]);
  });

  std::vector<double> rank(n);
  double tie_term = 0.0;
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && std::abs(diffs[order[j + 1]]) == std::abs(diffs[order[i]])) ++j;
    const double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
    for (size_t k = i; k <= j; ++k) rank[order[k]] = avg_rank;
    const double t = static_cast<double>(j - i + 1);
    tie_term += t * t * t - t;
    i = j + 1;
  }

  double w_plus = 0.0;
  for (size_t k = 0; k < n; ++k) {
    if (diffs[k] > 0.0) w_plus += rank[k];
  }
  const double dn = static_cast<double>(n);
  const double mean = dn * (dn + 1.0) / 4.0;
  const double var = (dn * (dn + 1.0) * (2.0 * dn + 1.0) - 0.5 * tie_term) / 24.0;
  if (!(var > 0.0)) throw ValidationError("wilcoxon: zero variance");
  const double z = (w_plus - mean + 0.5) / std::sqrt(var);
  return normal_cdf(z);
}

}  // namespace sforge
