#include "sforge/guidance.hpp"

#include <algorithm>
#include <cmath>

#include "sforge/errors.hpp"

namespace sforge {

void GuidanceConfig::validate() const {
  if (!(scale >= 0.0)) throw ConfigError("guidance: scale must be >= 0");
  if (!(w_b >= 0.0) || !(w_ar >= 0.0) || !(w_a >= 0.0))
    throw ConfigError("guidance: weights must be >= 0");
  if (!(d_buffer >= 0.0)) throw ConfigError("guidance: d_buffer must be >= 0");
}

double veh_coll_penalty(double d, double p) {
  if (!(p > 0.0)) throw ValidationError("veh_coll_penalty: p must be > 0");
  if (!(d >= 0.0)) throw ValidationError("veh_coll_penalty: d must be >= 0");
  return d <= p ? 1.0 - d / p : 0.0;
}

std::vector<double> env_coll_penalty(const AgentTrack& track, const SceneMap& map, double p_i) {
  if (!(p_i > 0.0)) throw ValidationError("env_coll_penalty: p_i must be > 0");
  std::vector<double> pens;
  pens.reserve(track.size());
  for (const AgentState& s : track) {
    const double d = std::max(0.0, map.sdf_query(s.x, s.y));
    pens.push_back(d <= p_i ? 1.0 - d / p_i : 0.0);
  }
  return pens;
}

double adv_objective(const AgentTrack& adv_track, const AgentTrack& ego_track, double p) {
  if (!(p > 0.0)) throw ValidationError("adv_objective: p must be > 0");
  if (adv_track.size() != ego_track.size())
    throw ValidationError("adv_objective: track length mismatch");
  double total = 0.0;
  for (size_t t = 0; t < adv_track.size(); ++t) {
    const double d = std::hypot(adv_track[t].x - ego_track[t].x, adv_track[t].y - ego_track[t].y);
    total += std::min(0.0, d - p);
  }
  return total;
}

namespace {

struct RoleIndex {
  int ego = -1;
  int adversary = -1;
  std::vector<int> others;
};

RoleIndex index_roles(const std::vector<Role>& roles) {
  RoleIndex idx;
  for (size_t i = 0; i < roles.size(); ++i) {
    const int ii = static_cast<int>(i);
    switch (roles[i]) {
      case Role::kEgo:
        if (idx.ego >= 0) throw ValidationError("composite_objective: multiple egos");
        idx.ego = ii;
        break;
      case Role::kAdversary:
        if (idx.adversary >= 0) throw ValidationError("composite_objective: multiple adversaries");
        idx.adversary = ii;
        break;
      case Role::kOther:
        idx.others.push_back(ii);
        break;
    }
  }
  if (idx.ego < 0) throw ValidationError("composite_objective: missing ego");
  if (idx.adversary < 0) throw ValidationError("composite_objective: missing adversary");
  return idx;
}

double pair_threshold(const VehicleFootprint& a, const VehicleFootprint& b, double d_buffer) {
  return a.radius() + b.radius() + d_buffer;
}

double env_threshold(const VehicleFootprint& f, double d_buffer) {
  return 0.5 * f.width + d_buffer;
}

double adv_threshold(const VehicleFootprint& adv, const VehicleFootprint& ego,
                     const GuidanceConfig& cfg) {
  double p = adv.radius() + ego.radius();
  if (cfg.adv_threshold == GuidanceConfig::AdvThreshold::kBuffered) p += cfg.d_buffer;
  return p;
}

}  // namespace

ObjectiveBreakdown composite_objective(const std::vector<AgentTrack>& tracks,
                                       const std::vector<Role>& roles,
                                       const std::vector<VehicleFootprint>& footprints,
                                       const SceneMap& map, const GuidanceConfig& config) {
  config.validate();
  if (tracks.size() != roles.size() || tracks.size() != footprints.size())
    throw ValidationError("composite_objective: aligned input sizes required");
  const RoleIndex idx = index_roles(roles);
  const size_t horizon = tracks.empty() ? 0 : tracks[0].size();
  if (horizon == 0) throw ValidationError("composite_objective: empty tracks");
  for (const AgentTrack& t : tracks)
    if (t.size() != horizon) throw ValidationError("composite_objective: track length mismatch");

  ObjectiveBreakdown out;

  // Background realism: vehicle pairs among the others, then their map terms.
  for (size_t a = 0; a < idx.others.size(); ++a) {
    for (size_t b = a + 1; b < idx.others.size(); ++b) {
      const int i = idx.others[a];
      const int j = idx.others[b];
      const double p = pair_threshold(footprints[static_cast<size_t>(i)],
                                      footprints[static_cast<size_t>(j)], config.d_buffer);
      for (size_t t = 0; t < horizon; ++t) {
        const double d = std::hypot(tracks[static_cast<size_t>(i)][t].x - tracks[static_cast<size_t>(j)][t].x,
                                    tracks[static_cast<size_t>(i)][t].y - tracks[static_cast<size_t>(j)][t].y);
        out.j_br += veh_coll_penalty(d, p);
      }
    }
  }
  for (const int i : idx.others) {
    const auto pens = env_coll_penalty(tracks[static_cast<size_t>(i)], map,
                                       env_threshold(footprints[static_cast<size_t>(i)], config.d_buffer));
    for (const double pen : pens) out.j_br += pen;
  }

  // Adversary realism: pairs against each background agent, plus its map term.
  const size_t adv = static_cast<size_t>(idx.adversary);
  for (const int j : idx.others) {
    const double p = pair_threshold(footprints[adv], footprints[static_cast<size_t>(j)], config.d_buffer);
    for (size_t t = 0; t < horizon; ++t) {
      const double d = std::hypot(tracks[adv][t].x - tracks[static_cast<size_t>(j)][t].x,
                                  tracks[adv][t].y - tracks[static_cast<size_t>(j)][t].y);
      out.j_ar += veh_coll_penalty(d, p);
    }
  }
  {
    const auto pens = env_coll_penalty(tracks[adv], map, env_threshold(footprints[adv], config.d_buffer));
    for (const double pen : pens) out.j_ar += pen;
  }

  out.j_adv = adv_objective(tracks[adv], tracks[static_cast<size_t>(idx.ego)],
                            adv_threshold(footprints[adv], footprints[static_cast<size_t>(idx.ego)], config));
  out.j_total = config.w_b * out.j_br + config.w_ar * out.j_ar + config.w_a * out.j_adv;
  return out;
}

namespace {

using ad::Tape;
using ad::Var;

Var pair_penalty_sum(Tape& tape, const TapeTrack& ta, const TapeTrack& tb, double p, Var acc) {
  const double inv_p = 1.0 / p;
  for (size_t t = 0; t < ta.size(); ++t) {
    const Var dx = ta[t][0] - tb[t][0];
    const Var dy = ta[t][1] - tb[t][1];
    const Var d = sqrt(dx * dx + dy * dy);
    acc = acc + relu(d * (-inv_p) + 1.0);
  }
  (void)tape;
  return acc;
}

Var env_penalty_sum(Tape& tape, const TapeTrack& track, const GridView& grid, double p_i,
                    Var zero, Var acc) {
  const double inv_p = 1.0 / p_i;
  for (const auto& pos : track) {
    const Var s = tape.grid_sample(grid, pos[0], pos[1]);
    const Var d = max(zero, s);
    acc = acc + relu(d * (-inv_p) + 1.0);
  }
  return acc;
}

}  // namespace

ObjectiveVars composite_objective_on_tape(ad::Tape& tape, const std::vector<TapeTrack>& tracks,
                                          const std::vector<Role>& roles,
                                          const std::vector<VehicleFootprint>& footprints,
                                          const SceneMap& map, const GuidanceConfig& config) {
  config.validate();
  if (tracks.size() != roles.size() || tracks.size() != footprints.size())
    throw ValidationError("composite_objective_on_tape: aligned input sizes required");
  const RoleIndex idx = index_roles(roles);
  const size_t horizon = tracks.empty() ? 0 : tracks[0].size();
  if (horizon == 0) throw ValidationError("composite_objective_on_tape: empty tracks");
  for (const TapeTrack& t : tracks)
    if (t.size() != horizon) throw ValidationError("composite_objective_on_tape: length mismatch");

  const GridView grid = map.grid_view();
  const Var zero = tape.scalar(0.0);

  Var j_br = tape.scalar(0.0);
  for (size_t a = 0; a < idx.others.size(); ++a)
    for (size_t b = a + 1; b < idx.others.size(); ++b) {
      const int i = idx.others[a];
      const int j = idx.others[b];
      j_br = pair_penalty_sum(tape, tracks[static_cast<size_t>(i)], tracks[static_cast<size_t>(j)],
                              pair_threshold(footprints[static_cast<size_t>(i)],
                                             footprints[static_cast<size_t>(j)], config.d_buffer),
                              j_br);
    }
  for (const int i : idx.others)
    j_br = env_penalty_sum(tape, tracks[static_cast<size_t>(i)], grid,
                           env_threshold(footprints[static_cast<size_t>(i)], config.d_buffer), zero,
                           j_br);

  const size_t adv = static_cast<size_t>(idx.adversary);
  Var j_ar = tape.scalar(0.0);
  for (const int j : idx.others)
    j_ar = pair_penalty_sum(tape, tracks[adv], tracks[static_cast<size_t>(j)],
                            pair_threshold(footprints[adv], footprints[static_cast<size_t>(j)],
                                           config.d_buffer),
                            j_ar);
  j_ar = env_penalty_sum(tape, tracks[adv], grid, env_threshold(footprints[adv], config.d_buffer),
                         zero, j_ar);

  Var j_adv = tape.scalar(0.0);
  {
    const TapeTrack& ego_track = tracks[static_cast<size_t>(idx.ego)];
    const double p = adv_threshold(footprints[adv], footprints[static_cast<size_t>(idx.ego)], config);
    for (size_t t = 0; t < horizon; ++t) {
      const Var dx = tracks[adv][t][0] - ego_track[t][0];
      const Var dy = tracks[adv][t][1] - ego_track[t][1];
      const Var d = sqrt(dx * dx + dy * dy);
      j_adv = j_adv + min(zero, d - p);
    }
  }

  ObjectiveVars out;
  out.j_br = j_br;
  out.j_ar = j_ar;
  out.j_adv = j_adv;
  out.j_total = j_br * config.w_b + j_ar * config.w_ar + j_adv * config.w_a;
  return out;
}

Mat guidance_gradient(const Mat& z, const Scenario& scenario, const VaeParams& vae,
                      const AgentTrack& ego_prediction, const GuidanceConfig& config) {
  config.validate();
  const int adv_scene_idx = scenario.adversary_index();
  if (adv_scene_idx < 0) throw ValidationError("guidance_gradient: scenario has no adversary");
  if (ego_prediction.size() != static_cast<size_t>(scenario.t_future))
    throw ValidationError("guidance_gradient: ego prediction must cover the future horizon");

  ad::Tape tape;
  DecodedTape decoded = decode_on_tape(tape, z, scenario, vae, /*z_requires_grad=*/true);

  // Assemble aligned (track, role, footprint) triples over all agents; the
  // ego's predicted future enters as constants.
  std::vector<TapeTrack> tracks;
  std::vector<Role> roles;
  std::vector<VehicleFootprint> footprints;
  tracks.reserve(scenario.agents.size());
  int adv_col = -1;
  size_t decoded_col = 0;
  for (const Agent& agent : scenario.agents) {
    roles.push_back(agent.role);
    footprints.push_back(agent.footprint);
    if (agent.role == Role::kEgo) {
      TapeTrack ego_track;
      ego_track.reserve(ego_prediction.size());
      for (const AgentState& s : ego_prediction)
        ego_track.push_back({tape.scalar(s.x), tape.scalar(s.y)});
      tracks.push_back(std::move(ego_track));
    } else {
      if (agent.role == Role::kAdversary) adv_col = static_cast<int>(decoded_col);
      tracks.push_back(decoded.pos[decoded_col]);
      ++decoded_col;
    }
  }

  const ObjectiveVars obj = composite_objective_on_tape(tape, tracks, roles, footprints,
                                                        scenario.map, config);

  // Routed passes: background realism reaches only non-adversary latents;
  // the adversary's latent follows its own realism plus the attack term.
  tape.backward(obj.j_br * config.w_b);
  const Mat g_background = tape.grad(decoded.z);
  tape.backward(obj.j_ar * config.w_ar + obj.j_adv * config.w_a);
  const Mat g_adversary = tape.grad(decoded.z);

  Mat grad = g_background;
  grad.col(adv_col) = g_adversary.col(adv_col);
  if (!grad.allFinite()) throw GuidanceError("guidance_gradient: non-finite gradient");
  return grad;
}

Mat guided_noise(const Mat& eps_hat, const Mat& gradients, double s) {
  if (eps_hat.rows() != gradients.rows() || eps_hat.cols() != gradients.cols())
    throw ValidationError("guided_noise: shape mismatch");
  return eps_hat - s * gradients;
}

}  // namespace sforge
