#pragma once

#include <array>
#include <vector>

#include "sforge/autodiff.hpp"
#include "sforge/scene.hpp"
#include "sforge/scene_map.hpp"
#include "sforge/vae.hpp"

namespace sforge {

using ad::Mat;

// Weights and thresholds of the guidance objective
//   J = w_b * J_br + w_ar * J_ar + w_a * J_adv
// where J_br penalizes collisions among background (non-adversary, non-ego)
// agents and their map violations, J_ar penalizes adversary collisions with
// background agents and the map, and J_adv rewards adversary-ego proximity.
struct GuidanceConfig {
  double scale = 0.5;  // s
  double w_b = 1.0;
  double w_ar = 1.0;
  double w_a = 2.0;
  double d_buffer = 0.25;  // meters, safety margin in pair thresholds
  // Adversary-ego threshold: contact uses r_adv + r_ego; buffered adds
  // d_buffer on top.
  enum class AdvThreshold { kContact, kBuffered };
  AdvThreshold adv_threshold = AdvThreshold::kContact;

  void validate() const;
};

struct ObjectiveBreakdown {
  double j_br = 0.0;   // >= 0
  double j_ar = 0.0;   // >= 0
  double j_adv = 0.0;  // <= 0
  double j_total = 0.0;
};

// 1 - d/p for d <= p, else 0. Sub-gradient 0 at d = p.
double veh_coll_penalty(double d, double p);

// Per-step map penalties: with d(t) = max(0, sdf at the track position),
// penalty is 1 - d/p_i when d <= p_i, else 0.
std::vector<double> env_coll_penalty(const AgentTrack& track, const SceneMap& map, double p_i);

// Sum over steps of min(0, distance(adv, ego) - p); always <= 0.
double adv_objective(const AgentTrack& adv_track, const AgentTrack& ego_track, double p);

// Full objective over future tracks. `tracks`, `roles`, and `footprints` are
// aligned and must contain exactly one ego (its track comes from the planner
// prediction, it never contributes to the realism terms) and exactly one
// adversary. All tracks must share one length.
ObjectiveBreakdown composite_objective(const std::vector<AgentTrack>& tracks,
                                       const std::vector<Role>& roles,
                                       const std::vector<VehicleFootprint>& footprints,
                                       const SceneMap& map, const GuidanceConfig& config);

// Tape-side objective over per-step (x, y) position vars (ego positions enter
// as constants on the same tape). Splitting the breakdown into separate vars
// lets callers run routed backward passes from different weighted sums.
struct ObjectiveVars {
  ad::Var j_br;
  ad::Var j_ar;
  ad::Var j_adv;
  ad::Var j_total;
};

using TapeTrack = std::vector<std::array<ad::Var, 2>>;

ObjectiveVars composite_objective_on_tape(ad::Tape& tape, const std::vector<TapeTrack>& tracks,
                                          const std::vector<Role>& roles,
                                          const std::vector<VehicleFootprint>& footprints,
                                          const SceneMap& map, const GuidanceConfig& config);

// Routed objective gradient with respect to the latent set: decodes z through
// the VAE on a tape, evaluates the objective against the supplied ego
// prediction, then takes one backward pass from w_b*J_br (populating
// non-adversary columns) and one from w_ar*J_ar + w_a*J_adv (populating the
// adversary column). The two groups never mix. Throws GuidanceError when the
// gradient is non-finite; the sampler treats that as a per-step fallback.
Mat guidance_gradient(const Mat& z, const Scenario& scenario, const VaeParams& vae,
                      const AgentTrack& ego_prediction, const GuidanceConfig& config);

// eps_hat - s * gradients, elementwise.
Mat guided_noise(const Mat& eps_hat, const Mat& gradients, double s);

}  // namespace sforge
