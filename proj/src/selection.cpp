#include "sforge/selection.hpp"

#include <cmath>

#include "sforge/errors.hpp"
#include "sforge/kinematics.hpp"

namespace sforge {

void FeasibilityLimits::validate() const {
  if (!(a_lon_max > 0.0) || !(a_lat_max > 0.0)) {
    throw ConfigError("feasibility: acceleration limits must be positive");
  }
}

void SelectionConfig::validate() const {
  if (w_g < 0.0 || w_p < 0.0 || !std::isfinite(w_g) || !std::isfinite(w_p)) {
    throw ConfigError("selection: weights must be finite and non-negative");
  }
}

int feasibility(const std::vector<AgentTrack>& tracks, const FeasibilityLimits& limits,
                double dt) {
  limits.validate();
  if (!(dt > 0.0)) throw ValidationError("feasibility: dt must be positive");
  for (const AgentTrack& track : tracks) {
    if (track.size() < 2) throw ValidationError("feasibility: tracks need at least 2 states");
    for (size_t t = 0; t + 1 < track.size(); ++t) {
      const AgentState& a = track[t];
      const AgentState& b = track[t + 1];
      const double a_lon = (b.speed - a.speed) / dt;
      const double a_lat = a.speed * angle_diff(b.heading, a.heading) / dt;
      if (std::abs(a_lon) > limits.a_lon_max || std::abs(a_lat) > limits.a_lat_max) return 0;
    }
  }
  return 1;
}

double score_candidate(double j_total, int phi, const SelectionConfig& config) {
  config.validate();
  if (phi != 0 && phi != 1) throw ValidationError("score_candidate: phi must be 0 or 1");
  if (!std::isfinite(j_total)) throw ValidationError("score_candidate: non-finite objective");
  return config.w_g * j_total + config.w_p * (1 - phi);
}

int select_best(const std::vector<CandidateScore>& scored) {
  if (scored.empty()) throw ValidationError("select_best: no candidates");
  const CandidateScore* best = nullptr;
  for (const CandidateScore& c : scored) {
    if (!std::isfinite(c.score)) throw ValidationError("select_best: non-finite score");
    if (best == nullptr || c.score < best->score ||
        (c.score == best->score && c.candidate_index < best->candidate_index)) {
      best = &c;
    }
  }
  return best->candidate_index;
}

}  // namespace sforge
