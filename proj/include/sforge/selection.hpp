#pragma once

#include <vector>

#include "sforge/scene.hpp"

namespace sforge {

struct FeasibilityLimits {
  double a_lon_max = 8.0;  // [m/s^2]
  double a_lat_max = 6.0;  // [m/s^2]

  // Throws ConfigError unless both limits are positive.
  void validate() const;
};

struct SelectionConfig {
  double w_g = 1.0;   // weight on the guidance objective
  double w_p = 10.0;  // penalty for infeasible candidates

  // Throws ConfigError on negative weights.
  void validate() const;
};

// 1 when every consecutive transition of every track respects the limits,
// else 0. Per interval: a_lon = dv/dt and a_lat = v * dheading/dt with the
// speed taken at the interval start and the heading difference wrapped.
// Tracks need at least 2 states; throws ValidationError otherwise.
int feasibility(const std::vector<AgentTrack>& tracks, const FeasibilityLimits& limits,
                double dt);

// score = w_g * j_total + w_p * (1 - phi); phi must be 0 or 1.
double score_candidate(double j_total, int phi, const SelectionConfig& config);

struct CandidateScore {
  int candidate_index = 0;
  double j_total = 0.0;
  int phi = 1;
  double score = 0.0;
};

// Returns the candidate_index with the smallest score; ties break to the
// smallest candidate_index. Throws ValidationError on an empty list or
// non-finite scores.
int select_best(const std::vector<CandidateScore>& scored);

}  // namespace sforge
