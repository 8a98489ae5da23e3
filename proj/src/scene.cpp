#include "sforge/scene.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "sforge/errors.hpp"

namespace sforge {

std::string role_name(Role role) {
  switch (role) {
    case Role::kEgo: return "ego";
    case Role::kAdversary: return "adversary";
    case Role::kOther: return "other";
  }
  throw ValidationError("role_name: unknown role");
}

Role role_from_name(const std::string& name) {
  if (name == "ego") return Role::kEgo;
  if (name == "adversary") return Role::kAdversary;
  if (name == "other") return Role::kOther;
  throw ValidationError("unknown role: " + name);
}

const Agent& Scenario::ego() const {
  for (const Agent& a : agents)
    if (a.role == Role::kEgo) return a;
  throw ValidationError("Scenario: no ego agent");
}

int Scenario::adversary_index() const {
  for (size_t i = 0; i < agents.size(); ++i)
    if (agents[i].role == Role::kAdversary) return static_cast<int>(i);
  return -1;
}

std::vector<int> Scenario::non_ego_indices() const {
  std::vector<int> out;
  for (size_t i = 0; i < agents.size(); ++i)
    if (agents[i].role != Role::kEgo) out.push_back(static_cast<int>(i));
  return out;
}

namespace {

void check_state(const AgentState& s, const char* where) {
  if (!std::isfinite(s.x) || !std::isfinite(s.y) || !std::isfinite(s.heading) ||
      !std::isfinite(s.speed))
    throw ValidationError(std::string(where) + ": non-finite state value");
  if (s.speed < 0.0) throw ValidationError(std::string(where) + ": negative speed");
  if (s.heading <= -M_PI - 1e-9 || s.heading > M_PI + 1e-9)
    throw ValidationError(std::string(where) + ": heading outside (-pi, pi]");
}

}  // namespace

void Scenario::validate_and_normalize() {
  if (!(dt > 0.0)) throw ValidationError("Scenario: dt must be positive");
  if (t_hist < 1 || t_future < 1) throw ValidationError("Scenario: bad horizon lengths");
  if (agents.empty()) throw ValidationError("Scenario: no agents");

  std::sort(agents.begin(), agents.end(),
            [](const Agent& a, const Agent& b) { return a.id < b.id; });

  std::set<int> ids;
  int ego_count = 0, adversary_count = 0;
  for (const Agent& a : agents) {
    if (!ids.insert(a.id).second) throw ValidationError("Scenario: duplicate agent id");
    if (a.role == Role::kEgo) ++ego_count;
    if (a.role == Role::kAdversary) ++adversary_count;
    if (!(a.footprint.length > 0.0) || !(a.footprint.width > 0.0))
      throw ValidationError("Scenario: non-positive vehicle dimensions");
    if (static_cast<int>(a.past.size()) != t_hist + 1)
      throw ValidationError("Scenario: past track length must be t_hist + 1");
    for (const AgentState& s : a.past) check_state(s, "past state");
    if (a.future) {
      if (static_cast<int>(a.future->size()) != t_future)
        throw ValidationError("Scenario: future track length must be t_future");
      for (const AgentState& s : *a.future) check_state(s, "future state");
    }
  }
  if (ego_count != 1) throw ValidationError("Scenario: exactly one ego required");
  if (adversary_count > 1) throw ValidationError("Scenario: at most one adversary allowed");
  map.validate();
}

int select_adversary(Scenario& scenario) {
  const AgentState& ego = scenario.ego().current();
  int best = -1;
  double best_dist = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < scenario.agents.size(); ++i) {
    Agent& a = scenario.agents[i];
    if (a.role == Role::kEgo) continue;
    const AgentState& s = a.current();
    // Feasibility screen: on drivable area and moving.
    if (!(scenario.map.sdf_query(s.x, s.y) > 0.0)) continue;
    if (!(s.speed > 0.0)) continue;
    const double d = std::hypot(s.x - ego.x, s.y - ego.y);
    // Strict < keeps the smallest id on ties (agents are sorted by id).
    if (d < best_dist) {
      best_dist = d;
      best = static_cast<int>(i);
    }
  }
  if (best < 0)
    throw ValidationError("select_adversary: no non-ego agent passes the feasibility screen");
  for (Agent& a : scenario.agents)
    if (a.role == Role::kAdversary) a.role = Role::kOther;
  scenario.agents[static_cast<size_t>(best)].role = Role::kAdversary;
  return best;
}

}  // namespace sforge
