#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "sforge/errors.hpp"
#include "sforge/metrics.hpp"
#include "sforge/rng.hpp"
#include "sforge/scenario_gen.hpp"
#include "test_helpers.hpp"

using namespace sforge;
using testing::make_scenario;

namespace {

std::vector<AgentTrack> ground_truth_futures(const Scenario& sc) {
  std::vector<AgentTrack> futures;
  for (int idx : sc.non_ego_indices()) {
    futures.push_back(*sc.agents[static_cast<size_t>(idx)].future);
  }
  return futures;
}

std::vector<AgentTrack> shifted(std::vector<AgentTrack> tracks, double dx, double dy) {
  for (AgentTrack& track : tracks) {
    for (AgentState& s : track) {
      s.x += dx;
      s.y += dy;
    }
  }
  return tracks;
}

}  // namespace

TEST_CASE("perfect predictions score zero") {
  const Scenario sc = generate_synthetic_scenario(GeneratorConfig{}, 23);
  const PredictionMetrics m = prediction_metrics(sc, {ground_truth_futures(sc)});
  CHECK(m.ade == 0.0);
  CHECK(m.fde == 0.0);
  CHECK(m.min_sfde == 0.0);
  CHECK(m.fdd == 0.0);  // single sample: empty pair set
}

TEST_CASE("constant lateral offset gives unit errors") {
  const Scenario sc = generate_synthetic_scenario(GeneratorConfig{}, 23);
  const std::vector<AgentTrack> off = shifted(ground_truth_futures(sc), 0.0, 1.0);
  const PredictionMetrics m = prediction_metrics(sc, {off});
  CHECK(m.ade == 1.0);
  CHECK(m.fde == 1.0);
  CHECK(m.min_sfde == 1.0);
  // Identical samples have no diversity.
  const PredictionMetrics twice = prediction_metrics(sc, {off, off});
  CHECK(twice.ade == 1.0);
  CHECK(twice.fde == 1.0);
  CHECK(twice.min_sfde == 1.0);
  CHECK(twice.fdd == 0.0);
}

TEST_CASE("final diversity measures the spread between samples") {
  const Scenario sc = generate_synthetic_scenario(GeneratorConfig{}, 23);
  const std::vector<AgentTrack> truth = ground_truth_futures(sc);
  std::vector<AgentTrack> forked = truth;
  for (AgentTrack& track : forked) track.back().x += 3.0;
  const PredictionMetrics m = prediction_metrics(sc, {truth, forked});
  CHECK(m.fdd == 3.0);
  CHECK(m.min_sfde == 0.0);  // the exact sample wins
  CHECK(m.fde == 1.5);       // (0 + 3) / 2 per agent
  CHECK(m.ade == 3.0 / 24.0);
}

TEST_CASE("best sample drives min_sfde") {
  const Scenario sc = generate_synthetic_scenario(GeneratorConfig{}, 23);
  const std::vector<AgentTrack> truth = ground_truth_futures(sc);
  const PredictionMetrics m = prediction_metrics(
      sc, {shifted(truth, 0.0, 2.0), shifted(truth, 0.5, 0.0), shifted(truth, 0.0, -4.0)});
  CHECK(m.min_sfde == 0.5);
  CHECK(m.fde == doctest::Approx((2.0 + 0.5 + 4.0) / 3.0));
}

TEST_CASE("prediction metrics validation") {
  Scenario sc = generate_synthetic_scenario(GeneratorConfig{}, 23);
  const std::vector<AgentTrack> truth = ground_truth_futures(sc);
  CHECK_THROWS_AS(prediction_metrics(sc, {}), ValidationError);
  std::vector<AgentTrack> short_sample = truth;
  short_sample.pop_back();
  CHECK_THROWS_AS(prediction_metrics(sc, {short_sample}), ValidationError);
  std::vector<AgentTrack> short_track = truth;
  short_track[0].pop_back();
  CHECK_THROWS_AS(prediction_metrics(sc, {short_track}), ValidationError);
  sc.agents[2].future.reset();
  CHECK_THROWS_AS(prediction_metrics(sc, {truth}), ValidationError);
}

TEST_CASE("mean prediction metrics averages fields") {
  PredictionMetrics a{1.0, 2.0, 3.0, 4.0};
  PredictionMetrics b{3.0, 2.0, 1.0, 0.0};
  const PredictionMetrics m = mean_prediction_metrics({a, b});
  CHECK(m.ade == 2.0);
  CHECK(m.fde == 2.0);
  CHECK(m.min_sfde == 2.0);
  CHECK(m.fdd == 2.0);
  CHECK_THROWS_AS(mean_prediction_metrics({}), ValidationError);
}

TEST_CASE("run summary classifies events by role") {
  // Agents sorted by id: 0 = ego, 1 = adversary, 2..3 = others.
  Scenario sc = make_scenario({{0, Role::kEgo, {0.0, 0.0, 0.0, 4.0}, {}},
                               {1, Role::kAdversary, {0.0, 3.0, 0.0, 4.0}, {}},
                               {2, Role::kOther, {8.0, 0.0, 0.0, 4.0}, {}},
                               {3, Role::kOther, {14.0, 0.0, 0.0, 4.0}, {}}},
                              40.0, false);
  SimulationResult result;
  // Three frames with hand-picked adversary-ego distances 10, 5, 7.
  auto frame_with = [&](double adv_x, double adv_speed) {
    std::vector<AgentState> frame(4);
    frame[0] = AgentState{0.0, 0.0, 0.0, 4.0};
    frame[1] = AgentState{adv_x, 0.0, 0.0, adv_speed};
    frame[2] = AgentState{8.0, 0.0, 0.0, 4.0};
    frame[3] = AgentState{14.0, 0.0, 0.0, 4.0};
    return frame;
  };
  result.states.push_back(frame_with(10.0, 5.0));
  result.states.push_back(frame_with(5.0, 6.0));
  result.states.push_back(frame_with(7.0, 6.5));
  result.events.push_back({EventKind::kCollision, 1, 0, 1});  // adv hits ego
  result.events.push_back({EventKind::kCollision, 2, 2, 3});  // other vs other
  result.events.push_back({EventKind::kOffRoad, 1, 2, -1});
  result.events.push_back({EventKind::kOffRoad, 2, 2, -1});  // same agent again

  const RunSummary s = summarize_run(sc, result);
  CHECK(s.valid);
  CHECK(s.has_adversary);
  CHECK(s.other_count == 2);
  CHECK(s.adv_ego_collision);
  CHECK_FALSE(s.adv_other_collision);
  CHECK_FALSE(s.adv_offroad);
  CHECK(s.others_colliding_ego == 0);
  CHECK(s.others_colliding_other == 2);
  CHECK(s.others_offroad == 1);
  CHECK(s.min_adv_ego_distance == 5.0);
  // Adversary speeds 5 -> 6 -> 6.5 at dt = 0.5: |a| = 2 and 1.
  CHECK(s.adv_abs_accel_sum == 3.0);
  CHECK(s.adv_accel_count == 2);
  CHECK(s.other_abs_accel_sum == 0.0);
  CHECK(s.other_accel_count == 4);
}

TEST_CASE("run summary counts distinct agents and flags failures") {
  Scenario sc = make_scenario({{0, Role::kEgo, {0.0, 0.0, 0.0, 4.0}, {}},
                               {1, Role::kOther, {6.0, 0.0, 0.0, 4.0}, {}},
                               {2, Role::kOther, {12.0, 0.0, 0.0, 4.0}, {}}},
                              40.0, false);
  SimulationResult result;
  std::vector<AgentState> frame(3);
  result.states.push_back(frame);
  result.events.push_back({EventKind::kCollision, 1, 0, 1});
  result.events.push_back({EventKind::kCollision, 2, 0, 1});  // same pair, later step
  const RunSummary s = summarize_run(sc, result);
  CHECK_FALSE(s.has_adversary);
  CHECK(s.others_colliding_ego == 1);
  CHECK(s.min_adv_ego_distance == std::numeric_limits<double>::infinity());

  SimulationResult failed;
  failed.planner_failed = true;
  failed.states.push_back(frame);
  const RunSummary f = summarize_run(sc, failed);
  CHECK_FALSE(f.valid);
}

TEST_CASE("behavior rates aggregate over (agent, run) units") {
  RunSummary r1;
  r1.valid = true;
  r1.has_adversary = true;
  r1.other_count = 2;
  r1.adv_ego_collision = true;
  r1.others_offroad = 1;
  r1.adv_abs_accel_sum = 3.0;
  r1.adv_accel_count = 2;
  RunSummary r2;
  r2.valid = false;  // excluded
  RunSummary r3;
  r3.valid = true;
  r3.has_adversary = true;
  r3.other_count = 2;
  r3.others_colliding_ego = 1;
  r3.adv_abs_accel_sum = 1.0;
  r3.adv_accel_count = 2;

  const BehaviorRates rates = behavior_rates({r1, r2, r3});
  CHECK(rates.valid_runs == 2);
  CHECK(rates.excluded_runs == 1);
  CHECK(rates.adv_ego_collision_pct == 50.0);
  CHECK(rates.adv_other_collision_pct == 0.0);
  CHECK(rates.adv_offroad_pct == 0.0);
  CHECK(rates.other_offroad_pct == 25.0);
  CHECK(rates.other_ego_collision_pct == 25.0);
  CHECK(rates.other_other_collision_pct == 0.0);
  CHECK(rates.adv_mean_abs_accel == 1.0);
  CHECK(rates.other_mean_abs_accel == 0.0);
  CHECK_THROWS_AS(behavior_rates({}), ValidationError);
}

TEST_CASE("median of odd and even counts") {
  CHECK(median({3.0, 1.0, 2.0}) == 2.0);
  CHECK(median({4.0, 1.0, 3.0, 2.0}) == 2.5);
  CHECK(median({7.0}) == 7.0);
  CHECK_THROWS_AS(median({}), ValidationError);
}

TEST_CASE("wilcoxon matches reference values") {
  // Reference p-values from an established statistics package
  // (one-sided, continuity correction, zeros dropped, average ranks).
  const std::vector<double> a{1.0, 2.0, 3.0, 4.0, 1.0, 9.0};
  const std::vector<double> b{2.0, 4.0, 6.0, 8.0, 7.0, 4.0};
  CHECK(wilcoxon_signed_rank_p(a, b) == doctest::Approx(0.14725369684005507).epsilon(1e-9));
  const std::vector<double> a2{0.0, 0.0, 5.0, 1.0, 3.0, 2.0, 8.0, 1.0};
  const std::vector<double> b2{1.0, 2.0, 2.0, 2.0, 4.0, 4.0, 7.0, 1.0};
  CHECK(wilcoxon_signed_rank_p(a2, b2) == doctest::Approx(0.24515715983453445).epsilon(1e-9));
}

TEST_CASE("wilcoxon detects a consistent shift") {
  Rng rng(101);
  std::vector<double> base, lifted;
  for (int i = 0; i < 30; ++i) {
    const double x = rng.normal(0.0, 1.0);
    base.push_back(x);
    lifted.push_back(x + 0.8 + std::abs(rng.normal(0.0, 0.3)));
  }
  CHECK(wilcoxon_signed_rank_p(base, lifted) < 1e-4);
  CHECK(wilcoxon_signed_rank_p(lifted, base) > 0.999);
  // The two one-sided p-values are complementary up to the correction.
  const double sum =
      wilcoxon_signed_rank_p(base, lifted) + wilcoxon_signed_rank_p(lifted, base);
  CHECK(sum > 0.95);
  CHECK(sum < 1.05);
}

TEST_CASE("wilcoxon validation") {
  CHECK_THROWS_AS(wilcoxon_signed_rank_p({1.0, 2.0}, {1.0}), ValidationError);
  CHECK_THROWS_AS(wilcoxon_signed_rank_p({1.0, 2.0, 3.0, 4.0}, {0.0, 0.0, 0.0, 0.0}),
                  ValidationError);
  const std::vector<double> same{1.0, 2.0, 3.0, 4.0, 5.0, 6.0};
  CHECK_THROWS_AS(wilcoxon_signed_rank_p(same, same), ValidationError);
  CHECK_THROWS_AS(
      wilcoxon_signed_rank_p({1.0, 2.0, 3.0, 4.0, 5.0, std::nan("")},
                             {0.0, 0.0, 0.0, 0.0, 0.0, 0.0}),
      ValidationError);
}
