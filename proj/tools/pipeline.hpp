#pragma once

// Command layer shared by the CLI binary and the acceptance suite: corpus
// generation, training with resumable checkpoints, closed-loop simulation in
// the three modes, aggregation, and rendering. Every command is a
// deterministic function of (config, inputs); wall-clock measurements go to
// separate timing files so re-runs stay byte-identical.

#include <string>
#include <vector>

#include "sforge/diffusion.hpp"
#include "sforge/metrics.hpp"
#include "sforge/run_config.hpp"
#include "sforge/scene.hpp"
#include "sforge/simulate.hpp"
#include "sforge/vae.hpp"

namespace sforge::pipeline {

// Seed layout: one 2^32-wide block per run seed. Corpus generation walks the
// block from the bottom (train scenes first, validation continues the same
// cursor), evaluation scenes start at the block midpoint, so the three sets
// can never share a generator seed.
uint64_t corpus_seed_base(uint64_t run_seed);
uint64_t eval_seed_base(uint64_t run_seed);

struct GenDataReport {
  int train_count = 0;
  int val_count = 0;
  std::string manifest_path;
};

GenDataReport cmd_gen_data(const RunConfig& config);

// Reads every scenario_*.json under dir (sorted by name). Throws
// NotFoundError when the directory is missing or holds no scenarios.
std::vector<Scenario> load_corpus(const std::string& dir);

struct VaeCheckpoint {
  VaeParams params;
  int epochs_run = 0;
};

struct LdmCheckpoint {
  DenoiserParams params;
  NoiseSchedule sched;
  uint64_t vae_arch_hash = 0;
  int epochs_run = 0;
};

void save_vae_checkpoint(const std::string& path, VaeParams& params, int epochs_run);
VaeCheckpoint load_vae_checkpoint(const std::string& path);
void save_ldm_checkpoint(const std::string& path, DenoiserParams& params,
                         const NoiseSchedule& sched, uint64_t vae_arch_hash, int epochs_run);
LdmCheckpoint load_ldm_checkpoint(const std::string& path);

struct TrainReport {
  int epochs_total = 0;  // epochs recorded in the checkpoint after this call
  int epochs_run = 0;    // epochs executed by this call (0 = already done)
  double final_loss = 0.0;
  std::string checkpoint_path;
  std::string loss_csv_path;
};

// Train the stage to config's epoch target, resuming from an existing
// checkpoint when present (the loss CSV keeps prior rows and epoch numbering
// continues). cmd_train_ldm requires the VAE checkpoint and never writes it.
TrainReport cmd_train_vae(const RunConfig& config);
TrainReport cmd_train_ldm(const RunConfig& config);

enum class SimMode { kReplay, kUnguided, kGuided };

std::string mode_name(SimMode mode);
SimMode mode_from_name(const std::string& name);

struct SceneRecord {
  int scene_index = 0;
  uint64_t seed = 0;
  int selected_index = -1;  // -1 in replay mode
  int fallback_steps = 0;
  RunSummary summary;
  bool has_prediction = false;
  PredictionMetrics prediction;  // model modes only
};

struct SimulateReport {
  SimMode mode = SimMode::kReplay;
  std::string out_dir;
  std::vector<SceneRecord> scenes;
  BehaviorRates rates;
};

// Generates config.data.eval_scenes scenarios, produces non-ego futures per
// mode (replay: ground truth; unguided / guided: best of M diffusion
// candidates), runs the closed loop, and writes per-scene artifacts under
// <output_dir>/<mode>: scenario_NNN.json, result_NNN.json, candidates_NNN.csv
// (model modes), plus run.json and timings.csv.
SimulateReport cmd_simulate(const RunConfig& config, SimMode mode);

struct ModeAggregate {
  std::string mode;
  int scene_count = 0;
  BehaviorRates rates;
  double median_min_adv_ego_distance = 0.0;
  bool has_median = false;
  bool has_prediction = false;
  PredictionMetrics prediction;
  std::vector<int> scene_indices;          // valid runs with an adversary
  std::vector<double> min_adv_ego_distances;  // aligned with scene_indices
};

struct EvaluateReport {
  std::vector<ModeAggregate> modes;
  std::string metrics_csv_path;
  std::string summary_json_path;
};

// Aggregates one or more simulate output directories into metrics.csv and
// summary.json under out_dir; when both guided and unguided results are
// given, the summary adds rate deltas and a paired one-sided Wilcoxon test
// on minimum adversary-ego distances.
EvaluateReport cmd_evaluate(const std::vector<std::string>& result_dirs,
                            const std::string& out_dir);

// Renders a scenario file, or a closed-loop result (frames + events) when
// result_path is non-empty. Returns the frame count.
int cmd_render(const std::string& scenario_path, const std::string& result_path,
               const std::string& out_dir);

}  // namespace sforge::pipeline
