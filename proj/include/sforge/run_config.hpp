#pragma once

#include <cstdint>
#include <string>

#include "sforge/diffusion.hpp"
#include "sforge/guidance.hpp"
#include "sforge/planner.hpp"
#include "sforge/scenario_gen.hpp"
#include "sforge/selection.hpp"
#include "sforge/vae.hpp"

namespace sforge {

struct PathsConfig {
  std::string data_dir = "data";
  std::string checkpoint_dir = "checkpoints";
  std::string output_dir = "out";
  void validate() const;
};

// Corpus sizes. Train, validation, and evaluation scenarios draw from
// disjoint seed ranges derived from the run seed.
struct DataConfig {
  int scenes = 1000;          // generated corpus size (train + validation)
  double val_fraction = 0.2;  // share of `scenes` held out for validation
  int eval_scenes = 100;      // closed-loop evaluation scenes
  void validate() const;
};

struct VaeSection {
  int d_z = 32;
  int d_c = 64;
  int hidden = 128;
  int mp_rounds = 2;
  VaeTrainConfig train;
  void validate() const;
};

struct DiffusionSection {
  int K = 100;              // forward-process steps
  double beta_start = 1e-4;
  double beta_end = 0.02;
  int ddim_steps = 20;      // inference steps; must divide K
  int sample_count = 10;    // candidates per scene (M)
  int d_temb = 32;
  int hidden = 128;
  DenoiserTrainConfig train;
  void validate() const;
};

// Full run configuration. The JSON form mirrors the struct layout key for
// key; unknown or type-mismatched keys are rejected.
struct RunConfig {
  uint64_t seed = 1;
  PathsConfig paths;
  DataConfig data;
  GeneratorConfig generator;
  VaeSection vae;
  DiffusionSection diffusion;
  GuidanceConfig guidance;
  SelectionConfig selection;
  PlannerConfig planner;
  FeasibilityLimits feasibility;

  void validate() const;

  std::string vae_checkpoint_path() const;
  std::string ldm_checkpoint_path() const;
};

// Serializes every field (sorted keys, shortest round-trip numbers), so a
// saved config reloads to an identical struct.
std::string run_config_to_json(const RunConfig& config);

// Parses an overlay onto the defaults: present keys replace fields, absent
// keys keep their default. Unknown keys, wrong types, malformed JSON, and
// out-of-range values all throw ConfigError naming `source`.
RunConfig run_config_from_json(const std::string& text,
                               const std::string& source = "<string>");

// File variants. load throws NotFoundError when the path is missing.
RunConfig load_run_config(const std::string& path);
void save_run_config(const RunConfig& config, const std::string& path);

}  // namespace sforge
