#include "pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <limits>
#include <sstream>

#include "sforge/errors.hpp"
#include "sforge/guidance.hpp"
#include "sforge/nn.hpp"
#include "sforge/planner.hpp"
#include "sforge/render.hpp"
#include "sforge/rng.hpp"
#include "sforge/scenario_gen.hpp"
#include "sforge/scenario_io.hpp"
#include "sforge/selection.hpp"
#include "sforge/util.hpp"

namespace sforge::pipeline {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr const char* kVaeMagic = "SFVAE001";
constexpr const char* kLdmMagic = "SFLDM001";
constexpr uint64_t kVaeInitTag = 0x76616520696e6974ull;
constexpr uint64_t kLdmInitTag = 0x6c646d20696e6974ull;
constexpr uint64_t kSampleTag = 0x73616d706c657221ull;
constexpr int kMaxSeedSkips = 1000;

std::string num17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string frame_name(const char* stem, int index, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%03d.%s", stem, index, ext);
  return buf;
}

std::string corpus_name(int index) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "scenario_%05d.json", index);
  return buf;
}

std::string slurp_file(const std::string& path, const char* what) {
  std::ifstream in(path, std::ios::binary);
  if (!in.good()) throw NotFoundError(std::string(what) + " not found: " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

json parse_json_file(const std::string& path, const char* what) {
  try {
    return json::parse(slurp_file(path, what));
  } catch (const json::exception& e) {
    throw ParseError(path, e.what());
  }
}

// Generates the next valid scenario at or after *cursor, advancing it past
// the consumed seed. Seeds whose traffic draw cannot be placed are skipped.
Scenario next_scenario(const GeneratorConfig& config, const SceneMap& map, uint64_t* cursor,
                       bool with_adversary) {
  for (int skips = 0; skips <= kMaxSeedSkips; ++skips) {
    const uint64_t seed = (*cursor)++;
    try {
      Scenario sc = generate_synthetic_scenario(config, seed, map);
      if (with_adversary) select_adversary(sc);
      return sc;
    } catch (const GenerationError&) {
    } catch (const ValidationError&) {
    }
  }
  throw GenerationError("no valid scenario found after " + std::to_string(kMaxSeedSkips) +
                        " seeds");
}

int ego_index_of(const Scenario& sc) {
  for (size_t i = 0; i < sc.agents.size(); ++i) {
    if (sc.agents[i].role == Role::kEgo) return static_cast<int>(i);
  }
  throw ValidationError("scenario has no ego agent");
}

json summary_to_json(const RunSummary& s) {
  json j;
  j["valid"] = s.valid;
  j["has_adversary"] = s.has_adversary;
  j["other_count"] = s.other_count;
  j["adv_ego_collision"] = s.adv_ego_collision;
  j["adv_other_collision"] = s.adv_other_collision;
  j["adv_offroad"] = s.adv_offroad;
  j["others_colliding_ego"] = s.others_colliding_ego;
  j["others_colliding_other"] = s.others_colliding_other;
  j["others_offroad"] = s.others_offroad;
  j["min_adv_ego_distance"] =
      std::isfinite(s.min_adv_ego_distance) ? json(s.min_adv_ego_distance) : json();
  j["adv_abs_accel_sum"] = s.adv_abs_accel_sum;
  j["adv_accel_count"] = s.adv_accel_count;
  j["other_abs_accel_sum"] = s.other_abs_accel_sum;
  j["other_accel_count"] = s.other_accel_count;
  return j;
}

RunSummary summary_from_json(const json& j) {
  RunSummary s;
  s.valid = j.at("valid").get<bool>();
  s.has_adversary = j.at("has_adversary").get<bool>();
  s.other_count = j.at("other_count").get<int>();
  s.adv_ego_collision = j.at("adv_ego_collision").get<bool>();
  s.adv_other_collision = j.at("adv_other_collision").get<bool>();
  s.adv_offroad = j.at("adv_offroad").get<bool>();
  s.others_colliding_ego = j.at("others_colliding_ego").get<int>();
  s.others_colliding_other = j.at("others_colliding_other").get<int>();
  s.others_offroad = j.at("others_offroad").get<int>();
  const json& dist = j.at("min_adv_ego_distance");
  s.min_adv_ego_distance =
      dist.is_null() ? std::numeric_limits<double>::infinity() : dist.get<double>();
  s.adv_abs_accel_sum = j.at("adv_abs_accel_sum").get<double>();
  s.adv_accel_count = j.at("adv_accel_count").get<int>();
  s.other_abs_accel_sum = j.at("other_abs_accel_sum").get<double>();
  s.other_accel_count = j.at("other_accel_count").get<int>();
  return s;
}

json result_to_json(SimMode mode, const SceneRecord& rec, const SimulationResult& sim) {
  json j;
  j["mode"] = mode_name(mode);
  j["scene_index"] = rec.scene_index;
  j["scene_seed"] = rec.seed;
  j["scenario_file"] = frame_name("scenario", rec.scene_index, "json");
  j["selected_index"] = rec.selected_index;
  j["fallback_steps"] = rec.fallback_steps;
  j["summary"] = summary_to_json(rec.summary);
  if (rec.has_prediction) {
    j["prediction"] = {{"ade", rec.prediction.ade},
                       {"fde", rec.prediction.fde},
                       {"min_sfde", rec.prediction.min_sfde},
                       {"fdd", rec.prediction.fdd}};
  }
  json events = json::array();
  for (const SimEvent& e : sim.events) {
    events.push_back({{"kind", e.kind == EventKind::kCollision ? "collision" : "offroad"},
                      {"step", e.step},
                      {"agent_a", e.agent_a},
                      {"agent_b", e.agent_b}});
  }
  j["events"] = events;
  json frames = json::array();
  for (const std::vector<AgentState>& frame : sim.states) {
    json row = json::array();
    for (const AgentState& s : frame) row.push_back({s.x, s.y, s.heading, s.speed});
    frames.push_back(row);
  }
  j["frames"] = frames;
  return j;
}

SimulationResult result_frames_from_json(const json& j) {
  SimulationResult sim;
  for (const json& frame : j.at("frames")) {
    std::vector<AgentState> states;
    for (const json& row : frame) {
      if (!row.is_array() || row.size() != 4) {
        throw ValidationError("result frames must hold [x, y, heading, speed] rows");
      }
      AgentState s;
      s.x = row[0].get<double>();
      s.y = row[1].get<double>();
      s.heading = row[2].get<double>();
      s.speed = row[3].get<double>();
      states.push_back(s);
    }
    sim.states.push_back(std::move(states));
  }
  for (const json& e : j.at("events")) {
    SimEvent event;
    const std::string kind = e.at("kind").get<std::string>();
    if (kind == "collision") {
      event.kind = EventKind::kCollision;
    } else if (kind == "offroad") {
      event.kind = EventKind::kOffRoad;
    } else {
      throw ValidationError("unknown event kind: " + kind);
    }
    event.step = e.at("step").get<int>();
    event.agent_a = e.at("agent_a").get<int>();
    event.agent_b = e.at("agent_b").get<int>();
    sim.events.push_back(event);
  }
  return sim;
}

// Appends rows to a CSV, creating it with `header` when absent.
void append_csv(const std::string& path, const std::string& header,
                const std::string& rows, bool fresh) {
  std::string content;
  if (!fresh && fs::exists(path)) {
    content = slurp_file(path, "csv");
  } else {
    content = header + "\n";
  }
  content += rows;
  atomic_write_file(path, content);
}

struct CandidateOutcome {
  std::vector<std::vector<AgentTrack>> tracks;  // per candidate, non-ego order
  std::vector<CandidateScore> scores;
  std::string csv;
  int selected = 0;
  int fallback_steps = 0;
};

CandidateOutcome score_candidates(const Scenario& sc, const std::vector<LatentSample>& samples,
                                  const VaeParams& vae, const AgentTrack& ego_prediction,
                                  const RunConfig& config) {
  CandidateOutcome out;
  const int ego_idx = ego_index_of(sc);
  std::vector<Role> roles;
  std::vector<VehicleFootprint> footprints;
  for (const Agent& agent : sc.agents) {
    roles.push_back(agent.role);
    footprints.push_back(agent.footprint);
  }
  const std::vector<int> non_ego = sc.non_ego_indices();

  out.csv = "candidate,j_br,j_ar,j_adv,j_total,phi,score\n";
  for (size_t m = 0; m < samples.size(); ++m) {
    std::vector<AgentTrack> tracks = decode(samples[m].z0, sc, vae);

    // Feasibility screens the full executed motion, so the step off the
    // current state is included.
    std::vector<AgentTrack> with_current;
    for (size_t j = 0; j < tracks.size(); ++j) {
      AgentTrack full;
      full.push_back(sc.agents[static_cast<size_t>(non_ego[j])].past.back());
      full.insert(full.end(), tracks[j].begin(), tracks[j].end());
      with_current.push_back(std::move(full));
    }
    const int phi = feasibility(with_current, config.feasibility, sc.dt);

    // Objective tracks aligned with scenario agent order; the ego slot takes
    // the planner prediction.
    std::vector<AgentTrack> aligned(sc.agents.size());
    aligned[static_cast<size_t>(ego_idx)] = ego_prediction;
    for (size_t j = 0; j < non_ego.size(); ++j) {
      aligned[static_cast<size_t>(non_ego[j])] = tracks[j];
    }
    const ObjectiveBreakdown obj =
        composite_objective(aligned, roles, footprints, sc.map, config.guidance);
    const double score = score_candidate(obj.j_total, phi, config.selection);
    out.scores.push_back({static_cast<int>(m), obj.j_total, phi, score});

    out.csv += std::to_string(m) + ',' + num17(obj.j_br) + ',' + num17(obj.j_ar) + ',' +
               num17(obj.j_adv) + ',' + num17(obj.j_total) + ',' + std::to_string(phi) + ',' +
               num17(score) + '\n';
    out.tracks.push_back(std::move(tracks));
  }
  out.selected = select_best(out.scores);
  out.fallback_steps = samples[static_cast<size_t>(out.selected)].fallback_steps;
  out.csv += "selected," + std::to_string(out.selected) + "\n";
  return out;
}

}  // namespace

uint64_t corpus_seed_base(uint64_t run_seed) { return run_seed << 32; }

uint64_t eval_seed_base(uint64_t run_seed) { return (run_seed << 32) + (1ull << 31); }

GenDataReport cmd_gen_data(const RunConfig& config) {
  config.validate();
  const int n_total = config.data.scenes;
  int n_val = static_cast<int>(std::lround(n_total * config.data.val_fraction));
  n_val = std::max(1, std::min(n_val, n_total - 1));
  const int n_train = n_total - n_val;

  const SceneMap map = build_layout_map(config.generator);
  uint64_t cursor = corpus_seed_base(config.seed);
  const uint64_t seed_begin = cursor;

  GenDataReport report;
  for (int split = 0; split < 2; ++split) {
    const bool is_train = split == 0;
    const std::string dir = config.paths.data_dir + (is_train ? "/train" : "/val");
    const int count = is_train ? n_train : n_val;
    for (int i = 0; i < count; ++i) {
      const Scenario sc = next_scenario(config.generator, map, &cursor, false);
      write_scenario_file(sc, dir + "/" + corpus_name(i));
    }
    (is_train ? report.train_count : report.val_count) = count;
  }

  json manifest;
  manifest["seed"] = config.seed;
  manifest["layout"] = layout_name(config.generator.layout);
  manifest["n_agents"] = config.generator.n_agents;
  manifest["train_count"] = report.train_count;
  manifest["val_count"] = report.val_count;
  manifest["seed_begin"] = seed_begin;
  manifest["seed_end"] = cursor;  // exclusive; train and val share the cursor
  report.manifest_path = config.paths.data_dir + "/manifest.json";
  atomic_write_file(report.manifest_path, manifest.dump(2) + "\n");
  return report;
}

std::vector<Scenario> load_corpus(const std::string& dir) {
  if (!fs::is_directory(dir)) {
    throw NotFoundError("corpus directory not found: " + dir + " (run gen-data first)");
  }
  std::vector<std::string> paths;
  for (const fs::directory_entry& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("scenario_", 0) == 0 && entry.path().extension() == ".json") {
      paths.push_back(entry.path().string());
    }
  }
  if (paths.empty()) {
    throw NotFoundError("no scenarios under " + dir + " (run gen-data first)");
  }
  std::sort(paths.begin(), paths.end());
  std::vector<Scenario> scenes;
  scenes.reserve(paths.size());
  for (const std::string& path : paths) scenes.push_back(read_scenario_file(path));
  return scenes;
}

void save_vae_checkpoint(const std::string& path, VaeParams& params, int epochs_run) {
  json header;
  header["kind"] = "vae";
  header["d_z"] = params.d_z;
  header["d_c"] = params.d_c;
  header["hidden"] = params.hidden;
  header["mp_rounds"] = params.mp_rounds;
  header["t_hist"] = params.t_hist;
  header["t_future"] = params.t_future;
  header["arch_hash"] = params.arch_hash();
  header["epochs_run"] = epochs_run;
  nn::save_checkpoint(path, kVaeMagic, header.dump(), nn::as_const_params(params.named_params()));
}

VaeCheckpoint load_vae_checkpoint(const std::string& path) {
  if (!fs::exists(path)) throw NotFoundError("vae checkpoint not found: " + path);
  const json header = json::parse(nn::read_checkpoint_header(path, kVaeMagic));
  VaeCheckpoint ckpt;
  ckpt.params = VaeParams::init(0, header.at("d_z").get<int>(), header.at("d_c").get<int>(),
                                header.at("hidden").get<int>(), header.at("mp_rounds").get<int>(),
                                header.at("t_hist").get<int>(), header.at("t_future").get<int>());
  nn::load_checkpoint(path, kVaeMagic, ckpt.params.named_params());
  if (header.at("arch_hash").get<uint64_t>() != ckpt.params.arch_hash()) {
    throw CheckpointError("vae checkpoint arch hash mismatch: " + path);
  }
  ckpt.epochs_run = header.at("epochs_run").get<int>();
  return ckpt;
}

void save_ldm_checkpoint(const std::string& path, DenoiserParams& params,
                         const NoiseSchedule& sched, uint64_t vae_arch_hash, int epochs_run) {
  json header;
  header["kind"] = "ldm";
  header["d_z"] = params.d_z;
  header["d_c"] = params.d_c;
  header["d_temb"] = params.d_temb;
  header["hidden"] = params.hidden;
  header["K"] = sched.K;
  header["beta_start"] = sched.beta.front();
  header["beta_end"] = sched.beta.back();
  header["arch_hash"] = params.arch_hash();
  header["vae_arch_hash"] = vae_arch_hash;
  header["epochs_run"] = epochs_run;
  nn::save_checkpoint(path, kLdmMagic, header.dump(), nn::as_const_params(params.named_params()));
}

LdmCheckpoint load_ldm_checkpoint(const std::string& path) {
  if (!fs::exists(path)) throw NotFoundError("ldm checkpoint not found: " + path);
  const json header = json::parse(nn::read_checkpoint_header(path, kLdmMagic));
  LdmCheckpoint ckpt;
  ckpt.params = DenoiserParams::init(header.at("d_z").get<int>(), header.at("d_c").get<int>(), 0,
                                     header.at("d_temb").get<int>(),
                                     header.at("hidden").get<int>());
  nn::load_checkpoint(path, kLdmMagic, ckpt.params.named_params());
  if (header.at("arch_hash").get<uint64_t>() != ckpt.params.arch_hash()) {
    throw CheckpointError("ldm checkpoint arch hash mismatch: " + path);
  }
  ckpt.sched = build_schedule(header.at("K").get<int>(), header.at("beta_start").get<double>(),
                              header.at("beta_end").get<double>());
  ckpt.vae_arch_hash = header.at("vae_arch_hash").get<uint64_t>();
  ckpt.epochs_run = header.at("epochs_run").get<int>();
  return ckpt;
}

TrainReport cmd_train_vae(const RunConfig& config) {
  config.validate();
  const std::vector<Scenario> train_set = load_corpus(config.paths.data_dir + "/train");
  const std::vector<Scenario> val_set = load_corpus(config.paths.data_dir + "/val");

  TrainReport report;
  report.checkpoint_path = config.vae_checkpoint_path();
  report.loss_csv_path = config.paths.output_dir + "/vae_loss.csv";

  VaeParams params;
  int done = 0;
  if (fs::exists(report.checkpoint_path)) {
    VaeCheckpoint ckpt = load_vae_checkpoint(report.checkpoint_path);
    if (ckpt.params.d_z != config.vae.d_z || ckpt.params.d_c != config.vae.d_c ||
        ckpt.params.hidden != config.vae.hidden ||
        ckpt.params.mp_rounds != config.vae.mp_rounds ||
        ckpt.params.t_hist != config.generator.t_hist ||
        ckpt.params.t_future != config.generator.t_future) {
      throw CheckpointError("vae checkpoint architecture differs from config: " +
                            report.checkpoint_path);
    }
    params = std::move(ckpt.params);
    done = ckpt.epochs_run;
  } else {
    params = VaeParams::init(mix_seed(config.seed, kVaeInitTag), config.vae.d_z, config.vae.d_c,
                             config.vae.hidden, config.vae.mp_rounds, config.generator.t_hist,
                             config.generator.t_future);
  }

  const int target = config.vae.train.epochs;
  if (done >= target) {
    report.epochs_total = done;
    return report;
  }

  VaeTrainConfig train_cfg = config.vae.train;
  train_cfg.epochs = target - done;
  std::string rows;
  double last_loss = 0.0;
  const VaeTrainStats stats =
      train_vae(params, train_set, val_set, train_cfg, [&](int epoch, double loss, double) {
        rows += std::to_string(done + epoch) + ',' + num17(loss) + '\n';
        last_loss = loss;
      });

  report.epochs_run = stats.epochs_run;
  report.epochs_total = done + stats.epochs_run;
  report.final_loss = last_loss;
  save_vae_checkpoint(report.checkpoint_path, params, report.epochs_total);
  append_csv(report.loss_csv_path, "epoch,loss", rows, done == 0);
  return report;
}

TrainReport cmd_train_ldm(const RunConfig& config) {
  config.validate();
  VaeCheckpoint vae = load_vae_checkpoint(config.vae_checkpoint_path());
  const std::vector<Scenario> train_set = load_corpus(config.paths.data_dir + "/train");

  std::vector<DenoiserTrainItem> dataset;
  dataset.reserve(train_set.size());
  for (const Scenario& sc : train_set) {
    DenoiserTrainItem item;
    const GaussianPosterior post = encode_posterior(sc, vae.params);
    item.mu = post.mean;
    item.log_std = post.log_std;
    item.c = encode_prior(sc, vae.params);
    dataset.push_back(std::move(item));
  }

  const NoiseSchedule sched =
      build_schedule(config.diffusion.K, config.diffusion.beta_start, config.diffusion.beta_end);

  TrainReport report;
  report.checkpoint_path = config.ldm_checkpoint_path();
  report.loss_csv_path = config.paths.output_dir + "/ldm_loss.csv";

  DenoiserParams params;
  int done = 0;
  if (fs::exists(report.checkpoint_path)) {
    LdmCheckpoint ckpt = load_ldm_checkpoint(report.checkpoint_path);
    if (ckpt.params.d_z != vae.params.d_z || ckpt.params.d_c != vae.params.d_c ||
        ckpt.params.d_temb != config.diffusion.d_temb ||
        ckpt.params.hidden != config.diffusion.hidden || ckpt.sched.K != config.diffusion.K ||
        ckpt.vae_arch_hash != vae.params.arch_hash()) {
      throw CheckpointError("ldm checkpoint architecture differs from config: " +
                            report.checkpoint_path);
    }
    params = std::move(ckpt.params);
    done = ckpt.epochs_run;
  } else {
    params = DenoiserParams::init(vae.params.d_z, vae.params.d_c,
                                  mix_seed(config.seed, kLdmInitTag), config.diffusion.d_temb,
                                  config.diffusion.hidden);
  }

  const int target = config.diffusion.train.epochs;
  if (done >= target) {
    report.epochs_total = done;
    return report;
  }

  DenoiserTrainConfig train_cfg = config.diffusion.train;
  train_cfg.epochs = target - done;
  std::string rows;
  double last_loss = 0.0;
  const std::vector<double> losses =
      train_denoiser(params, dataset, sched, train_cfg, [&](int epoch, double loss) {
        rows += std::to_string(done + epoch) + ',' + num17(loss) + '\n';
        last_loss = loss;
      });

  report.epochs_run = static_cast<int>(losses.size());
  report.epochs_total = done + report.epochs_run;
  report.final_loss = last_loss;
  save_ldm_checkpoint(report.checkpoint_path, params, sched, vae.params.arch_hash(),
                      report.epochs_total);
  append_csv(report.loss_csv_path, "epoch,loss", rows, done == 0);
  return report;
}

std::string mode_name(SimMode mode) {
  switch (mode) {
    case SimMode::kReplay: return "replay";
    case SimMode::kUnguided: return "unguided";
    case SimMode::kGuided: return "guided";
  }
  throw ValidationError("mode_name: unknown mode");
}

SimMode mode_from_name(const std::string& name) {
  if (name == "replay") return SimMode::kReplay;
  if (name == "unguided") return SimMode::kUnguided;
  if (name == "guided") return SimMode::kGuided;
  throw ConfigError("unknown mode: " + name);
}

SimulateReport cmd_simulate(const RunConfig& config, SimMode mode) {
  config.validate();
  SimulateReport report;
  report.mode = mode;
  report.out_dir = config.paths.output_dir + "/" + mode_name(mode);

  // Model modes load the frozen checkpoints; replay never touches them.
  VaeCheckpoint vae;
  LdmCheckpoint ldm;
  if (mode != SimMode::kReplay) {
    vae = load_vae_checkpoint(config.vae_checkpoint_path());
    ldm = load_ldm_checkpoint(config.ldm_checkpoint_path());
    if (ldm.vae_arch_hash != vae.params.arch_hash()) {
      throw CheckpointError("ldm checkpoint was trained against a different vae");
    }
    if (config.diffusion.ddim_steps < 1 || ldm.sched.K % config.diffusion.ddim_steps != 0) {
      throw ConfigError("diffusion: ddim_steps must divide the checkpoint's K");
    }
  }

  const SceneMap map = build_layout_map(config.generator);
  uint64_t cursor = eval_seed_base(config.seed);
  std::vector<RunSummary> summaries;
  std::string timing_rows = "scene,seconds\n";

  for (int i = 0; i < config.data.eval_scenes; ++i) {
    const double t0 = now_seconds();
    const Scenario sc = next_scenario(config.generator, map, &cursor, true);

    SceneRecord rec;
    rec.scene_index = i;
    rec.seed = cursor - 1;  // next_scenario consumed this seed
    write_scenario_file(sc, report.out_dir + "/" + frame_name("scenario", i, "json"));

    std::vector<AgentTrack> futures;
    bool planned = true;
    if (mode == SimMode::kReplay) {
      for (int idx : sc.non_ego_indices()) {
        futures.push_back(*sc.agents[static_cast<size_t>(idx)].future);
      }
    } else {
      std::vector<AgentState> currents;
      std::vector<VehicleFootprint> footprints;
      for (const Agent& agent : sc.agents) {
        currents.push_back(agent.past.back());
        footprints.push_back(agent.footprint);
      }
      try {
        const AgentTrack ego_prediction =
            plan_ego(sc.map, currents, footprints, static_cast<size_t>(ego_index_of(sc)),
                     sc.t_future, sc.dt, config.planner);

        const Mat conditioning = encode_prior(sc, vae.params);
        GuidanceHook hook;
        const GuidanceHook* hook_ptr = nullptr;
        if (mode == SimMode::kGuided) {
          hook.scale = config.guidance.scale;
          hook.gradient = [&](const Mat& z, int) {
            return guidance_gradient(z, sc, vae.params, ego_prediction, config.guidance);
          };
          hook_ptr = &hook;
        }

        SampleRequest req;
        req.sample_count = config.diffusion.sample_count;
        req.ddim_steps = config.diffusion.ddim_steps;
        req.seed = mix_seed(rec.seed, kSampleTag);
        const std::vector<LatentSample> samples = sample_latents(
            req, ldm.params, ldm.sched, conditioning,
            static_cast<int>(sc.non_ego_indices().size()), hook_ptr);

        const CandidateOutcome outcome =
            score_candidates(sc, samples, vae.params, ego_prediction, config);
        atomic_write_file(report.out_dir + "/" + frame_name("candidates", i, "csv"),
                          outcome.csv);
        rec.selected_index = outcome.selected;
        rec.fallback_steps = outcome.fallback_steps;
        futures = outcome.tracks[static_cast<size_t>(outcome.selected)];
        rec.prediction = prediction_metrics(sc, outcome.tracks);
        rec.has_prediction = true;
      } catch (const PlannerError&) {
        planned = false;
      }
    }

    SimulationResult sim;
    if (planned) {
      sim = run_closed_loop(sc, futures, config.planner);
    } else {
      sim.planner_failed = true;
      std::vector<AgentState> currents;
      for (const Agent& agent : sc.agents) currents.push_back(agent.past.back());
      sim.states.push_back(std::move(currents));
    }
    rec.summary = summarize_run(sc, sim);
    summaries.push_back(rec.summary);

    atomic_write_file(report.out_dir + "/" + frame_name("result", i, "json"),
                      result_to_json(mode, rec, sim).dump(2) + "\n");
    timing_rows += std::to_string(i) + ',' + num17(now_seconds() - t0) + '\n';
    report.scenes.push_back(std::move(rec));
  }

  report.rates = behavior_rates(summaries);

  json run;
  run["mode"] = mode_name(mode);
  run["scenes"] = config.data.eval_scenes;
  run["seed"] = config.seed;
  run["samples"] = config.diffusion.sample_count;
  atomic_write_file(report.out_dir + "/run.json", run.dump(2) + "\n");
  atomic_write_file(report.out_dir + "/timings.csv", timing_rows);
  return report;
}

EvaluateReport cmd_evaluate(const std::vector<std::string>& result_dirs,
                            const std::string& out_dir) {
  if (result_dirs.empty()) throw ConfigError("evaluate: no result directories given");

  EvaluateReport report;
  for (const std::string& dir : result_dirs) {
    const json run = parse_json_file(dir + "/run.json", "run manifest");
    ModeAggregate agg;
    agg.mode = run.at("mode").get<std::string>();
    for (const ModeAggregate& existing : report.modes) {
      if (existing.mode == agg.mode) {
        throw ConfigError("evaluate: duplicate mode " + agg.mode);
      }
    }

    std::vector<std::string> paths;
    for (const fs::directory_entry& entry : fs::directory_iterator(dir)) {
      const std::string name = entry.path().filename().string();
      if (name.rfind("result_", 0) == 0 && entry.path().extension() == ".json") {
        paths.push_back(entry.path().string());
      }
    }
    if (paths.empty()) throw NotFoundError("no result files under " + dir);
    std::sort(paths.begin(), paths.end());

    std::vector<RunSummary> summaries;
    std::vector<PredictionMetrics> predictions;
    for (const std::string& path : paths) {
      const json j = parse_json_file(path, "result");
      const RunSummary summary = summary_from_json(j.at("summary"));
      summaries.push_back(summary);
      if (summary.valid && summary.has_adversary &&
          std::isfinite(summary.min_adv_ego_distance)) {
        agg.scene_indices.push_back(j.at("scene_index").get<int>());
        agg.min_adv_ego_distances.push_back(summary.min_adv_ego_distance);
      }
      if (j.contains("prediction")) {
        const json& p = j.at("prediction");
        predictions.push_back({p.at("ade").get<double>(), p.at("fde").get<double>(),
                               p.at("min_sfde").get<double>(), p.at("fdd").get<double>()});
      }
    }
    agg.scene_count = static_cast<int>(summaries.size());
    agg.rates = behavior_rates(summaries);
    if (!agg.min_adv_ego_distances.empty()) {
      agg.median_min_adv_ego_distance = median(agg.min_adv_ego_distances);
      agg.has_median = true;
    }
    if (!predictions.empty()) {
      agg.prediction = mean_prediction_metrics(predictions);
      agg.has_prediction = true;
    }
    report.modes.push_back(std::move(agg));
  }

  std::string csv =
      "mode,scenes,valid_runs,excluded_runs,adv_ego_collision_pct,adv_other_collision_pct,"
      "adv_offroad_pct,other_ego_collision_pct,other_other_collision_pct,other_offroad_pct,"
      "adv_mean_abs_accel,other_mean_abs_accel,median_min_adv_ego_distance,ade,fde,min_sfde,"
      "fdd\n";
  json summary;
  for (const ModeAggregate& agg : report.modes) {
    const BehaviorRates& r = agg.rates;
    csv += agg.mode + ',' + std::to_string(agg.scene_count) + ',' +
           std::to_string(r.valid_runs) + ',' + std::to_string(r.excluded_runs) + ',' +
           num17(r.adv_ego_collision_pct) + ',' + num17(r.adv_other_collision_pct) + ',' +
           num17(r.adv_offroad_pct) + ',' + num17(r.other_ego_collision_pct) + ',' +
           num17(r.other_other_collision_pct) + ',' + num17(r.other_offroad_pct) + ',' +
           num17(r.adv_mean_abs_accel) + ',' + num17(r.other_mean_abs_accel) + ',';
    csv += agg.has_median ? num17(agg.median_min_adv_ego_distance) : "";
    csv += ',';
    if (agg.has_prediction) {
      csv += num17(agg.prediction.ade) + ',' + num17(agg.prediction.fde) + ',' +
             num17(agg.prediction.min_sfde) + ',' + num17(agg.prediction.fdd);
    } else {
      csv += ",,,";
    }
    csv += '\n';

    json m;
    m["scenes"] = agg.scene_count;
    m["valid_runs"] = r.valid_runs;
    m["excluded_runs"] = r.excluded_runs;
    m["adv_ego_collision_pct"] = r.adv_ego_collision_pct;
    m["adv_other_collision_pct"] = r.adv_other_collision_pct;
    m["adv_offroad_pct"] = r.adv_offroad_pct;
    m["other_ego_collision_pct"] = r.other_ego_collision_pct;
    m["other_other_collision_pct"] = r.other_other_collision_pct;
    m["other_offroad_pct"] = r.other_offroad_pct;
    m["adv_mean_abs_accel"] = r.adv_mean_abs_accel;
    m["other_mean_abs_accel"] = r.other_mean_abs_accel;
    if (agg.has_median) m["median_min_adv_ego_distance"] = agg.median_min_adv_ego_distance;
    if (agg.has_prediction) {
      m["prediction"] = {{"ade", agg.prediction.ade},
                         {"fde", agg.prediction.fde},
                         {"min_sfde", agg.prediction.min_sfde},
                         {"fdd", agg.prediction.fdd}};
    }
    summary["modes"][agg.mode] = m;
  }

  const ModeAggregate* guided = nullptr;
  const ModeAggregate* unguided = nullptr;
  for (const ModeAggregate& agg : report.modes) {
    if (agg.mode == "guided") guided = &agg;
    if (agg.mode == "unguided") unguided = &agg;
  }
  if (guided != nullptr && unguided != nullptr) {
    json cmp;
    cmp["adv_ego_collision_pp_guided_minus_unguided"] =
        guided->rates.adv_ego_collision_pct - unguided->rates.adv_ego_collision_pct;
    cmp["adv_offroad_pp_guided_minus_unguided"] =
        guided->rates.adv_offroad_pct - unguided->rates.adv_offroad_pct;
    // Paired one-sided test that guidance lowers the minimum adversary-ego
    // distance, over scenes valid in both runs.
    std::vector<double> g_dist, u_dist;
    size_t gi = 0, ui = 0;
    while (gi < guided->scene_indices.size() && ui < unguided->scene_indices.size()) {
      if (guided->scene_indices[gi] == unguided->scene_indices[ui]) {
        g_dist.push_back(guided->min_adv_ego_distances[gi]);
        u_dist.push_back(unguided->min_adv_ego_distances[ui]);
        ++gi;
        ++ui;
      } else if (guided->scene_indices[gi] < unguided->scene_indices[ui]) {
        ++gi;
      } else {
        ++ui;
      }
    }
    cmp["paired_scenes"] = static_cast<int>(g_dist.size());
    try {
      cmp["wilcoxon_p_guided_min_distance_less"] = wilcoxon_signed_rank_p(g_dist, u_dist);
    } catch (const ValidationError&) {
      cmp["wilcoxon_p_guided_min_distance_less"] = json();
    }
    summary["comparisons"] = cmp;
  }

  report.metrics_csv_path = out_dir + "/metrics.csv";
  report.summary_json_path = out_dir + "/summary.json";
  atomic_write_file(report.metrics_csv_path, csv);
  atomic_write_file(report.summary_json_path, summary.dump(2) + "\n");
  return report;
}

int cmd_render(const std::string& scenario_path, const std::string& result_path,
               const std::string& out_dir) {
  const Scenario sc = read_scenario_file(scenario_path);
  if (result_path.empty()) {
    return render_scenario_frames(sc, out_dir);
  }
  const json j = parse_json_file(result_path, "result");
  SimulationResult sim;
  try {
    sim = result_frames_from_json(j);
  } catch (const json::exception& e) {
    throw ParseError(result_path, e.what());
  } catch (const ValidationError& e) {
    throw ParseError(result_path, e.what());
  }
  return render_result_frames(sc, sim, out_dir);
}

}  // namespace sforge::pipeline
