#include "sforge/run_config.hpp"

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "sforge/errors.hpp"
#include "sforge/util.hpp"

namespace sforge {
namespace {

using nlohmann::json;

std::string adv_threshold_name(GuidanceConfig::AdvThreshold t) {
  return t == GuidanceConfig::AdvThreshold::kContact ? "contact" : "buffered";
}

GuidanceConfig::AdvThreshold adv_threshold_from_name(const std::string& name) {
  if (name == "contact") return GuidanceConfig::AdvThreshold::kContact;
  if (name == "buffered") return GuidanceConfig::AdvThreshold::kBuffered;
  throw ConfigError("unknown adv_threshold: " + name);
}

json idm_to_json(const IdmParams& idm) {
  return {{"desired_speed", idm.desired_speed},
          {"time_headway", idm.time_headway},
          {"min_gap", idm.min_gap},
          {"max_accel", idm.max_accel},
          {"comfort_decel", idm.comfort_decel}};
}

IdmParams idm_from_json(const json& j) {
  IdmParams idm;
  idm.desired_speed = j.at("desired_speed").get<double>();
  idm.time_headway = j.at("time_headway").get<double>();
  idm.min_gap = j.at("min_gap").get<double>();
  idm.max_accel = j.at("max_accel").get<double>();
  idm.comfort_decel = j.at("comfort_decel").get<double>();
  return idm;
}

json config_to_json_tree(const RunConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["paths"] = {{"data_dir", c.paths.data_dir},
                {"checkpoint_dir", c.paths.checkpoint_dir},
                {"output_dir", c.paths.output_dir}};
  j["data"] = {{"scenes", c.data.scenes},
               {"val_fraction", c.data.val_fraction},
               {"eval_scenes", c.data.eval_scenes}};
  j["generator"] = {{"layout", layout_name(c.generator.layout)},
                    {"n_agents", c.generator.n_agents},
                    {"dt", c.generator.dt},
                    {"t_hist", c.generator.t_hist},
                    {"t_future", c.generator.t_future},
                    {"lane_width", c.generator.lane_width},
                    {"spawn_span", c.generator.spawn_span},
                    {"min_speed", c.generator.min_speed},
                    {"max_speed", c.generator.max_speed},
                    {"idm", idm_to_json(c.generator.idm)}};
  j["vae"] = {{"d_z", c.vae.d_z},
              {"d_c", c.vae.d_c},
              {"hidden", c.vae.hidden},
              {"mp_rounds", c.vae.mp_rounds},
              {"train",
               {{"epochs", c.vae.train.epochs},
                {"batch_size", c.vae.train.batch_size},
                {"lr", c.vae.train.lr},
                {"beta_kl", c.vae.train.beta_kl},
                {"warmup_frac", c.vae.train.warmup_frac},
                {"grad_clip", c.vae.train.grad_clip},
                {"seed", c.vae.train.seed},
                {"target_ade", c.vae.train.target_ade},
                {"eval_every", c.vae.train.eval_every}}}};
  j["diffusion"] = {{"K", c.diffusion.K},
                    {"beta_start", c.diffusion.beta_start},
                    {"beta_end", c.diffusion.beta_end},
                    {"ddim_steps", c.diffusion.ddim_steps},
                    {"sample_count", c.diffusion.sample_count},
                    {"d_temb", c.diffusion.d_temb},
                    {"hidden", c.diffusion.hidden},
                    {"train",
                     {{"epochs", c.diffusion.train.epochs},
                      {"batch_size", c.diffusion.train.batch_size},
                      {"lr", c.diffusion.train.lr},
                      {"seed", c.diffusion.train.seed}}}};
  j["guidance"] = {{"scale", c.guidance.scale},
                   {"w_b", c.guidance.w_b},
                   {"w_ar", c.guidance.w_ar},
                   {"w_a", c.guidance.w_a},
                   {"d_buffer", c.guidance.d_buffer},
                   {"adv_threshold", adv_threshold_name(c.guidance.adv_threshold)}};
  j["selection"] = {{"w_g", c.selection.w_g}, {"w_p", c.selection.w_p}};
  j["planner"] = {{"idm", idm_to_json(c.planner.idm)},
                  {"emergency_decel", c.planner.emergency_decel},
                  {"lookahead", c.planner.lookahead}};
  j["feasibility"] = {{"a_lon_max", c.feasibility.a_lon_max},
                      {"a_lat_max", c.feasibility.a_lat_max}};
  return j;
}

RunConfig config_from_json_tree(const json& j) {
  RunConfig c;
  c.seed = j.at("seed").get<uint64_t>();
  const json& paths = j.at("paths");
  c.paths.data_dir = paths.at("data_dir").get<std::string>();
  c.paths.checkpoint_dir = paths.at("checkpoint_dir").get<std::string>();
  c.paths.output_dir = paths.at("output_dir").get<std::string>();
  const json& data = j.at("data");
  c.data.scenes = data.at("scenes").get<int>();
  c.data.val_fraction = data.at("val_fraction").get<double>();
  c.data.eval_scenes = data.at("eval_scenes").get<int>();
  const json& gen = j.at("generator");
  c.generator.layout = layout_from_name(gen.at("layout").get<std::string>());
  c.generator.n_agents = gen.at("n_agents").get<int>();
  c.generator.dt = gen.at("dt").get<double>();
  c.generator.t_hist = gen.at("t_hist").get<int>();
  c.generator.t_future = gen.at("t_future").get<int>();
  c.generator.lane_width = gen.at("lane_width").get<double>();
  c.generator.spawn_span = gen.at("spawn_span").get<double>();
  c.generator.min_speed = gen.at("min_speed").get<double>();
  c.generator.max_speed = gen.at("max_speed").get<double>();
  c.generator.idm = idm_from_json(gen.at("idm"));
  const json& vae = j.at("vae");
  c.vae.d_z = vae.at("d_z").get<int>();
  c.vae.d_c = vae.at("d_c").get<int>();
  c.vae.hidden = vae.at("hidden").get<int>();
  c.vae.mp_rounds = vae.at("mp_rounds").get<int>();
  const json& vt = vae.at("train");
  c.vae.train.epochs = vt.at("epochs").get<int>();
  c.vae.train.batch_size = vt.at("batch_size").get<int>();
  c.vae.train.lr = vt.at("lr").get<double>();
  c.vae.train.beta_kl = vt.at("beta_kl").get<double>();
  c.vae.train.warmup_frac = vt.at("warmup_frac").get<double>();
  c.vae.train.grad_clip = vt.at("grad_clip").get<double>();
  c.vae.train.seed = vt.at("seed").get<uint64_t>();
  c.vae.train.target_ade = vt.at("target_ade").get<double>();
  c.vae.train.eval_every = vt.at("eval_every").get<int>();
  const json& diff = j.at("diffusion");
  c.diffusion.K = diff.at("K").get<int>();
  c.diffusion.beta_start = diff.at("beta_start").get<double>();
  c.diffusion.beta_end = diff.at("beta_end").get<double>();
  c.diffusion.ddim_steps = diff.at("ddim_steps").get<int>();
  c.diffusion.sample_count = diff.at("sample_count").get<int>();
  c.diffusion.d_temb = diff.at("d_temb").get<int>();
  c.diffusion.hidden = diff.at("hidden").get<int>();
  const json& dt = diff.at("train");
  c.diffusion.train.epochs = dt.at("epochs").get<int>();
  c.diffusion.train.batch_size = dt.at("batch_size").get<int>();
  c.diffusion.train.lr = dt.at("lr").get<double>();
  c.diffusion.train.seed = dt.at("seed").get<uint64_t>();
  const json& gd = j.at("guidance");
  c.guidance.scale = gd.at("scale").get<double>();
  c.guidance.w_b = gd.at("w_b").get<double>();
  c.guidance.w_ar = gd.at("w_ar").get<double>();
  c.guidance.w_a = gd.at("w_a").get<double>();
  c.guidance.d_buffer = gd.at("d_buffer").get<double>();
  c.guidance.adv_threshold = adv_threshold_from_name(gd.at("adv_threshold").get<std::string>());
  const json& sel = j.at("selection");
  c.selection.w_g = sel.at("w_g").get<double>();
  c.selection.w_p = sel.at("w_p").get<double>();
  const json& pl = j.at("planner");
  c.planner.idm = idm_from_json(pl.at("idm"));
  c.planner.emergency_decel = pl.at("emergency_decel").get<double>();
  c.planner.lookahead = pl.at("lookahead").get<double>();
  const json& fe = j.at("feasibility");
  c.feasibility.a_lon_max = fe.at("a_lon_max").get<double>();
  c.feasibility.a_lat_max = fe.at("a_lat_max").get<double>();
  return c;
}

bool leaf_types_compatible(const json& base, const json& overlay) {
  // Integer-defaulted fields only accept integers; float-defaulted fields
  // accept any number (integers promote cleanly).
  if (base.is_number_integer() || base.is_number_unsigned()) {
    return overlay.is_number_integer() || overlay.is_number_unsigned();
  }
  if (base.is_number_float()) return overlay.is_number() && !overlay.is_boolean();
  if (base.is_string()) return overlay.is_string();
  if (base.is_boolean()) return overlay.is_boolean();
  return false;
}

// Overlays `patch` onto `base`, requiring every patch key to exist in the
// defaults with a matching shape. This is what makes config keys mirror the
// struct one to one and surfaces typos as errors instead of silent defaults.
void merge_checked(json& base, const json& patch, const std::string& path) {
  if (!patch.is_object()) {
    throw ConfigError("config section must be an object: " + (path.empty() ? "<root>" : path));
  }
  for (const auto& [key, value] : patch.items()) {
    const std::string here = path.empty() ? key : path + "." + key;
    if (!base.contains(key)) throw ConfigError("unknown config key: " + here);
    json& slot = base[key];
    if (slot.is_object()) {
      merge_checked(slot, value, here);
    } else if (leaf_types_compatible(slot, value)) {
      slot = value;
    } else {
      throw ConfigError("wrong type for config key: " + here);
    }
  }
}

}  // namespace

void PathsConfig::validate() const {
  if (data_dir.empty() || checkpoint_dir.empty() || output_dir.empty()) {
    throw ConfigError("paths: directories must be non-empty");
  }
}

void DataConfig::validate() const {
  if (scenes < 2) throw ConfigError("data: scenes must be at least 2");
  if (!(val_fraction > 0.0) || !(val_fraction < 1.0)) {
    throw ConfigError("data: val_fraction must lie in (0, 1)");
  }
  if (eval_scenes < 1) throw ConfigError("data: eval_scenes must be positive");
}

void VaeSection::validate() const {
  if (d_z < 1 || d_c < 1 || hidden < 1 || mp_rounds < 1) {
    throw ConfigError("vae: dimensions must be positive");
  }
  if (train.epochs < 1 || train.batch_size < 1) {
    throw ConfigError("vae.train: epochs and batch_size must be positive");
  }
  if (!(train.lr > 0.0)) throw ConfigError("vae.train: lr must be positive");
  if (train.beta_kl < 0.0) throw ConfigError("vae.train: beta_kl must be non-negative");
  if (!(train.warmup_frac >= 0.0) || !(train.warmup_frac <= 1.0)) {
    throw ConfigError("vae.train: warmup_frac must lie in [0, 1]");
  }
  if (train.eval_every < 1) throw ConfigError("vae.train: eval_every must be positive");
}

void DiffusionSection::validate() const {
  if (K < 1) throw ConfigError("diffusion: K must be positive");
  if (!(beta_start > 0.0) || !(beta_end > beta_start) || !(beta_end < 1.0)) {
    throw ConfigError("diffusion: betas must satisfy 0 < beta_start < beta_end < 1");
  }
  if (ddim_steps < 1 || K % ddim_steps != 0) {
    throw ConfigError("diffusion: ddim_steps must be positive and divide K");
  }
  if (sample_count < 1) throw ConfigError("diffusion: sample_count must be positive");
  if (d_temb < 1 || hidden < 1) throw ConfigError("diffusion: dimensions must be positive");
  if (train.epochs < 1 || train.batch_size < 1) {
    throw ConfigError("diffusion.train: epochs and batch_size must be positive");
  }
  if (!(train.lr > 0.0)) throw ConfigError("diffusion.train: lr must be positive");
}

void RunConfig::validate() const {
  paths.validate();
  data.validate();
  generator.validate();
  vae.validate();
  diffusion.validate();
  guidance.validate();
  selection.validate();
  planner.validate();
  feasibility.validate();
}

std::string RunConfig::vae_checkpoint_path() const {
  return paths.checkpoint_dir + "/vae.ckpt";
}

std::string RunConfig::ldm_checkpoint_path() const {
  return paths.checkpoint_dir + "/ldm.ckpt";
}

std::string run_config_to_json(const RunConfig& config) {
  return config_to_json_tree(config).dump(2) + "\n";
}

RunConfig run_config_from_json(const std::string& text, const std::string& source) {
  json tree = config_to_json_tree(RunConfig{});
  try {
    const json patch = json::parse(text);
    merge_checked(tree, patch, "");
    RunConfig config = config_from_json_tree(tree);
    config.validate();
    return config;
  } catch (const ConfigError&) {
    throw;
  } catch (const json::exception& e) {
    throw ConfigError(source + ": " + e.what());
  } catch (const Error& e) {
    throw ConfigError(source + ": " + e.what());
  }
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in.good()) throw NotFoundError("config file not found: " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  try {
    return run_config_from_json(buffer.str(), path);
  } catch (const ConfigError& e) {
    // Prefix file-context onto range errors raised by validate().
    const std::string what = e.what();
    if (what.find(path) == std::string::npos) throw ConfigError(path + ": " + what);
    throw;
  }
}

void save_run_config(const RunConfig& config, const std::string& path) {
  atomic_write_file(path, run_config_to_json(config));
}

}  // namespace sforge
