#include <CLI11.hpp>
#include <cstdio>
#include <string>
#include <vector>

#include "pipeline.hpp"
#include "sforge/errors.hpp"
#include "sforge/run_config.hpp"

namespace {

using namespace sforge;

struct Cli {
  std::string config_path;
  int64_t seed = -1;
  int scenes = -1;
  int samples = -1;
  std::string out;
  std::string checkpoint;
  std::string mode = "replay";
  std::string stage;
  std::string scenario_file;
  std::string result_file;
  std::vector<std::string> result_dirs;
};

void add_common(CLI::App* cmd, Cli& cli) {
  cmd->add_option("--config", cli.config_path, "run configuration file (JSON)");
  cmd->add_option("--seed", cli.seed, "override the config seed")->check(CLI::NonNegativeNumber);
}

// Loads the config (defaults when --config is absent) and applies the flag
// overrides that mirror config keys.
RunConfig make_config(const Cli& cli, bool scenes_are_eval) {
  RunConfig config;
  if (!cli.config_path.empty()) {
    try {
      config = load_run_config(cli.config_path);
    } catch (const NotFoundError& e) {
      // A bad --config path is an operator mistake, not a missing pipeline
      // artifact.
      throw ConfigError(e.what());
    }
  }
  if (cli.seed >= 0) config.seed = static_cast<uint64_t>(cli.seed);
  if (cli.scenes > 0) {
    (scenes_are_eval ? config.data.eval_scenes : config.data.scenes) = cli.scenes;
  }
  if (cli.samples > 0) config.diffusion.sample_count = cli.samples;
  if (!cli.checkpoint.empty()) config.paths.checkpoint_dir = cli.checkpoint;
  config.validate();
  return config;
}

int dispatch(const CLI::App& app, Cli& cli) {
  if (app.got_subcommand("gen-data")) {
    RunConfig config = make_config(cli, false);
    if (!cli.out.empty()) config.paths.data_dir = cli.out;
    const pipeline::GenDataReport report = pipeline::cmd_gen_data(config);
    std::printf("gen-data: %d train + %d val scenarios under %s\n", report.train_count,
                report.val_count, config.paths.data_dir.c_str());
    return 0;
  }
  if (app.got_subcommand("train")) {
    RunConfig config = make_config(cli, false);
    if (!cli.out.empty()) config.paths.output_dir = cli.out;
    if (cli.stage != "vae" && cli.stage != "ldm") {
      throw ConfigError("train stage must be vae or ldm, got: " + cli.stage);
    }
    const pipeline::TrainReport report = cli.stage == "vae" ? pipeline::cmd_train_vae(config)
                                                            : pipeline::cmd_train_ldm(config);
    if (report.epochs_run == 0) {
      std::printf("train %s: checkpoint already at %d epochs (%s)\n", cli.stage.c_str(),
                  report.epochs_total, report.checkpoint_path.c_str());
    } else {
      std::printf("train %s: %d epochs (total %d), final loss %.6f, checkpoint %s\n",
                  cli.stage.c_str(), report.epochs_run, report.epochs_total, report.final_loss,
                  report.checkpoint_path.c_str());
    }
    return 0;
  }
  if (app.got_subcommand("simulate")) {
    RunConfig config = make_config(cli, true);
    if (!cli.out.empty()) config.paths.output_dir = cli.out;
    const pipeline::SimulateReport report =
        pipeline::cmd_simulate(config, pipeline::mode_from_name(cli.mode));
    std::printf("simulate %s: %zu scenes under %s (adv-ego collision %.1f%%, %d excluded)\n",
                cli.mode.c_str(), report.scenes.size(), report.out_dir.c_str(),
                report.rates.adv_ego_collision_pct, report.rates.excluded_runs);
    return 0;
  }
  if (app.got_subcommand("evaluate")) {
    const std::string out = cli.out.empty() ? std::string(".") : cli.out;
    const pipeline::EvaluateReport report = pipeline::cmd_evaluate(cli.result_dirs, out);
    std::printf("evaluate: %zu mode(s), wrote %s and %s\n", report.modes.size(),
                report.metrics_csv_path.c_str(), report.summary_json_path.c_str());
    return 0;
  }
  if (app.got_subcommand("render")) {
    const int frames = pipeline::cmd_render(cli.scenario_file, cli.result_file, cli.out);
    std::printf("render: %d frames under %s\n", frames, cli.out.c_str());
    return 0;
  }
  throw ConfigError("no command given");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"guided latent-diffusion traffic scenario engine"};
  app.require_subcommand(1);
  Cli cli;

  CLI::App* gen = app.add_subcommand("gen-data", "generate the synthetic scenario corpus");
  add_common(gen, cli);
  gen->add_option("--scenes", cli.scenes, "corpus size (train + val)")
      ->check(CLI::PositiveNumber);
  gen->add_option("--out", cli.out, "data directory override");

  CLI::App* train = app.add_subcommand("train", "train a model stage to its epoch target");
  train->add_option("stage", cli.stage, "vae or ldm")->required();
  add_common(train, cli);
  train->add_option("--checkpoint", cli.checkpoint, "checkpoint directory override");
  train->add_option("--out", cli.out, "output directory override (loss curves)");

  CLI::App* sim = app.add_subcommand("simulate", "generate scenes and run the closed loop");
  add_common(sim, cli);
  sim->add_option("--mode", cli.mode, "replay, unguided, or guided")
      ->check(CLI::IsMember({"replay", "unguided", "guided"}));
  sim->add_option("--scenes", cli.scenes, "evaluation scene count")->check(CLI::PositiveNumber);
  sim->add_option("--samples", cli.samples, "candidates per scene")->check(CLI::PositiveNumber);
  sim->add_option("--out", cli.out, "output directory override");
  sim->add_option("--checkpoint", cli.checkpoint, "checkpoint directory override");

  CLI::App* eval = app.add_subcommand("evaluate", "aggregate simulate output directories");
  eval->add_option("dirs", cli.result_dirs, "simulate output directories")->required();
  eval->add_option("--out", cli.out, "directory for metrics.csv and summary.json");

  CLI::App* render = app.add_subcommand("render", "write SVG frames for a scenario or result");
  render->add_option("--scenario", cli.scenario_file, "scenario JSON file")->required();
  render->add_option("--result", cli.result_file, "closed-loop result JSON file");
  render->add_option("--out", cli.out, "frame output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    return dispatch(app, cli);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const NotFoundError& e) {
    std::fprintf(stderr, "missing dependency: %s\n", e.what());
    return 3;
  } catch (const sforge::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  }
}
