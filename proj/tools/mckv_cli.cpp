// Command line entry point.  `mckv run <config>` parses the experiment
// config, applies overrides, and hands off to the runner.
//
// Exit codes: 0 success, 1 internal failure, 2 validation, 3 blow-up rate
// over the cap, 4 a quantitative threshold failed.

#include <cstdio>
#include <cstdlib>
#include <string>

#include "CLI11.hpp"
#include "mckv/config.hpp"
#include "mckv/errors.hpp"
#include "mckv/runner.hpp"
#include "mckv/version.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Mean-field particle experiments driven by Levy noise"};
  app.set_version_flag("--version",
                       std::string("mckv ") + mckv::kVersion + " (" + mckv::kBuildId + ")");

  std::string config_path;
  int threads = 0;
  std::string out_dir;
  std::string preset;

  CLI::App* run = app.add_subcommand("run", "run the experiment described by a config file");
  run->add_option("config", config_path, "path to the experiment config")->required();
  run->add_option("--threads", threads, "worker thread count override");
  run->add_option("--out", out_dir, "output directory override");
  run->add_option("--preset", preset, "budget preset: quick or full")
      ->check(CLI::IsMember({"quick", "full"}));
  app.require_subcommand(1);

  CLI11_PARSE(app, argc, argv);

  try {
    mckv::RunConfig config = mckv::parse_config(config_path);
    if (!preset.empty()) mckv::apply_preset(config, preset);
    if (threads > 0) config.threads = threads;
    // --out beats the environment, which beats the config file
    if (const char* env = std::getenv("MCKV_OUT"); env && *env) config.out_dir = env;
    if (!out_dir.empty()) config.out_dir = out_dir;
    return mckv::run_experiment(config);
  } catch (const mckv::ConfigError& err) {
    for (const auto& problem : err.errors) std::fprintf(stderr, "%s\n", problem.c_str());
    return mckv::kExitValidation;
  } catch (const std::exception& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return 1;
  }
}
