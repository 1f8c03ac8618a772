// Command-line runner: simulate, filter, eval, sweep.

#include "stiffid/config.hpp"
#include "stiffid/pipeline.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

namespace {

struct Overrides {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> particles;
  std::optional<int> workers;
  bool no_hyperlearn = false;
};

stiffid::ExperimentConfig resolve(const Overrides& o) {
  stiffid::ExperimentConfig c =
      o.config_path.empty() ? stiffid::ExperimentConfig() : stiffid::load_config(o.config_path);
  if (o.seed) c.seed = *o.seed;
  if (o.particles) {
    c.filter.particle_count = *o.particles;
    c.sweep.particle_counts = {*o.particles};
  }
  if (o.workers) {
    c.filter.workers = *o.workers;
    c.sweep.workers = *o.workers;
  }
  if (o.no_hyperlearn) c.filter.hyperparam_learning = false;
  c.validate();
  return c;
}

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config_path, "JSON experiment config (defaults when omitted)");
  cmd->add_option("--seed", o.seed, "root seed");
  cmd->add_option("--particles", o.particles, "particle count");
  cmd->add_option("--workers", o.workers, "worker threads");
  cmd->add_flag("--no-hyperlearn", o.no_hyperlearn, "freeze kernel hyperparameters");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Online stiffness learning with a marginalized particle filter"};
  app.require_subcommand(1);
  Overrides o;
  std::string out;
  std::string trace;
  std::string run_dir;

  auto* sim = app.add_subcommand("simulate", "simulate the surrogate and write trace.csv");
  auto* filt = app.add_subcommand("filter", "run the particle filter and UKF on a trace");
  auto* eval = app.add_subcommand("eval", "score a filter run against ground truth");
  auto* sweep = app.add_subcommand("sweep", "run seeds x particle counts and aggregate");
  for (auto* cmd : {sim, filt, eval, sweep}) {
    add_common(cmd, o);
    cmd->add_option("--out", out, "output directory");
  }
  filt->add_option("--trace", trace, "trace CSV")->required();
  eval->add_option("--trace", trace, "trace CSV with ground truth")->required();
  eval->add_option("--run", run_dir, "directory written by the filter command")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(stiffid::ExitCode::kValidation);
  }

  try {
    const stiffid::ExperimentConfig config = resolve(o);
    const std::filesystem::path dir = out.empty() ? config.output_dir : out;
    if (*sim) stiffid::cmd_simulate(config, dir);
    if (*filt) stiffid::cmd_filter(config, trace, dir);
    if (*eval) stiffid::cmd_eval(config, trace, run_dir, dir);
    if (*sweep) stiffid::cmd_sweep(config, dir);
  } catch (const stiffid::DegeneracyError& e) {
    std::cerr << "error: " << e.what();
    if (e.step() >= 0) std::cerr << " (step " << e.step() << ")";
    std::cerr << '\n';
    return static_cast<int>(e.code());
  } catch (const stiffid::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(e.code());
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(stiffid::ExitCode::kIo);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(stiffid::ExitCode::kNumerical);
  }
  return 0;
}
