#pragma once

#include "stiffid/config.hpp"
#include "stiffid/metrics.hpp"
#include "stiffid/particle_filter.hpp"
#include "stiffid/simulate.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace stiffid {

/// Simulates the configured surrogate with ground-truth columns.
SimTrace run_simulation(const ExperimentConfig& config);

struct FilterRun {
  Matrix states;        // weighted-mean state per trace row
  Vector stiffness;     // weighted-mean stiffness per trace row
  Vector ess;
  std::vector<int> resampled;
  Vector log_signal_variance;
  Vector log_length_scale;
  std::uint64_t basis_clamps = 0;
  std::unique_ptr<MarginalizedParticleFilter> filter;  // final particle set
};

using StepObserver = std::function<void(const MarginalizedParticleFilter&)>;

/// Runs the marginalized particle filter over a trace. Row 0 is the initial
/// particle set; row t uses (u_{t-1}, u_t, y_t). `observer` sees the particle
/// set after every step.
FilterRun run_filter(const ExperimentConfig& config, const SimTrace& trace,
                     const StepObserver& observer = {});

struct UkfRun {
  Matrix states;
  Vector stiffness;
  std::uint64_t covariance_repairs = 0;
};

UkfRun run_ukf(const ExperimentConfig& config, const SimTrace& trace);

/// Multi-step prediction grid for the learned GP, the UKF stiffness track and
/// the run-average stiffness.
MetricReport prediction_report(const ExperimentConfig& config, const SimTrace& trace,
                               const LearnedGp& gp, const Vector& ukf_stiffness,
                               double mean_stiffness);

/// Mixture mean and standard deviation of the learned stiffness on the
/// configured two-axis grid. Columns: q_1..q_3, k_mean, k_std, k_true.
Matrix stiffness_surface(const ExperimentConfig& config, const MarginalizedParticleFilter& filter);

void write_learned_gp(const LearnedGp& gp, const MarginalizedParticleFilter& filter,
                      const std::filesystem::path& path);
LearnedGp read_learned_gp(const std::filesystem::path& path);

/// FNV-1a hash of a file's bytes, hex encoded.
std::string file_fingerprint(const std::filesystem::path& path);

// Commands. Each writes into `out_dir` (created when missing) and echoes the
// effective config there. Errors propagate as stiffid::Error.
void cmd_simulate(const ExperimentConfig& config, const std::filesystem::path& out_dir);
void cmd_filter(const ExperimentConfig& config, const std::filesystem::path& trace_path,
                const std::filesystem::path& out_dir);
void cmd_eval(const ExperimentConfig& config, const std::filesystem::path& trace_path,
              const std::filesystem::path& run_dir, const std::filesystem::path& out_dir);
void cmd_sweep(const ExperimentConfig& config, const std::filesystem::path& out_dir);

/// Rows of a sweep: one per (particle count, seed) cell.
struct SweepCell {
  int particle_count = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  EstimationScore pf;
  EstimationScore ukf;
  double prediction_learned = 0.0;  // longest horizon, largest step
  double prediction_mean = 0.0;
};

/// Runs every cell of the sweep grid; failures are recorded, not thrown.
std::vector<SweepCell> run_sweep(const ExperimentConfig& config,
                                 const std::filesystem::path& out_dir);

}  // namespace stiffid
