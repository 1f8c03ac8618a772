#pragma once

#include "stiffid/oscillator.hpp"
#include "stiffid/particle_filter.hpp"
#include "stiffid/simulate.hpp"
#include "stiffid/ukf.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

namespace stiffid {

struct ModelSection {
  std::string type = "oscillator";
  std::vector<double> mass_kg = {1.0, 1.0, 1.0};
  std::vector<double> damping_n_s_per_m = {6.0, 6.0, 6.0};
  double k0_n_per_m = 700.0;
  double k1_n_per_m = 400.0;
  double c_m2 = 4.0e-4;
  int output_dim = 3;
  double lever_arm_m = 0.1;

  bool operator==(const ModelSection&) const = default;
};

struct SimulationSection {
  double dt_ms = 8.0;
  int steps = 625;
  std::vector<double> initial_position_m = {0.02, -0.014, 0.01};
  std::vector<double> initial_velocity_m_per_s = {0.0, 0.0, 0.0};
  double process_noise_position_std_m = 1.0e-5;
  double process_noise_velocity_std_m_per_s = 1.0e-3;
  double measurement_noise_std = 1.0;  // N (and N m for moment outputs)
  /// One list of sine components per input channel.
  std::vector<std::vector<SineComponent>> excitation;

  bool operator==(const SimulationSection&) const = default;
};

struct BasisSection {
  int basis_count = 40;
  std::vector<double> half_widths = {1.0, 1.0, 1.0};
  std::vector<double> workspace_lower_m = {-0.06, -0.06, -0.06};
  std::vector<double> workspace_upper_m = {0.06, 0.06, 0.06};
  double fill_fraction = 0.8;

  bool operator==(const BasisSection&) const = default;
};

struct PriorSection {
  double length_scale = 1.0;
  double signal_variance = 100.0;
  double psi = 4.0;
  double nu = 1.0;

  bool operator==(const PriorSection&) const = default;
};

struct FilterSection {
  int particle_count = 500;
  double forgetting_multiplier = 1.0;
  double process_noise_position_std_m = 1.0e-5;
  double process_noise_velocity_std_m_per_s = 3.0e-3;
  double measurement_noise_std = 2.0;
  bool hyperparam_learning = true;
  std::vector<double> hyperparam_walk_var_log = {0.1, 0.1};
  double ess_resample_fraction = 1.0;
  std::string resampling = "multinomial";
  double initial_position_std_m = 1.0e-3;
  double initial_velocity_std_m_per_s = 1.0e-2;
  int workers = 1;

  bool operator==(const FilterSection&) const = default;
};

struct UkfSection {
  double alpha = 0.1;
  double beta = 2.0;
  double kappa = 0.0;
  double process_noise_position_std_m = 1.0e-5;
  double process_noise_velocity_std_m_per_s = 3.0e-3;
  double stiffness_walk_std_n_per_m = 100.0;
  double measurement_noise_std = 2.0;
  double initial_stiffness_n_per_m = 700.0;
  double initial_stiffness_std_n_per_m = 200.0;

  bool operator==(const UkfSection&) const = default;
};

struct EvaluationSection {
  std::vector<int> horizons = {5, 10, 20};
  std::vector<double> step_sizes_ms = {1.0, 2.5, 5.0, 7.5, 10.0};
  int stride = 1;
  /// Surface export: two pose axes swept over the workspace, the rest held fixed.
  std::vector<int> surface_axes = {0, 1};
  std::vector<double> surface_fixed_m = {0.0, 0.0, 0.0};
  int surface_points = 21;

  bool operator==(const EvaluationSection&) const = default;
};

struct SweepSection {
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  std::vector<int> particle_counts = {500};
  int workers = 1;

  bool operator==(const SweepSection&) const = default;
};

/// Everything a run needs. Parsed from JSON; unknown keys are rejected.
struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::string output_dir = "out";
  ModelSection model;
  SimulationSection simulation;
  BasisSection basis;
  PriorSection prior;
  FilterSection filter;
  UkfSection ukf;
  EvaluationSection evaluation;
  SweepSection sweep;

  ExperimentConfig();

  void validate() const;
  std::string to_json() const;
  static ExperimentConfig from_json(const std::string& text);

  bool operator==(const ExperimentConfig&) const = default;
};

ExperimentConfig load_config(const std::filesystem::path& path);
void save_config(const ExperimentConfig& config, const std::filesystem::path& path);

/// Default multisine: three components per channel at incommensurate frequencies.
std::vector<std::vector<SineComponent>> default_excitation();

// Builders from a validated config.
std::shared_ptr<StiffnessOscillator> make_model(const ExperimentConfig& config);
Matrix make_inputs(const ExperimentConfig& config);
Vector make_initial_state(const ExperimentConfig& config);
NoiseCovariances make_sim_noise(const ExperimentConfig& config);
GpSetup make_gp(const ExperimentConfig& config);
FilterConfig make_filter_config(const ExperimentConfig& config);
InitialStateSampler make_initial_sampler(const ExperimentConfig& config);
UkfConfig make_ukf_config(const ExperimentConfig& config);

}  // namespace stiffid
