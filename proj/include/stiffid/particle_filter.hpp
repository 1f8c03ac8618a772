#pragma once

// Marginalized auxiliary particle filter: samples states and stiffness values
// while the reduced-rank GP weights and noise variance of the stiffness model
// are integrated out per particle through NIG sufficient statistics.

#include "stiffid/conjugate.hpp"
#include "stiffid/gaussian.hpp"
#include "stiffid/model.hpp"
#include "stiffid/parallel.hpp"
#include "stiffid/random.hpp"
#include "stiffid/rrgp.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <vector>

namespace stiffid {

enum class ResamplingScheme { kMultinomial, kSystematic };

struct FilterConfig {
  int particle_count = 500;
  /// lambda in (0, 1]; 1 keeps all data (no forgetting).
  double forgetting_multiplier = 1.0;
  Matrix process_noise_cov;
  Matrix measurement_noise_cov;
  /// Diagonal of the random-walk covariance on (log sigma_f^2, log ell).
  Vector hyperparam_walk_var = Vector::Zero(2);
  bool hyperparam_learning = false;
  std::uint64_t rng_seed = 0;
  /// Resample when the first-stage ESS is at most this fraction of N.
  /// 1 resamples every step.
  double ess_resample_threshold = 1.0;
  ResamplingScheme resampling = ResamplingScheme::kMultinomial;
  /// When set, every particle uses this stiffness and the GP is bypassed.
  std::optional<double> fixed_stiffness;
  int workers = 1;
  /// Attach a copy of all particles to every step record (debugging aid).
  bool keep_particles = false;

  void validate(const StateSpaceModel& model) const;
};

/// Reduced-rank GP configuration shared by all particles.
struct GpSetup {
  std::shared_ptr<const LaplacianBasis> basis;
  InputScaler scaler;
  KernelHyperparams hyperparams;
  double psi = 4.0;
  double nu = 1.0;

  /// phi of the scaled pose.
  Vector features(const Vector& pose) const { return basis->evaluate(scaler.apply(pose)); }
  std::shared_ptr<const NigPrior> prior_for(const KernelHyperparams& hp) const;
};

struct Particle {
  Vector state;
  double stiffness = 0.0;
  NigStatistics stats;
  KernelHyperparams hyperparams;
  double weight = 0.0;
};

struct StepRecord {
  std::int64_t step = 0;
  Vector state_mean;
  double stiffness_mean = 0.0;
  double ess = 0.0;
  bool resampled = false;
  /// Weighted means of log sigma_f^2 and log ell.
  double log_signal_variance_mean = 0.0;
  double log_length_scale_mean = 0.0;
  /// NIG posterior of the highest-weight particle (empty when the GP is bypassed).
  std::optional<NigParams> best_posterior;
  std::uint64_t basis_clamps = 0;
  std::uint64_t psi_clamps = 0;
  std::vector<Particle> particles;
};

/// Mixture-mean stiffness model frozen from a filter: k(q) = c^T phi(scale(q)).
struct LearnedGp {
  std::shared_ptr<const LaplacianBasis> basis;
  InputScaler scaler;
  Vector coefficients;

  double mean(const Vector& pose) const {
    return coefficients.dot(basis->evaluate(scaler.apply(pose)));
  }
};

using InitialStateSampler = std::function<Vector(CounterRng&)>;

/// Normalizes log-weights with log-sum-exp. Throws DegeneracyError when no
/// entry is finite.
Vector normalize_log_weights(const Vector& log_weights, std::int64_t step = -1);

/// Effective sample size 1 / sum w_i^2 of normalized weights.
double effective_sample_size(const Vector& weights);

/// lambda_i proportional to w_i N(y | h(aux_i, u, k_i), Sigma_e).
Vector first_stage_weights(const std::vector<Particle>& particles,
                           const std::vector<Vector>& aux_states, const Vector& y,
                           const Vector& u, const StateSpaceModel& model,
                           const Gaussian& measurement_noise, std::int64_t step = -1);

/// Ratio N(y | h(x_i, u, k_i)) / N(y | h(aux_a, u, k_a)) for ancestor a = ancestors[i], normalized.
/// `ancestor_stiffness[a]` is the stiffness used in the first stage.
Vector second_stage_weights(const std::vector<Particle>& particles,
                            const std::vector<std::size_t>& ancestors,
                            const std::vector<Vector>& aux_states,
                            const std::vector<double>& ancestor_stiffness, const Vector& y,
                            const Vector& u, const StateSpaceModel& model,
                            const Gaussian& measurement_noise, std::int64_t step = -1);

std::vector<std::size_t> resample_multinomial(const Vector& weights, CounterRng& rng);
std::vector<std::size_t> resample_systematic(const Vector& weights, CounterRng& rng);

/// Log-space random walk of each particle's kernel hyperparameters followed by
/// a refresh of its GP prior. A zero walk variance leaves the particle untouched.
void hyperparam_walk(Particle& particle, const Vector& walk_var, const GpSetup& gp,
                     CounterRng& rng);

struct Estimate {
  Vector state_mean;
  double stiffness_mean = 0.0;
  double ess = 0.0;
};
Estimate estimate(const std::vector<Particle>& particles);

class MarginalizedParticleFilter {
 public:
  MarginalizedParticleFilter(std::shared_ptr<const StateSpaceModel> model, FilterConfig config,
                             GpSetup gp, const InitialStateSampler& init_state);

  /// One filter recursion for measurement y_t with inputs u_{t-1} and u_t.
  StepRecord step(const Vector& u_prev, const Vector& u_curr, const Vector& y);

  /// Record describing the current particle set without advancing.
  StepRecord snapshot() const;

  std::int64_t step_index() const { return step_; }
  const std::vector<Particle>& particles() const { return particles_; }
  const FilterConfig& config() const { return config_; }
  const GpSetup& gp() const { return gp_; }
  const StateSpaceModel& model() const { return *model_; }
  bool uses_gp() const { return !config_.fixed_stiffness.has_value(); }

  /// Weighted average of the particles' posterior-mean coefficient vectors.
  Vector mean_coefficients() const;
  /// Mixture posterior mean and variance of a^T phi at a raw pose.
  std::pair<double, double> learned_stiffness(const Vector& pose) const;
  /// Same for many poses; each particle posterior is factored once.
  std::vector<std::pair<double, double>> learned_stiffness(const std::vector<Vector>& poses) const;
  LearnedGp learned_gp() const { return {gp_.basis, gp_.scaler, mean_coefficients()}; }

  std::uint64_t psi_clamps() const { return psi_clamps_; }

  void save_checkpoint(std::ostream& out) const;
  /// Replaces the particle set and step counter from a checkpoint written by a
  /// filter with the same model dimensions and basis size.
  void load_checkpoint(std::istream& in);

 private:
  std::shared_ptr<const StateSpaceModel> model_;
  FilterConfig config_;
  GpSetup gp_;
  Gaussian process_noise_;
  Gaussian measurement_noise_;
  ParallelFor parallel_;
  std::vector<Particle> particles_;
  std::int64_t step_ = 0;
  std::uint64_t psi_clamps_ = 0;
};

}  // namespace stiffid
