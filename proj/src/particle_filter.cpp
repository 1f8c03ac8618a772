#include "stiffid/particle_filter.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <tuple>

namespace stiffid {

namespace {

constexpr char kCheckpointMagic[8] = {'S', 'T', 'I', 'F', 'F', 'C', 'K', 'P'};
constexpr std::uint32_t kCheckpointVersion = 1;

template <class T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw IoError("checkpoint is truncated");
  return v;
}

void write_dense(std::ostream& out, const Matrix& m) {
  out.write(reinterpret_cast<const char*>(m.data()),
            static_cast<std::streamsize>(sizeof(double) * m.size()));
}

void read_dense(std::istream& in, Matrix& m) {
  in.read(reinterpret_cast<char*>(m.data()),
          static_cast<std::streamsize>(sizeof(double) * m.size()));
  if (!in) throw IoError("checkpoint is truncated");
}

void write_vector(std::ostream& out, const Vector& v) {
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(sizeof(double) * v.size()));
}

void read_vector(std::istream& in, Vector& v) {
  in.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(sizeof(double) * v.size()));
  if (!in) throw IoError("checkpoint is truncated");
}

bool is_spd(const Matrix& m) {
  if (m.rows() != m.cols() || m.rows() == 0) return false;
  Eigen::LLT<Matrix> llt(0.5 * (m + m.transpose()));
  return llt.info() == Eigen::Success;
}

}  // namespace

void FilterConfig::validate(const StateSpaceModel& model) const {
  if (particle_count < 1) throw ConfigError("particle count must be positive");
  if (!(forgetting_multiplier > 0.0 && forgetting_multiplier <= 1.0))
    throw ConfigError("forgetting multiplier must lie in (0, 1]");
  if (process_noise_cov.rows() != model.state_dim() || !is_spd(process_noise_cov))
    throw ConfigError("process noise covariance must be SPD with state dimension");
  if (measurement_noise_cov.rows() != model.output_dim() || !is_spd(measurement_noise_cov))
    throw ConfigError("measurement noise covariance must be SPD with output dimension");
  if (hyperparam_walk_var.size() != 2 || (hyperparam_walk_var.array() < 0.0).any())
    throw ConfigError("hyperparameter walk variance must be two nonnegative entries");
  if (!(ess_resample_threshold > 0.0 && ess_resample_threshold <= 1.0))
    throw ConfigError("ESS resampling threshold must lie in (0, 1]");
  if (fixed_stiffness && !std::isfinite(*fixed_stiffness))
    throw ConfigError("fixed stiffness must be finite");
  if (workers < 1) throw ConfigError("worker count must be positive");
}

std::shared_ptr<const NigPrior> GpSetup::prior_for(const KernelHyperparams& hp) const {
  return make_prior_precision(prior_precisions(*basis, hp), psi, nu);
}

Vector normalize_log_weights(const Vector& log_weights, std::int64_t step) {
  double peak = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < log_weights.size(); ++i) {
    const double v = log_weights[i];
    if (std::isnan(v)) continue;
    peak = std::max(peak, v);
  }
  if (!std::isfinite(peak)) {
    std::ostringstream os;
    os << "all particle weights are zero or non-finite";
    if (step >= 0) os << " at step " << step;
    os << " (N = " << log_weights.size() << ")";
    throw DegeneracyError(os.str(), step);
  }
  Vector w(log_weights.size());
  double total = 0.0;
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    const double v = log_weights[i];
    w[i] = std::isnan(v) ? 0.0 : std::exp(v - peak);
    total += w[i];
  }
  return w / total;
}

double effective_sample_size(const Vector& weights) { return 1.0 / weights.squaredNorm(); }

Vector first_stage_weights(const std::vector<Particle>& particles,
                           const std::vector<Vector>& aux_states, const Vector& y,
                           const Vector& u, const StateSpaceModel& model,
                           const Gaussian& measurement_noise, std::int64_t step) {
  Vector log_w(static_cast<Eigen::Index>(particles.size()));
  for (std::size_t i = 0; i < particles.size(); ++i) {
    const Vector residual = y - model.observe(aux_states[i], u, particles[i].stiffness);
    log_w[static_cast<Eigen::Index>(i)] =
        std::log(particles[i].weight) + measurement_noise.log_density(residual);
  }
  return normalize_log_weights(log_w, step);
}

Vector second_stage_weights(const std::vector<Particle>& particles,
                            const std::vector<std::size_t>& ancestors,
                            const std::vector<Vector>& aux_states,
                            const std::vector<double>& ancestor_stiffness, const Vector& y,
                            const Vector& u, const StateSpaceModel& model,
                            const Gaussian& measurement_noise, std::int64_t step) {
  Vector log_w(static_cast<Eigen::Index>(particles.size()));
  for (std::size_t i = 0; i < particles.size(); ++i) {
    const std::size_t a = ancestors[i];
    const double num =
        measurement_noise.log_density(y - model.observe(particles[i].state, u, particles[i].stiffness));
    const double den =
        measurement_noise.log_density(y - model.observe(aux_states[a], u, ancestor_stiffness[a]));
    log_w[static_cast<Eigen::Index>(i)] = num - den;
  }
  return normalize_log_weights(log_w, step);
}

std::vector<std::size_t> resample_multinomial(const Vector& weights, CounterRng& rng) {
  std::discrete_distribution<std::size_t> pick(weights.data(), weights.data() + weights.size());
  std::vector<std::size_t> out(static_cast<std::size_t>(weights.size()));
  for (auto& a : out) a = pick(rng);
  return out;
}

std::vector<std::size_t> resample_systematic(const Vector& weights, CounterRng& rng) {
  const std::size_t n = static_cast<std::size_t>(weights.size());
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double offset = unif(rng);
  std::vector<std::size_t> out(n);
  double cumulative = weights[0];
  std::size_t j = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double target = (static_cast<double>(i) + offset) / static_cast<double>(n);
    while (target > cumulative && j + 1 < n) cumulative += weights[static_cast<Eigen::Index>(++j)];
    out[i] = j;
  }
  return out;
}

void hyperparam_walk(Particle& particle, const Vector& walk_var, const GpSetup& gp,
                     CounterRng& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  const double z_signal = n01(rng);
  const double z_length = n01(rng);
  if (walk_var[0] == 0.0 && walk_var[1] == 0.0) return;
  KernelHyperparams& hp = particle.hyperparams;
  hp.signal_variance *= std::exp(std::sqrt(walk_var[0]) * z_signal);
  hp.length_scale *= std::exp(std::sqrt(walk_var[1]) * z_length);
  particle.stats.replace_prior(gp.prior_for(hp));
}

Estimate estimate(const std::vector<Particle>& particles) {
  Estimate e;
  if (particles.empty()) return e;
  e.state_mean = Vector::Zero(particles.front().state.size());
  double sum_sq = 0.0;
  for (const Particle& p : particles) {
    e.state_mean.noalias() += p.weight * p.state;
    e.stiffness_mean += p.weight * p.stiffness;
    sum_sq += p.weight * p.weight;
  }
  e.ess = 1.0 / sum_sq;
  return e;
}

MarginalizedParticleFilter::MarginalizedParticleFilter(std::shared_ptr<const StateSpaceModel> model,
                                                       FilterConfig config, GpSetup gp,
                                                       const InitialStateSampler& init_state)
    : model_(std::move(model)), config_(std::move(config)), gp_(std::move(gp)),
      parallel_(config_.workers) {
  if (!model_) throw ConfigError("filter needs a model");
  config_.validate(*model_);
  if (uses_gp()) {
    if (!gp_.basis) throw ConfigError("filter needs a GP basis unless the stiffness is fixed");
    if (gp_.basis->dims() != model_->pose_dim())
      throw ConfigError("GP basis dimension does not match the model pose dimension");
    gp_.scaler.validate();
    if (gp_.scaler.center.size() != model_->pose_dim())
      throw ConfigError("input scaler dimension does not match the pose dimension");
    gp_.hyperparams.validate();
  }
  process_noise_ = Gaussian(config_.process_noise_cov);
  measurement_noise_ = Gaussian(config_.measurement_noise_cov);

  const std::size_t n = static_cast<std::size_t>(config_.particle_count);
  particles_.resize(n);
  std::shared_ptr<const NigPrior> prior;
  std::optional<NigFactor> prior_factor;
  if (uses_gp()) {
    prior = gp_.prior_for(gp_.hyperparams);
    prior_factor.emplace(NigStatistics(prior));
  }
  for (std::size_t i = 0; i < n; ++i) {
    CounterRng rng(config_.rng_seed, Stream::kFilterInit, 0, i);
    Particle& p = particles_[i];
    p.state = init_state(rng);
    if (p.state.size() != model_->state_dim())
      throw ConfigError("initial state sampler returned the wrong dimension");
    p.weight = 1.0 / static_cast<double>(n);
    p.hyperparams = gp_.hyperparams;
    if (uses_gp()) {
      p.stats = NigStatistics(prior);
      const Vector phi = gp_.features(model_->pose(p.state));
      p.stiffness = sample_student_t(prior_factor->predictive(phi), rng);
    } else {
      p.stiffness = *config_.fixed_stiffness;
    }
  }
}

StepRecord MarginalizedParticleFilter::step(const Vector& u_prev, const Vector& u_curr,
                                            const Vector& y) {
  const StateSpaceModel& model = *model_;
  if (u_prev.size() != model.input_dim() || u_curr.size() != model.input_dim())
    throw InvalidInputError("input vector has the wrong dimension");
  if (y.size() != model.output_dim()) throw InvalidInputError("measurement has the wrong dimension");
  const std::int64_t t = step_ + 1;
  const std::size_t n = particles_.size();

  // Statistics time update (forgetting).
  if (uses_gp() && config_.forgetting_multiplier < 1.0) {
    parallel_(n, [&](std::size_t i) { particles_[i].stats.time_update(config_.forgetting_multiplier); });
  }

  // Auxiliary states and first-stage weights, with the previous stiffness as look-ahead.
  std::vector<Vector> aux(n);
  Vector aux_loglik(static_cast<Eigen::Index>(n));
  parallel_(n, [&](std::size_t i) {
    const Particle& p = particles_[i];
    aux[i] = model.transition(p.state, u_prev, p.stiffness);
    aux_loglik[static_cast<Eigen::Index>(i)] =
        measurement_noise_.log_density(y - model.observe(aux[i], u_curr, p.stiffness));
  });
  Vector first_log(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i)
    first_log[static_cast<Eigen::Index>(i)] =
        std::log(particles_[i].weight) + aux_loglik[static_cast<Eigen::Index>(i)];
  const Vector first = normalize_log_weights(first_log, t);

  // Resampling.
  std::vector<std::size_t> ancestors(n);
  bool resampled = false;
  if (effective_sample_size(first) <= config_.ess_resample_threshold * static_cast<double>(n) + 1e-9) {
    CounterRng rng(config_.rng_seed, Stream::kFilterResample, static_cast<std::uint64_t>(t), 0);
    ancestors = config_.resampling == ResamplingScheme::kSystematic ? resample_systematic(first, rng)
                                                                    : resample_multinomial(first, rng);
    resampled = true;
  } else {
    std::iota(ancestors.begin(), ancestors.end(), std::size_t{0});
  }

  // Posterior factors of the ancestors; shared between siblings when priors are shared.
  const bool per_child_prior = uses_gp() && config_.hyperparam_learning;
  std::vector<std::optional<NigFactor>> ancestor_factor(n);
  if (uses_gp() && !per_child_prior) {
    std::vector<char> needed(n, 0);
    for (std::size_t a : ancestors) needed[a] = 1;
    parallel_(n, [&](std::size_t a) {
      if (needed[a]) ancestor_factor[a].emplace(particles_[a].stats);
    });
  }

  // Propagate, draw stiffness, update statistics, weight.
  std::vector<Particle> next(n);
  std::vector<char> clamped(n, 0);
  Vector second_log(static_cast<Eigen::Index>(n));
  parallel_(n, [&](std::size_t i) {
    const std::size_t a = ancestors[i];
    const Particle& parent = particles_[a];
    Particle& child = next[i];
    CounterRng rng(config_.rng_seed, Stream::kFilterParticle, static_cast<std::uint64_t>(t), i);
    child.hyperparams = parent.hyperparams;
    if (uses_gp()) child.stats = parent.stats;
    if (per_child_prior) hyperparam_walk(child, config_.hyperparam_walk_var, gp_, rng);

    child.state = aux[a] + process_noise_.sample(rng);
    if (uses_gp()) {
      const Vector phi = gp_.features(model.pose(child.state));
      std::optional<NigFactor> own;
      if (per_child_prior) own.emplace(child.stats);
      const NigFactor& factor = own ? *own : *ancestor_factor[a];
      clamped[i] = factor.psi_clamped() ? 1 : 0;
      child.stiffness = sample_student_t(factor.predictive(phi), rng);
      child.stats.measurement_update(phi, child.stiffness);
    } else {
      child.stiffness = *config_.fixed_stiffness;
    }

    const double num =
        measurement_noise_.log_density(y - model.observe(child.state, u_curr, child.stiffness));
    double lw = num - aux_loglik[static_cast<Eigen::Index>(a)];
    if (!resampled) lw += std::log(first[static_cast<Eigen::Index>(a)]);
    second_log[static_cast<Eigen::Index>(i)] = lw;
  });
  const Vector second = normalize_log_weights(second_log, t);
  for (std::size_t i = 0; i < n; ++i) {
    next[i].weight = second[static_cast<Eigen::Index>(i)];
    psi_clamps_ += static_cast<std::uint64_t>(clamped[i]);
  }

  particles_ = std::move(next);
  step_ = t;
  StepRecord rec = snapshot();
  rec.resampled = resampled;
  return rec;
}

StepRecord MarginalizedParticleFilter::snapshot() const {
  StepRecord rec;
  rec.step = step_;
  const Estimate e = estimate(particles_);
  rec.state_mean = e.state_mean;
  rec.stiffness_mean = e.stiffness_mean;
  rec.ess = e.ess;
  std::size_t best = 0;
  for (std::size_t i = 0; i < particles_.size(); ++i) {
    const Particle& p = particles_[i];
    rec.log_signal_variance_mean += p.weight * std::log(p.hyperparams.signal_variance);
    rec.log_length_scale_mean += p.weight * std::log(p.hyperparams.length_scale);
    if (p.weight > particles_[best].weight) best = i;
  }
  if (uses_gp()) {
    rec.best_posterior = particles_[best].stats.posterior();
    rec.basis_clamps = gp_.basis->clamp_count();
  }
  rec.psi_clamps = psi_clamps_;
  if (config_.keep_particles) rec.particles = particles_;
  return rec;
}

Vector MarginalizedParticleFilter::mean_coefficients() const {
  if (!uses_gp()) throw ConfigError("no GP is learned when the stiffness is fixed");
  Vector acc = Vector::Zero(gp_.basis->size());
  for (const Particle& p : particles_) acc += p.weight * NigFactor(p.stats).mean();
  return acc;
}

std::pair<double, double> MarginalizedParticleFilter::learned_stiffness(const Vector& pose) const {
  return learned_stiffness(std::vector<Vector>{pose}).front();
}

std::vector<std::pair<double, double>> MarginalizedParticleFilter::learned_stiffness(
    const std::vector<Vector>& poses) const {
  if (!uses_gp()) throw ConfigError("no GP is learned when the stiffness is fixed");
  std::vector<Vector> phis;
  phis.reserve(poses.size());
  for (const Vector& q : poses) phis.push_back(gp_.features(q));
  std::vector<double> mean(poses.size(), 0.0);
  std::vector<double> second(poses.size(), 0.0);
  for (const Particle& p : particles_) {
    const NigFactor f(p.stats);
    for (std::size_t j = 0; j < phis.size(); ++j) {
      const double mu = f.posterior_mean(phis[j]);
      const double scale2 = f.scale() / f.dof() * f.quad_form(phis[j]);
      const double var = f.dof() > 2.0 ? scale2 * f.dof() / (f.dof() - 2.0) : scale2;
      mean[j] += p.weight * mu;
      second[j] += p.weight * (var + mu * mu);
    }
  }
  std::vector<std::pair<double, double>> out(poses.size());
  for (std::size_t j = 0; j < out.size(); ++j)
    out[j] = {mean[j], std::max(0.0, second[j] - mean[j] * mean[j])};
  return out;
}

void MarginalizedParticleFilter::save_checkpoint(std::ostream& out) const {
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  write_pod(out, kCheckpointVersion);
  write_pod(out, static_cast<std::int64_t>(step_));
  write_pod(out, static_cast<std::uint32_t>(particles_.size()));
  write_pod(out, static_cast<std::uint32_t>(model_->state_dim()));
  const std::uint32_t m = uses_gp() ? static_cast<std::uint32_t>(gp_.basis->size()) : 0;
  write_pod(out, m);
  write_pod(out, psi_clamps_);
  for (const Particle& p : particles_) {
    write_vector(out, p.state);
    write_pod(out, p.stiffness);
    write_pod(out, p.weight);
    write_pod(out, p.hyperparams.signal_variance);
    write_pod(out, p.hyperparams.length_scale);
    if (m > 0) {
      write_pod(out, p.stats.prior().psi);
      write_pod(out, p.stats.prior().nu);
      write_dense(out, p.stats.prior().precision);
      write_vector(out, p.stats.s1());
      write_pod(out, p.stats.data_s2());
      write_dense(out, p.stats.data_r1());
      write_pod(out, p.stats.data_r2());
    }
  }
  if (!out) throw IoError("failed to write checkpoint");
}

void MarginalizedParticleFilter::load_checkpoint(std::istream& in) {
  char magic[sizeof(kCheckpointMagic)];
  in.read(magic, sizeof(magic));
  if (!in || !std::equal(magic, magic + sizeof(magic), kCheckpointMagic))
    throw IoError("not a filter checkpoint");
  if (read_pod<std::uint32_t>(in) != kCheckpointVersion)
    throw IoError("unsupported checkpoint version");
  const auto step = read_pod<std::int64_t>(in);
  const auto n = read_pod<std::uint32_t>(in);
  const auto nx = read_pod<std::uint32_t>(in);
  const auto m = read_pod<std::uint32_t>(in);
  const auto clamps = read_pod<std::uint64_t>(in);
  const std::uint32_t expected_m = uses_gp() ? static_cast<std::uint32_t>(gp_.basis->size()) : 0;
  if (nx != static_cast<std::uint32_t>(model_->state_dim()) || m != expected_m || n == 0)
    throw IoError("checkpoint dimensions do not match this filter");

  std::vector<Particle> loaded(n);
  std::map<std::tuple<double, double, double, double>, std::shared_ptr<const NigPrior>> priors;
  for (Particle& p : loaded) {
    p.state.resize(nx);
    read_vector(in, p.state);
    p.stiffness = read_pod<double>(in);
    p.weight = read_pod<double>(in);
    p.hyperparams.signal_variance = read_pod<double>(in);
    p.hyperparams.length_scale = read_pod<double>(in);
    if (m > 0) {
      auto prior = std::make_shared<NigPrior>();
      prior->psi = read_pod<double>(in);
      prior->nu = read_pod<double>(in);
      prior->precision.resize(m, m);
      read_dense(in, prior->precision);
      Vector s1(m);
      read_vector(in, s1);
      const double s2 = read_pod<double>(in);
      Matrix r1(m, m);
      read_dense(in, r1);
      const double r2 = read_pod<double>(in);
      // Re-share identical priors.
      const auto key = std::make_tuple(p.hyperparams.signal_variance, p.hyperparams.length_scale,
                                       prior->psi, prior->nu);
      auto it = priors.find(key);
      if (it == priors.end() || it->second->precision != prior->precision)
        it = priors.insert_or_assign(key, std::shared_ptr<const NigPrior>(std::move(prior))).first;
      p.stats = NigStatistics::restore(it->second, std::move(s1), s2, std::move(r1), r2);
    }
  }
  particles_ = std::move(loaded);
  step_ = step;
  psi_clamps_ = clamps;
}

}  // namespace stiffid
