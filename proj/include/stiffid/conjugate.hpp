#pragma once

// Normal-inverse-Gamma conjugate model for k = a^T phi + v, v ~ N(0, sigma^2),
// with a, sigma^2 ~ NIG(m, V, psi, nu), kept as sufficient statistics
// {s1, s2, r1, r2}. The prior contribution is stored apart from the data
// contribution so that forgetting discounts only the data, and so that a
// particle can swap its prior (new kernel hyperparameters) without losing
// what it has learned.

#include "stiffid/types.hpp"

#include <cmath>
#include <memory>
#include <random>

namespace stiffid {

/// Prior part of the statistics: s1 = 0, r1 = V^-1, s2 = psi, r2 = nu.
struct NigPrior {
  Matrix precision;
  double psi = 1.0;
  double nu = 1.0;
};

struct NigParams {
  Vector mean;
  Matrix covariance_shape;
  double scale = 0.0;
  double dof = 0.0;
};

/// Location-scale Student-t: location + sqrt(squared_scale) * t(dof).
struct StudentTParams {
  double dof = 1.0;
  double location = 0.0;
  double squared_scale = 1.0;

  /// Variance dof/(dof-2) * squared_scale; infinite for dof <= 2.
  double variance() const;
};

class NigFactor;

class NigStatistics {
 public:
  NigStatistics() = default;
  explicit NigStatistics(std::shared_ptr<const NigPrior> prior);

  int size() const { return static_cast<int>(s1_.size()); }

  // Effective statistics, prior plus discounted data.
  const Vector& s1() const { return s1_; }
  double s2() const { return prior_->psi + s2_; }
  Matrix r1() const { return prior_->precision + r1_; }
  double r2() const { return prior_->nu + r2_; }

  // Data-only part.
  double data_s2() const { return s2_; }
  const Matrix& data_r1() const { return r1_; }
  double data_r2() const { return r2_; }

  const NigPrior& prior() const { return *prior_; }
  const std::shared_ptr<const NigPrior>& shared_prior() const { return prior_; }
  /// Swap the prior, keeping accumulated data statistics.
  void replace_prior(std::shared_ptr<const NigPrior> prior);

  /// s1 += phi k, s2 += k^2, r1 += phi phi^T, r2 += 1.
  void measurement_update(const Vector& phi, double k);
  /// Scales the data statistics by lambda in (0, 1].
  void time_update(double lambda);

  /// Recover (m, V, psi, nu); throws DegeneracyError when psi <= 0.
  NigParams posterior() const;
  NigFactor factorize() const;

  /// Restore from serialized pieces (checkpoint loading).
  static NigStatistics restore(std::shared_ptr<const NigPrior> prior, Vector s1, double s2,
                               Matrix r1, double r2);

 private:
  std::shared_ptr<const NigPrior> prior_;
  Vector s1_;
  double s2_ = 0.0;
  Matrix r1_;
  double r2_ = 0.0;
};

/// Cholesky factor of the effective r1 with the posterior mean and scale cached.
/// psi is floored at kMinScale; psi_clamped() reports when that happened.
class NigFactor {
 public:
  static constexpr double kMinScale = 1e-12;

  explicit NigFactor(const NigStatistics& stats);

  const Vector& mean() const { return mean_; }
  double scale() const { return psi_; }
  double dof() const { return nu_; }
  bool psi_clamped() const { return clamped_; }

  /// phi^T r1^{-1} phi
  double quad_form(const Vector& phi) const;
  double posterior_mean(const Vector& phi) const { return mean_.dot(phi); }
  StudentTParams predictive(const Vector& phi) const;

 private:
  Eigen::LLT<Matrix> llt_;
  Vector mean_;
  double psi_ = 0.0;
  double nu_ = 0.0;
  bool clamped_ = false;
};

NigStatistics prior_statistics(const Matrix& covariance, double psi, double nu);
NigStatistics prior_statistics_diagonal(const Vector& variances, double psi, double nu);
std::shared_ptr<const NigPrior> make_prior_diagonal(const Vector& variances, double psi, double nu);
/// Same as make_prior_diagonal but from the diagonal precisions directly.
std::shared_ptr<const NigPrior> make_prior_precision(const Vector& precisions, double psi, double nu);

NigParams posterior_params(const NigStatistics& stats);
StudentTParams predictive_student_t(const NigStatistics& stats, const Vector& phi);
double gp_posterior_mean(const NigStatistics& stats, const Vector& phi);

template <class Urbg>
double sample_student_t(const StudentTParams& params, Urbg& rng) {
  std::student_t_distribution<double> t(params.dof);
  const double draw = t(rng);
  if (params.squared_scale <= 0.0) return params.location;
  return params.location + std::sqrt(params.squared_scale) * draw;
}

}  // namespace stiffid
