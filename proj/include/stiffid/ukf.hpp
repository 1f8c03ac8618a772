#pragma once

#include "stiffid/model.hpp"
#include "stiffid/particle_filter.hpp"

#include <cstdint>
#include <memory>

namespace stiffid {

/// UKF baseline estimating [x; k] with the stiffness as a random-walk state.
struct UkfConfig {
  /// (n_x + 1) square; the last diagonal entry is the stiffness walk variance.
  Matrix process_noise_cov;
  Matrix measurement_noise_cov;
  double alpha = 0.1;
  double beta = 2.0;
  double kappa = 0.0;
  Vector initial_mean;  // n_x + 1
  Matrix initial_cov;   // n_x + 1 square, PSD

  void validate(const StateSpaceModel& model) const;
};

struct UnscentedWeights {
  double lambda = 0.0;
  Vector mean;
  Vector covariance;
};

/// Scaled unscented transform weights for an n-dimensional state.
UnscentedWeights unscented_weights(int n, double alpha, double beta, double kappa);

class UnscentedKalmanFilter {
 public:
  UnscentedKalmanFilter(std::shared_ptr<const StateSpaceModel> model, UkfConfig config);

  /// Predict with u_{t-1}, update with y_t and u_t. The record carries the
  /// state and stiffness means (ess is reported as 1).
  StepRecord step(const Vector& u_prev, const Vector& u_curr, const Vector& y);
  StepRecord snapshot() const;

  const Vector& mean() const { return mean_; }
  const Matrix& covariance() const { return cov_; }
  const Vector& last_innovation() const { return innovation_; }
  const Matrix& last_innovation_covariance() const { return innovation_cov_; }
  std::uint64_t covariance_repairs() const { return repairs_; }

 private:
  Matrix sigma_points(const Vector& mean, const Matrix& cov) const;
  void repair(Matrix& cov);

  std::shared_ptr<const StateSpaceModel> model_;
  UkfConfig config_;
  UnscentedWeights weights_;
  Vector mean_;
  Matrix cov_;
  Vector innovation_;
  Matrix innovation_cov_;
  std::int64_t step_ = 0;
  std::uint64_t repairs_ = 0;
};

}  // namespace stiffid
