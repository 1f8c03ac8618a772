#include "stiffid/ukf.hpp"

#include "stiffid/gaussian.hpp"

#include <cmath>

namespace stiffid {

void UkfConfig::validate(const StateSpaceModel& model) const {
  const int n = model.state_dim() + 1;
  if (process_noise_cov.rows() != n || process_noise_cov.cols() != n)
    throw ConfigError("UKF process noise must be (n_x + 1) square");
  if (measurement_noise_cov.rows() != model.output_dim() ||
      measurement_noise_cov.cols() != model.output_dim())
    throw ConfigError("UKF measurement noise has the wrong size");
  if (initial_mean.size() != n || initial_cov.rows() != n || initial_cov.cols() != n)
    throw ConfigError("UKF initial mean/covariance have the wrong size");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("UKF alpha must lie in (0, 1]");
  if (kappa < 0.0) throw ConfigError("UKF kappa must be nonnegative");
  Eigen::LLT<Matrix> r(measurement_noise_cov);
  if (r.info() != Eigen::Success) throw ConfigError("UKF measurement noise must be SPD");
}

UnscentedWeights unscented_weights(int n, double alpha, double beta, double kappa) {
  UnscentedWeights w;
  w.lambda = alpha * alpha * (n + kappa) - n;
  const int count = 2 * n + 1;
  w.mean = Vector::Constant(count, 0.5 / (n + w.lambda));
  w.covariance = w.mean;
  w.mean[0] = w.lambda / (n + w.lambda);
  w.covariance[0] = w.mean[0] + (1.0 - alpha * alpha + beta);
  return w;
}

UnscentedKalmanFilter::UnscentedKalmanFilter(std::shared_ptr<const StateSpaceModel> model,
                                             UkfConfig config)
    : model_(std::move(model)), config_(std::move(config)) {
  if (!model_) throw ConfigError("UKF needs a model");
  config_.validate(*model_);
  const int n = model_->state_dim() + 1;
  weights_ = unscented_weights(n, config_.alpha, config_.beta, config_.kappa);
  mean_ = config_.initial_mean;
  cov_ = 0.5 * (config_.initial_cov + config_.initial_cov.transpose());
}

Matrix UnscentedKalmanFilter::sigma_points(const Vector& mean, const Matrix& cov) const {
  const Eigen::Index n = mean.size();
  const Matrix root = psd_sqrt((n + weights_.lambda) * cov);
  Matrix pts(n, 2 * n + 1);
  pts.col(0) = mean;
  for (Eigen::Index i = 0; i < n; ++i) {
    pts.col(1 + i) = mean + root.col(i);
    pts.col(1 + n + i) = mean - root.col(i);
  }
  return pts;
}

void UnscentedKalmanFilter::repair(Matrix& cov) {
  cov = 0.5 * (cov + cov.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
  if (eig.info() != Eigen::Success) throw NumericalError("UKF covariance eigen decomposition failed");
  const double floor = 0.0;
  if (eig.eigenvalues().minCoeff() < -1e-12 * std::max(1.0, eig.eigenvalues().cwiseAbs().maxCoeff())) {
    const Vector clipped = eig.eigenvalues().cwiseMax(floor);
    cov = eig.eigenvectors() * clipped.asDiagonal() * eig.eigenvectors().transpose();
    cov = 0.5 * (cov + cov.transpose()).eval();
    ++repairs_;
  }
}

StepRecord UnscentedKalmanFilter::step(const Vector& u_prev, const Vector& u_curr,
                                       const Vector& y) {
  const StateSpaceModel& model = *model_;
  const int nx = model.state_dim();
  const Eigen::Index n = nx + 1;
  const Eigen::Index count = 2 * n + 1;

  // Predict: state through the model, stiffness through the identity.
  const Matrix chi = sigma_points(mean_, cov_);
  Matrix propagated(n, count);
  for (Eigen::Index j = 0; j < count; ++j) {
    const Vector x = chi.col(j).head(nx);
    const double k = chi(nx, j);
    propagated.col(j).head(nx) = model.transition(x, u_prev, k);
    propagated(nx, j) = k;
  }
  Vector pred_mean = propagated * weights_.mean;
  Matrix pred_cov = config_.process_noise_cov;
  for (Eigen::Index j = 0; j < count; ++j) {
    const Vector d = propagated.col(j) - pred_mean;
    pred_cov.noalias() += weights_.covariance[j] * d * d.transpose();
  }
  repair(pred_cov);

  // Update.
  const Matrix sig = sigma_points(pred_mean, pred_cov);
  const int ny = model.output_dim();
  Matrix z(ny, count);
  for (Eigen::Index j = 0; j < count; ++j)
    z.col(j) = model.observe(sig.col(j).head(nx), u_curr, sig(nx, j));
  const Vector z_mean = z * weights_.mean;
  Matrix s = config_.measurement_noise_cov;
  Matrix cross = Matrix::Zero(n, ny);
  for (Eigen::Index j = 0; j < count; ++j) {
    const Vector dz = z.col(j) - z_mean;
    const Vector dx = sig.col(j) - pred_mean;
    s.noalias() += weights_.covariance[j] * dz * dz.transpose();
    cross.noalias() += weights_.covariance[j] * dx * dz.transpose();
  }
  s = 0.5 * (s + s.transpose()).eval();
  Eigen::LDLT<Matrix> s_fact(s);
  if (s_fact.info() != Eigen::Success) throw NumericalError("UKF innovation covariance is singular");
  const Matrix gain = s_fact.solve(cross.transpose()).transpose();
  innovation_ = y - z_mean;
  innovation_cov_ = s;
  mean_ = pred_mean + gain * innovation_;
  cov_ = pred_cov - gain * s * gain.transpose();
  repair(cov_);
  if (!mean_.allFinite()) throw NumericalError("UKF mean became non-finite");
  ++step_;
  return snapshot();
}

StepRecord UnscentedKalmanFilter::snapshot() const {
  StepRecord rec;
  rec.step = step_;
  rec.state_mean = mean_.head(model_->state_dim());
  rec.stiffness_mean = mean_[model_->state_dim()];
  rec.ess = 1.0;
  return rec;
}

}  // namespace stiffid
