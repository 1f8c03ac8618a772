#include "stiffid/gaussian.hpp"

#include <cmath>
#include <numbers>

namespace stiffid {

Matrix psd_sqrt(const Matrix& p) {
  if (p.rows() != p.cols()) throw ConfigError("covariance must be square");
  const Matrix sym = 0.5 * (p + p.transpose());
  Eigen::LLT<Matrix> llt(sym);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  Eigen::SelfAdjointEigenSolver<Matrix> eig(sym);
  if (eig.info() != Eigen::Success) throw NumericalError("eigen decomposition failed");
  const Vector root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * root.asDiagonal();
}

Gaussian::Gaussian(const Matrix& covariance) : cov_(covariance) {
  if (cov_.rows() != cov_.cols()) throw ConfigError("covariance must be square");
  if (!cov_.allFinite()) throw ConfigError("covariance must be finite");
  if ((cov_ - cov_.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + cov_.cwiseAbs().maxCoeff()))
    throw ConfigError("covariance must be symmetric");
  sqrt_ = psd_sqrt(cov_);
  llt_.compute(cov_);
  definite_ = cov_.rows() > 0 && llt_.info() == Eigen::Success;
  if (definite_) {
    const double log_det = 2.0 * llt_.matrixL().toDenseMatrix().diagonal().array().log().sum();
    log_norm_ = -0.5 * (static_cast<double>(cov_.rows()) * std::log(2.0 * std::numbers::pi) +
                        log_det);
  }
}

double Gaussian::log_density(const Vector& residual) const {
  if (!definite_) throw NumericalError("log-density needs a positive-definite covariance");
  const Vector w = llt_.matrixL().solve(residual);
  return log_norm_ - 0.5 * w.squaredNorm();
}

}  // namespace stiffid
