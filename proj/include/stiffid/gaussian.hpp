#pragma once

#include "stiffid/types.hpp"

#include <random>

namespace stiffid {

/// Square root S with S S^T = P for a symmetric PSD matrix.
/// Uses Cholesky when P is positive definite, otherwise a symmetric eigen
/// decomposition with negative eigenvalues floored at zero.
Matrix psd_sqrt(const Matrix& p);

/// Zero-mean Gaussian with a fixed covariance: sampling and log-density.
class Gaussian {
 public:
  Gaussian() = default;
  explicit Gaussian(const Matrix& covariance);

  int dim() const { return static_cast<int>(sqrt_.rows()); }
  const Matrix& covariance() const { return cov_; }

  /// log N(r | 0, Sigma); requires a positive-definite covariance.
  double log_density(const Vector& residual) const;

  template <class Urbg>
  Vector sample(Urbg& rng) const {
    std::normal_distribution<double> n01(0.0, 1.0);
    Vector z(dim());
    for (int i = 0; i < dim(); ++i) z[i] = n01(rng);
    return sqrt_ * z;
  }

 private:
  Matrix cov_;
  Matrix sqrt_;
  Eigen::LLT<Matrix> llt_;
  bool definite_ = false;
  double log_norm_ = 0.0;
};

}  // namespace stiffid
