#pragma once

// Reduced-rank Gaussian-process machinery: Laplace eigenfunctions on a box,
// the squared-exponential spectral density and the resulting kernel
// approximation k(q, q') ~ sum_m S(sqrt(rho_m)) phi_m(q) phi_m(q').

#include "stiffid/types.hpp"

#include <atomic>
#include <cstdint>

namespace stiffid {

/// Rectangular domain [-L_1, L_1] x ... x [-L_n, L_n].
class DomainBox {
 public:
  explicit DomainBox(Vector half_widths);

  const Vector& half_widths() const { return half_widths_; }
  int dims() const { return static_cast<int>(half_widths_.size()); }

 private:
  Vector half_widths_;
};

/// Squared-exponential kernel hyperparameters (sigma_f^2, ell).
struct KernelHyperparams {
  double signal_variance = 1.0;
  double length_scale = 1.0;

  void validate() const;
  bool operator==(const KernelHyperparams&) const = default;
};

/// Affine map from raw pose coordinates to GP inputs: z = (q - center) / scale.
struct InputScaler {
  Vector center;
  Vector scale;

  static InputScaler identity(int dims);
  /// Maps the workspace box [lower, upper] onto `fill` times the domain box.
  static InputScaler from_workspace(const Vector& lower, const Vector& upper,
                                    const DomainBox& domain, double fill = 0.8);

  Vector apply(const Vector& q_raw) const;
  Vector invert(const Vector& z) const;
  void validate() const;
};

/// The M lowest-frequency Laplace eigenfunctions of a box domain.
///
/// Rows of index_grid() are the multi-indices j_m, sorted by eigenvalue with
/// ties broken lexicographically on the index row. Evaluation is safe from
/// several threads; out-of-domain inputs are clamped onto the boundary and
/// tallied in an atomic counter.
class LaplacianBasis {
 public:
  LaplacianBasis(int n_q, int basis_count, DomainBox domain);
  LaplacianBasis(const LaplacianBasis& other);
  LaplacianBasis& operator=(const LaplacianBasis& other);

  int dims() const { return domain_.dims(); }
  int size() const { return static_cast<int>(eigenvalues_.size()); }
  const DomainBox& domain() const { return domain_; }
  const Eigen::MatrixXi& index_grid() const { return index_grid_; }
  const Vector& eigenvalues() const { return eigenvalues_; }

  /// phi(q) for a GP input q (already scaled). Throws InvalidInputError on non-finite q.
  Vector evaluate(const Vector& q) const;
  void evaluate(const Vector& q, Eigen::Ref<Vector> out) const;

  std::uint64_t clamp_count() const { return clamps_.load(std::memory_order_relaxed); }
  void reset_clamp_count() { clamps_.store(0, std::memory_order_relaxed); }

 private:
  DomainBox domain_;
  Eigen::MatrixXi index_grid_;
  Vector eigenvalues_;
  Eigen::VectorXi max_index_;  // largest index used per dimension
  double normalization_ = 1.0;  // prod_i L_i^{-1/2}
  mutable std::atomic<std::uint64_t> clamps_{0};
};

/// S_se(omega) = sigma_f^2 (2 pi ell^2)^{n_q/2} exp(-ell^2 omega^2 / 2).
double spectral_density_se(double omega, const KernelHyperparams& hp, int n_q);

/// Diagonal of the coefficient prior covariance, S(sqrt(rho_m)) per basis function.
Vector prior_variances(const LaplacianBasis& basis, const KernelHyperparams& hp);
double log_spectral_density_se(double omega, const KernelHyperparams& hp, int n_q);
/// Inverse prior variances computed in log space; finite where the variances underflow.
Vector prior_precisions(const LaplacianBasis& basis, const KernelHyperparams& hp);
Matrix prior_covariance(const LaplacianBasis& basis, const KernelHyperparams& hp);

double approx_kernel(const LaplacianBasis& basis, const KernelHyperparams& hp, const Vector& q,
                     const Vector& q_prime);

/// Exact squared-exponential kernel, the target of approx_kernel.
double se_kernel(const KernelHyperparams& hp, const Vector& q, const Vector& q_prime);

}  // namespace stiffid
