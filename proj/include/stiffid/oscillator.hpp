#pragma once

#include "stiffid/model.hpp"

namespace stiffid {

/// Parameters of the synthetic stand-in for the soft-robot model.
struct OscillatorParams {
  Vector mass = Vector::Constant(3, 1.0);      // kg, per axis
  Vector damping = Vector::Constant(3, 6.0);   // N s / m, per axis
  Matrix input_gain = Matrix::Identity(3, 3);  // N per unit input
  // k_true(q) = k0 + k1 tanh(|q|^2 / c)
  double k0 = 700.0;     // N / m
  double k1 = 400.0;     // N / m
  double c = 4.0e-4;     // m^2
  double dt = 0.008;     // s
  int output_dim = 3;    // 3: base reaction force, 6: force and moment
  double lever_arm = 0.1;  // m, anchor-to-mass offset used for the moment outputs

  void validate() const;
};

/// Three-axis damped mass on a spring whose stiffness depends on the pose.
///
/// State x = [q; qdot] with q in R^3. The scalar stiffness argument k plays
/// the role of the learned bending stiffness: the restoring force is -k q.
/// Outputs are the reaction forces the spring and damper exert on the anchor,
/// optionally followed by the moments about the anchor.
class StiffnessOscillator : public ContinuousModel {
 public:
  explicit StiffnessOscillator(OscillatorParams params = {});

  int state_dim() const override { return 6; }
  int input_dim() const override { return static_cast<int>(params_.input_gain.cols()); }
  int output_dim() const override { return params_.output_dim; }
  int pose_dim() const override { return 3; }

  Vector derivative(const Vector& x, const Vector& u, double k) const override;
  Vector observe(const Vector& x, const Vector& u, double k) const override;

  double true_stiffness(const Vector& q) const;
  const OscillatorParams& params() const { return params_; }

 private:
  OscillatorParams params_;
};

/// Linear model whose matrices are affine in the stiffness:
///   x' = (A0 + k A1) x + B u,   y = (C0 + k C1) x + D u.
struct LinearModelMatrices {
  Matrix a0, a1, b, c0, c1, d;
  int pose_dim = 1;
};

class LinearGaussianModel : public StateSpaceModel {
 public:
  explicit LinearGaussianModel(LinearModelMatrices m);

  int state_dim() const override { return static_cast<int>(m_.a0.rows()); }
  int input_dim() const override { return static_cast<int>(m_.b.cols()); }
  int output_dim() const override { return static_cast<int>(m_.c0.rows()); }
  int pose_dim() const override { return m_.pose_dim; }

  Vector transition(const Vector& x, const Vector& u, double k) const override;
  Vector observe(const Vector& x, const Vector& u, double k) const override;

  Matrix transition_matrix(double k) const { return m_.a0 + k * m_.a1; }
  Matrix output_matrix(double k) const { return m_.c0 + k * m_.c1; }
  const LinearModelMatrices& matrices() const { return m_; }

 private:
  LinearModelMatrices m_;
};

}  // namespace stiffid
