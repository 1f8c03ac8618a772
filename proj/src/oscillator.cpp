#include "stiffid/oscillator.hpp"

#include <cmath>

namespace stiffid {

void OscillatorParams::validate() const {
  if (mass.size() != 3 || damping.size() != 3) throw ConfigError("oscillator needs 3 axes");
  if (input_gain.rows() != 3 || input_gain.cols() < 1)
    throw ConfigError("input gain must have 3 rows");
  if ((mass.array() <= 0.0).any()) throw ConfigError("masses must be positive");
  if ((damping.array() < 0.0).any()) throw ConfigError("damping must be nonnegative");
  if (!(k0 > 0.0) || !(k0 + k1 > 0.0)) throw ConfigError("stiffness field must stay positive");
  if (!(c > 0.0)) throw ConfigError("stiffness field width c must be positive");
  if (!(dt > 0.0)) throw ConfigError("step size must be positive");
  if (output_dim != 3 && output_dim != 6) throw ConfigError("output dimension must be 3 or 6");
}

StiffnessOscillator::StiffnessOscillator(OscillatorParams params)
    : ContinuousModel(params.dt), params_(std::move(params)) {
  params_.validate();
}

Vector StiffnessOscillator::derivative(const Vector& x, const Vector& u, double k) const {
  Vector dx(6);
  const auto q = x.head<3>();
  const auto v = x.tail<3>();
  dx.head<3>() = v;
  dx.tail<3>() = (params_.input_gain * u - k * q - params_.damping.cwiseProduct(v))
                     .cwiseQuotient(params_.mass);
  return dx;
}

Vector StiffnessOscillator::observe(const Vector& x, const Vector& /*u*/, double k) const {
  const auto q = x.head<3>();
  const auto v = x.tail<3>();
  const Eigen::Vector3d force = -(k * q + params_.damping.cwiseProduct(v));
  if (params_.output_dim == 3) return force;
  Vector y(6);
  y.head<3>() = force;
  const Eigen::Vector3d arm(q[0], q[1], params_.lever_arm + q[2]);
  y.tail<3>() = arm.cross(force);
  return y;
}

double StiffnessOscillator::true_stiffness(const Vector& q) const {
  return params_.k0 + params_.k1 * std::tanh(q.squaredNorm() / params_.c);
}

LinearGaussianModel::LinearGaussianModel(LinearModelMatrices m) : m_(std::move(m)) {
  const Eigen::Index n = m_.a0.rows();
  if (m_.a0.cols() != n || m_.a1.rows() != n || m_.a1.cols() != n || m_.b.rows() != n)
    throw ConfigError("linear model transition matrices are inconsistent");
  if (m_.c0.cols() != n || m_.c1.rows() != m_.c0.rows() || m_.c1.cols() != n ||
      m_.d.rows() != m_.c0.rows() || m_.d.cols() != m_.b.cols())
    throw ConfigError("linear model output matrices are inconsistent");
  if (m_.pose_dim < 1 || m_.pose_dim > n) throw ConfigError("linear model pose dimension");
}

Vector LinearGaussianModel::transition(const Vector& x, const Vector& u, double k) const {
  return m_.a0 * x + k * (m_.a1 * x) + m_.b * u;
}

Vector LinearGaussianModel::observe(const Vector& x, const Vector& u, double k) const {
  return m_.c0 * x + k * (m_.c1 * x) + m_.d * u;
}

}  // namespace stiffid
