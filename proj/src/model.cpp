#include "stiffid/model.hpp"

#include <cmath>

namespace stiffid {

Vector rk4_step(const Dynamics& f, const Vector& x, const Vector& u, double k, double dt) {
  if (!(dt > 0.0)) throw ConfigError("integration step must be positive");
  const Vector k1 = f(x, u, k);
  const Vector k2 = f(x + 0.5 * dt * k1, u, k);
  const Vector k3 = f(x + 0.5 * dt * k2, u, k);
  const Vector k4 = f(x + dt * k3, u, k);
  Vector next = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  if (!next.allFinite()) throw NumericalError("RK4 step produced a non-finite state");
  return next;
}

ContinuousModel::ContinuousModel(double dt) : dt_(dt) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("model step size must be positive");
}

Vector ContinuousModel::transition(const Vector& x, const Vector& u, double k) const {
  return advance(x, u, k, dt_);
}

Vector ContinuousModel::advance(const Vector& x, const Vector& u, double k, double dt) const {
  return rk4_step([this](const Vector& xs, const Vector& us, double ks) {
                    return derivative(xs, us, ks);
                  },
                  x, u, k, dt);
}

}  // namespace stiffid
