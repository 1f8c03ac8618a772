#pragma once

// Augmented state-space model
//   x_{t+1} = f(x_t, u_t, k) + w_t,   y_t = h(x_t, u_t, k) + e_t
// where k is the scalar state-dependent stiffness to be learned.

#include "stiffid/types.hpp"

#include <functional>
#include <memory>

namespace stiffid {

class StateSpaceModel {
 public:
  virtual ~StateSpaceModel() = default;

  virtual int state_dim() const = 0;
  virtual int input_dim() const = 0;
  virtual int output_dim() const = 0;
  /// Number of leading state components forming the pose q.
  virtual int pose_dim() const = 0;

  virtual Vector transition(const Vector& x, const Vector& u, double k) const = 0;
  virtual Vector observe(const Vector& x, const Vector& u, double k) const = 0;

  Vector pose(const Vector& x) const { return x.head(pose_dim()); }
};

using Dynamics = std::function<Vector(const Vector& x, const Vector& u, double k)>;

/// Classical fourth-order Runge-Kutta step of xdot = f(x, u, k) with u and k held.
Vector rk4_step(const Dynamics& f, const Vector& x, const Vector& u, double k, double dt);

/// A model defined by continuous dynamics and discretized with one RK4 step of size dt.
class ContinuousModel : public StateSpaceModel {
 public:
  explicit ContinuousModel(double dt);

  virtual Vector derivative(const Vector& x, const Vector& u, double k) const = 0;

  double step_size() const { return dt_; }
  Vector transition(const Vector& x, const Vector& u, double k) const override;
  Vector advance(const Vector& x, const Vector& u, double k, double dt) const;

 private:
  double dt_;
};

}  // namespace stiffid
