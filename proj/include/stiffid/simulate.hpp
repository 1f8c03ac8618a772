#pragma once

#include "stiffid/model.hpp"

#include <cstdint>
#include <functional>
#include <vector>

namespace stiffid {

/// Time-indexed record of a simulated (or recorded) run. Row t holds sample t.
struct SimTrace {
  double dt = 0.0;
  Vector time;
  Matrix inputs;
  Matrix outputs;
  Matrix states;     // empty when ground truth is unavailable
  Vector stiffness;  // empty when ground truth is unavailable

  Eigen::Index length() const { return time.size(); }
  bool has_states() const { return states.rows() > 0; }
  bool has_stiffness() const { return stiffness.size() > 0; }
  void validate() const;
};

using StiffnessField = std::function<double(const Vector& q)>;

struct NoiseCovariances {
  Matrix process;
  Matrix measurement;
};

/// Rolls x_{t+1} = f(x_t, u_t, k(q_t)) + w_t, y_t = h(x_t, u_t, k(q_t)) + e_t
/// for t = 0..T, drawing w and e from the simulate substream of `seed`.
/// `inputs` must hold T + 1 rows. Throws NumericalError when |x| exceeds
/// `blowup_bound`.
SimTrace simulate(const StateSpaceModel& model, const Matrix& inputs, int steps,
                  const NoiseCovariances& noise, std::uint64_t seed, const Vector& x0,
                  const StiffnessField& stiffness, double dt, double blowup_bound = 1e6);

struct SineComponent {
  double amplitude = 0.0;
  double frequency_hz = 0.0;
  double phase_rad = 0.0;

  bool operator==(const SineComponent&) const = default;
};

/// Sum of sines per input channel, sampled at t = 0, dt, ..., steps * dt.
Matrix multisine_input(const std::vector<std::vector<SineComponent>>& channels, int steps,
                       double dt);

}  // namespace stiffid
