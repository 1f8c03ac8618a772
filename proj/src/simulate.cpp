#include "stiffid/simulate.hpp"

#include "stiffid/gaussian.hpp"
#include "stiffid/random.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace stiffid {

void SimTrace::validate() const {
  const Eigen::Index n = time.size();
  if (n == 0) throw InvalidInputError("trace is empty");
  if (inputs.rows() != n || outputs.rows() != n)
    throw InvalidInputError("trace columns have inconsistent lengths");
  if (has_states() && states.rows() != n) throw InvalidInputError("trace states length mismatch");
  if (has_stiffness() && stiffness.size() != n)
    throw InvalidInputError("trace stiffness length mismatch");
  if (!(dt > 0.0)) throw InvalidInputError("trace step must be positive");
}

SimTrace simulate(const StateSpaceModel& model, const Matrix& inputs, int steps,
                  const NoiseCovariances& noise, std::uint64_t seed, const Vector& x0,
                  const StiffnessField& stiffness, double dt, double blowup_bound) {
  if (steps < 0) throw ConfigError("simulation length must be nonnegative");
  if (inputs.rows() != steps + 1 || inputs.cols() != model.input_dim())
    throw ConfigError("input signal has the wrong shape");
  if (x0.size() != model.state_dim()) throw ConfigError("initial state has the wrong size");
  if (noise.process.rows() != model.state_dim() || noise.measurement.rows() != model.output_dim())
    throw ConfigError("noise covariance has the wrong size");
  const Gaussian process(noise.process);
  const Gaussian measurement(noise.measurement);
  CounterRng rng(seed, Stream::kSimulate, 0, 0);

  SimTrace trace;
  trace.dt = dt;
  const int n = steps + 1;
  trace.time.resize(n);
  for (int t = 0; t < n; ++t) trace.time[t] = dt * t;
  trace.inputs = inputs;
  trace.states.resize(n, model.state_dim());
  trace.outputs.resize(n, model.output_dim());
  trace.stiffness.resize(n);

  Vector x = x0;
  for (int t = 0; t < n; ++t) {
    if (!x.allFinite() || x.norm() > blowup_bound) {
      std::ostringstream os;
      os << "simulation diverged at step " << t;
      throw NumericalError(os.str());
    }
    const Vector u = inputs.row(t).transpose();
    const double k = stiffness(model.pose(x));
    trace.states.row(t) = x.transpose();
    trace.stiffness[t] = k;
    trace.outputs.row(t) = (model.observe(x, u, k) + measurement.sample(rng)).transpose();
    if (t + 1 < n) x = model.transition(x, u, k) + process.sample(rng);
  }
  return trace;
}

Matrix multisine_input(const std::vector<std::vector<SineComponent>>& channels, int steps,
                       double dt) {
  if (steps < 0 || !(dt > 0.0)) throw ConfigError("multisine needs steps >= 0 and dt > 0");
  Matrix u = Matrix::Zero(steps + 1, static_cast<Eigen::Index>(channels.size()));
  for (std::size_t c = 0; c < channels.size(); ++c) {
    for (const SineComponent& s : channels[c]) {
      for (int t = 0; t <= steps; ++t) {
        u(t, static_cast<Eigen::Index>(c)) +=
            s.amplitude * std::sin(2.0 * std::numbers::pi * s.frequency_hz * dt * t + s.phase_rad);
      }
    }
  }
  return u;
}

}  // namespace stiffid
