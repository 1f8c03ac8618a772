#include "stiffid/metrics.hpp"

#include "stiffid/format.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>

namespace stiffid {

namespace {

void check_shapes(const Matrix& estimates, const Matrix& truth) {
  if (estimates.rows() != truth.rows() || estimates.cols() != truth.cols())
    throw InvalidInputError("estimates and truth have different shapes");
  if (truth.rows() == 0) throw InvalidInputError("metrics need at least one sample");
}

std::string pad(const std::string& s, std::size_t width) {
  if (s.size() >= width) return s;
  return std::string(width - s.size(), ' ') + s;
}

std::string pad_right(const std::string& s, std::size_t width) {
  if (s.size() >= width) return s;
  return s + std::string(width - s.size(), ' ');
}

}  // namespace

double rmse(const Matrix& estimates, const Matrix& truth, const std::vector<int>& columns) {
  check_shapes(estimates, truth);
  if (columns.empty()) throw InvalidInputError("rmse needs at least one column");
  double acc = 0.0;
  for (int c : columns) {
    if (c < 0 || c >= truth.cols()) throw InvalidInputError("rmse column out of range");
    acc += (estimates.col(c) - truth.col(c)).squaredNorm();
  }
  return std::sqrt(acc / (static_cast<double>(truth.rows()) * static_cast<double>(columns.size())));
}

Vector per_state_nmse(const Matrix& estimates, const Matrix& truth) {
  check_shapes(estimates, truth);
  const double n = static_cast<double>(truth.rows());
  Vector out(truth.cols());
  for (Eigen::Index j = 0; j < truth.cols(); ++j) {
    const double mean = truth.col(j).mean();
    const double var = (truth.col(j).array() - mean).square().sum() / n;
    const double mse = (estimates.col(j) - truth.col(j)).squaredNorm() / n;
    out[j] = var > 0.0 ? mse / var : std::numeric_limits<double>::quiet_NaN();
  }
  return out;
}

double nmse(const Matrix& estimates, const Matrix& truth, std::vector<int>* excluded) {
  const Vector per = per_state_nmse(estimates, truth);
  double acc = 0.0;
  int used = 0;
  if (excluded) excluded->clear();
  for (Eigen::Index j = 0; j < per.size(); ++j) {
    if (std::isnan(per[j])) {
      if (excluded) excluded->push_back(static_cast<int>(j));
      continue;
    }
    acc += per[j];
    ++used;
  }
  if (used == 0) throw InvalidInputError("every truth state has zero variance");
  return acc / used;
}

PredictionScore multistep_nmse(const ContinuousModel& model, const StiffnessProvider& stiffness,
                               const SimTrace& trace, int horizon, double dt, int stride) {
  trace.validate();
  if (!trace.has_states()) throw InvalidInputError("multi-step prediction needs ground-truth states");
  if (horizon < 1 || !(dt > 0.0) || stride < 1)
    throw ConfigError("multi-step prediction needs horizon >= 1, dt > 0, stride >= 1");
  const Eigen::Index n = trace.length();
  const double span = horizon * dt;
  const double t0 = trace.time[0];
  const double t_end = trace.time[n - 1];
  const double truth_scale = trace.states.rowwise().norm().maxCoeff();
  const double bound = 1e3 * std::max(1.0, truth_scale);

  std::vector<Vector> predicted;
  std::vector<Vector> landing;
  PredictionScore score;
  for (Eigen::Index a = 0; a < n; a += stride) {
    const double t_land = trace.time[a] + span;
    if (t_land > t_end + 1e-9) break;
    Vector x = trace.states.row(a).transpose();
    bool ok = true;
    try {
      for (int s = 0; s < horizon; ++s) {
        const double tau = trace.time[a] + s * dt;
        Eigen::Index ui = static_cast<Eigen::Index>(std::floor((tau - t0) / trace.dt + 1e-9));
        ui = std::clamp<Eigen::Index>(ui, 0, n - 1);
        const Vector u = trace.inputs.row(ui).transpose();
        x = model.advance(x, u, stiffness(x, a), dt);
        if (!x.allFinite() || x.norm() > bound) {
          ok = false;
          break;
        }
      }
    } catch (const NumericalError&) {
      ok = false;
    }
    if (!ok) {
      ++score.anchors_excluded;
      continue;
    }
    // Ground truth at the landing time by linear interpolation.
    const double pos = (t_land - t0) / trace.dt;
    Eigen::Index lo = static_cast<Eigen::Index>(std::floor(pos + 1e-9));
    lo = std::clamp<Eigen::Index>(lo, 0, n - 1);
    const double frac = std::clamp(pos - static_cast<double>(lo), 0.0, 1.0);
    Vector truth = trace.states.row(lo).transpose();
    if (frac > 1e-9 && lo + 1 < n)
      truth = (1.0 - frac) * truth + frac * trace.states.row(lo + 1).transpose();
    predicted.push_back(std::move(x));
    landing.push_back(std::move(truth));
  }
  score.anchors_used = static_cast<int>(predicted.size());
  if (predicted.size() < 2) throw InvalidInputError("trace too short for the requested horizon");

  Matrix est(static_cast<Eigen::Index>(predicted.size()), trace.states.cols());
  Matrix tru(est.rows(), est.cols());
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    est.row(static_cast<Eigen::Index>(i)) = predicted[i].transpose();
    tru.row(static_cast<Eigen::Index>(i)) = landing[i].transpose();
  }
  score.per_state = per_state_nmse(est, tru);
  double sum = 0.0;
  double sum_sq = 0.0;
  int used = 0;
  for (Eigen::Index j = 0; j < score.per_state.size(); ++j) {
    if (std::isnan(score.per_state[j])) continue;
    sum += score.per_state[j];
    sum_sq += score.per_state[j] * score.per_state[j];
    ++used;
  }
  if (used == 0) throw InvalidInputError("every landing state has zero variance");
  score.nmse = sum / used;
  score.nmse_std = std::sqrt(std::max(0.0, sum_sq / used - score.nmse * score.nmse));
  return score;
}

const GridCell& VariantGrid::at(int horizon, double dt) const {
  for (const GridCell& c : cells)
    if (c.horizon == horizon && std::abs(c.dt - dt) < 1e-12) return c;
  throw InvalidInputError("no grid cell for the requested horizon and step size");
}

MetricReport compare_variants(const ContinuousModel& model, const SimTrace& trace,
                              const std::vector<NamedProvider>& variants,
                              const std::vector<int>& horizons,
                              const std::vector<double>& step_sizes, int stride) {
  MetricReport report;
  report.horizons = horizons;
  report.step_sizes = step_sizes;
  for (const NamedProvider& v : variants) {
    VariantGrid grid;
    grid.name = v.name;
    for (int h : horizons) {
      for (double dt : step_sizes)
        grid.cells.push_back({h, dt, multistep_nmse(model, v.provider, trace, h, dt, stride)});
    }
    report.variants.push_back(std::move(grid));
  }
  return report;
}

MetricReport compare_variants(const ContinuousModel& model, const SimTrace& trace,
                              const StiffnessProvider& learned_gp, const Vector& ukf_stiffness,
                              double mean_stiffness, const std::vector<int>& horizons,
                              const std::vector<double>& step_sizes, int stride) {
  if (ukf_stiffness.size() != trace.length())
    throw InvalidInputError("UKF stiffness track does not match the trace length");
  std::vector<NamedProvider> variants;
  variants.push_back({"learned_gp", learned_gp});
  variants.push_back({"nominal_ukf_k", [&ukf_stiffness](const Vector&, Eigen::Index a) {
                        return ukf_stiffness[a];
                      }});
  variants.push_back({"nominal_mean_k", [mean_stiffness](const Vector&, Eigen::Index) {
                        return mean_stiffness;
                      }});
  return compare_variants(model, trace, variants, horizons, step_sizes, stride);
}

void write_report_csv(const MetricReport& report, std::ostream& out) {
  out << "variant,horizon,dt_ms,nmse_mean,nmse_std,anchors_used,anchors_excluded\n";
  for (const VariantGrid& v : report.variants) {
    for (const GridCell& c : v.cells) {
      out << v.name << ',' << c.horizon << ',' << format_double(c.dt * 1e3) << ','
          << format_double(c.score.nmse) << ',' << format_double(c.score.nmse_std) << ','
          << c.score.anchors_used << ',' << c.score.anchors_excluded << '\n';
    }
  }
}

std::string render_report_table(const MetricReport& report) {
  std::size_t name_w = 7;
  for (const VariantGrid& v : report.variants) name_w = std::max(name_w, v.name.size());
  constexpr std::size_t kCell = 18;
  std::ostringstream os;
  os << pad_right("h", 4) << " | " << pad_right("variant", name_w) << " |";
  for (double dt : report.step_sizes) os << pad("dt=" + format_fixed(dt * 1e3, 1) + "ms", kCell);
  os << '\n' << std::string(4 + 3 + name_w + 2 + kCell * report.step_sizes.size(), '-') << '\n';
  for (int h : report.horizons) {
    bool first = true;
    for (const VariantGrid& v : report.variants) {
      os << pad_right(first ? std::to_string(h) : "", 4) << " | " << pad_right(v.name, name_w)
         << " |";
      first = false;
      for (double dt : report.step_sizes) {
        const PredictionScore& s = v.at(h, dt).score;
        const std::string cell = s.nmse > 1.0 ? std::string(">1")
                                              : format_fixed(s.nmse, 3) + " (" +
                                                    format_fixed(s.nmse_std, 3) + ")";
        os << pad(cell, kCell);
      }
      os << '\n';
    }
  }
  return os.str();
}

EstimationScore score_estimates(const std::string& method, const Matrix& estimates,
                                const Matrix& truth, int pose_dim) {
  check_shapes(estimates, truth);
  if (pose_dim < 1 || pose_dim > truth.cols()) throw InvalidInputError("pose dimension out of range");
  std::vector<int> pos;
  std::vector<int> vel;
  for (int j = 0; j < truth.cols(); ++j) (j < pose_dim ? pos : vel).push_back(j);
  EstimationScore s;
  s.method = method;
  s.rmse_positions = rmse(estimates, truth, pos);
  s.rmse_velocities = vel.empty() ? 0.0 : rmse(estimates, truth, vel);
  s.nmse = nmse(estimates, truth);
  return s;
}

void write_estimation_csv(const std::vector<EstimationScore>& rows, std::ostream& out) {
  out << "method,rmse_positions,rmse_velocities,nmse\n";
  for (const EstimationScore& r : rows) {
    out << r.method << ',' << format_double(r.rmse_positions) << ','
        << format_double(r.rmse_velocities) << ',' << format_double(r.nmse) << '\n';
  }
}

std::string render_estimation_table(const std::vector<EstimationScore>& rows) {
  std::size_t name_w = 6;
  for (const EstimationScore& r : rows) name_w = std::max(name_w, r.method.size());
  std::ostringstream os;
  os << pad_right("method", name_w) << " | " << pad("RMSE pos [mm]", 14) << " | "
     << pad("RMSE vel [mm/s]", 16) << " | " << pad("NMSE", 8) << '\n';
  os << std::string(name_w + 3 + 14 + 3 + 16 + 3 + 8, '-') << '\n';
  for (const EstimationScore& r : rows) {
    os << pad_right(r.method, name_w) << " | " << pad(format_fixed(r.rmse_positions * 1e3, 3), 14)
       << " | " << pad(format_fixed(r.rmse_velocities * 1e3, 2), 16) << " | "
       << pad(format_fixed(r.nmse, 3), 8) << '\n';
  }
  return os.str();
}

}  // namespace stiffid
