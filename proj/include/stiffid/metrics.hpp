#pragma once

#include "stiffid/model.hpp"
#include "stiffid/simulate.hpp"

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace stiffid {

/// sqrt of the mean squared error over the selected columns and all rows.
/// A constant offset d on one of g selected states gives |d| / sqrt(g).
double rmse(const Matrix& estimates, const Matrix& truth, const std::vector<int>& columns);

/// Per-state MSE divided by the per-state variance of the truth, averaged over
/// states. States whose truth has zero variance are skipped and listed in
/// `excluded`. Predicting the per-state truth mean gives exactly 1.
double nmse(const Matrix& estimates, const Matrix& truth, std::vector<int>* excluded = nullptr);

/// Per-state normalized MSE; NaN where the truth variance is zero.
Vector per_state_nmse(const Matrix& estimates, const Matrix& truth);

/// Stiffness used during a rollout: called with the current state and the anchor index.
using StiffnessProvider = std::function<double(const Vector& state, Eigen::Index anchor)>;

struct PredictionScore {
  double nmse = 0.0;        // mean over states
  double nmse_std = 0.0;    // standard deviation over states
  Vector per_state;
  int anchors_used = 0;
  int anchors_excluded = 0;
};

/// Multi-step prediction error: from every `stride`-th ground-truth anchor,
/// integrate `horizon` RK4 steps of size `dt` with zero-order-held inputs and
/// compare against the linearly interpolated ground truth at the landing time.
PredictionScore multistep_nmse(const ContinuousModel& model, const StiffnessProvider& stiffness,
                               const SimTrace& trace, int horizon, double dt, int stride = 1);

struct GridCell {
  int horizon = 0;
  double dt = 0.0;
  PredictionScore score;
};

struct VariantGrid {
  std::string name;
  std::vector<GridCell> cells;  // row-major: horizons outer, step sizes inner

  const GridCell& at(int horizon, double dt) const;
};

struct MetricReport {
  std::vector<int> horizons;
  std::vector<double> step_sizes;  // seconds
  std::vector<VariantGrid> variants;
};

struct NamedProvider {
  std::string name;
  StiffnessProvider provider;
};

MetricReport compare_variants(const ContinuousModel& model, const SimTrace& trace,
                              const std::vector<NamedProvider>& variants,
                              const std::vector<int>& horizons,
                              const std::vector<double>& step_sizes, int stride = 1);

/// Learned-GP, UKF-track and fixed-mean providers in that order.
MetricReport compare_variants(const ContinuousModel& model, const SimTrace& trace,
                              const StiffnessProvider& learned_gp, const Vector& ukf_stiffness,
                              double mean_stiffness, const std::vector<int>& horizons = {5, 10, 20},
                              const std::vector<double>& step_sizes = {1e-3, 2.5e-3, 5e-3, 7.5e-3,
                                                                       10e-3},
                              int stride = 1);

void write_report_csv(const MetricReport& report, std::ostream& out);
/// Aligned text table; cells above 1 are flagged as ">1".
std::string render_report_table(const MetricReport& report);

/// One row of the state-estimation comparison.
struct EstimationScore {
  std::string method;
  double rmse_positions = 0.0;
  double rmse_velocities = 0.0;
  double nmse = 0.0;
};

EstimationScore score_estimates(const std::string& method, const Matrix& estimates,
                                const Matrix& truth, int pose_dim);
void write_estimation_csv(const std::vector<EstimationScore>& rows, std::ostream& out);
std::string render_estimation_table(const std::vector<EstimationScore>& rows);

}  // namespace stiffid
