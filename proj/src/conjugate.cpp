#include "stiffid/conjugate.hpp"

#include <limits>
#include <sstream>

namespace stiffid {

double StudentTParams::variance() const {
  if (dof <= 2.0) return std::numeric_limits<double>::infinity();
  return squared_scale * dof / (dof - 2.0);
}

NigStatistics::NigStatistics(std::shared_ptr<const NigPrior> prior) : prior_(std::move(prior)) {
  if (!prior_) throw ConfigError("NIG statistics need a prior");
  const Eigen::Index m = prior_->precision.rows();
  s1_ = Vector::Zero(m);
  r1_ = Matrix::Zero(m, m);
}

void NigStatistics::replace_prior(std::shared_ptr<const NigPrior> prior) {
  if (!prior || prior->precision.rows() != r1_.rows())
    throw ConfigError("replacement prior has the wrong size");
  prior_ = std::move(prior);
}

void NigStatistics::measurement_update(const Vector& phi, double k) {
  s1_.noalias() += k * phi;
  s2_ += k * k;
  r1_.selfadjointView<Eigen::Lower>().rankUpdate(phi);
  r1_.triangularView<Eigen::StrictlyUpper>() = r1_.transpose();
  r2_ += 1.0;
}

void NigStatistics::time_update(double lambda) {
  if (!(lambda > 0.0 && lambda <= 1.0))
    throw ConfigError("forgetting multiplier must lie in (0, 1]");
  if (lambda == 1.0) return;
  s1_ *= lambda;
  s2_ *= lambda;
  r1_ *= lambda;
  r2_ *= lambda;
}

NigParams NigStatistics::posterior() const {
  const Matrix precision = r1();
  Eigen::LLT<Matrix> llt(precision);
  if (llt.info() != Eigen::Success) throw NumericalError("r1 is not positive definite");
  NigParams p;
  p.mean = llt.solve(s1_);
  p.covariance_shape = llt.solve(Matrix::Identity(size(), size()));
  p.covariance_shape = 0.5 * (p.covariance_shape + p.covariance_shape.transpose()).eval();
  p.scale = s2() - s1_.dot(p.mean);
  p.dof = r2();
  if (!(p.scale > 0.0)) {
    std::ostringstream os;
    os << "NIG posterior scale is not positive (psi = " << p.scale << ", s2 = " << s2()
       << ", s1^T m = " << s1_.dot(p.mean) << ", r2 = " << r2() << ", |s1| = " << s1_.norm()
       << ")";
    throw DegeneracyError(os.str());
  }
  return p;
}

NigFactor NigStatistics::factorize() const { return NigFactor(*this); }

NigStatistics NigStatistics::restore(std::shared_ptr<const NigPrior> prior, Vector s1, double s2,
                                     Matrix r1, double r2) {
  NigStatistics out(std::move(prior));
  if (s1.size() != out.s1_.size() || r1.rows() != out.r1_.rows() || r1.cols() != out.r1_.cols())
    throw InvalidInputError("restored statistics have the wrong size");
  out.s1_ = std::move(s1);
  out.s2_ = s2;
  out.r1_ = std::move(r1);
  out.r2_ = r2;
  return out;
}

NigFactor::NigFactor(const NigStatistics& stats) : llt_(stats.r1()) {
  if (llt_.info() != Eigen::Success) throw NumericalError("r1 is not positive definite");
  mean_ = llt_.solve(stats.s1());
  psi_ = stats.s2() - stats.s1().dot(mean_);
  nu_ = stats.r2();
  if (!(psi_ > kMinScale)) {
    psi_ = kMinScale;
    clamped_ = true;
  }
}

double NigFactor::quad_form(const Vector& phi) const {
  const Vector half = llt_.matrixL().solve(phi);
  return half.squaredNorm();
}

StudentTParams NigFactor::predictive(const Vector& phi) const {
  const double spread = quad_form(phi);
  if (!std::isfinite(spread)) throw DegeneracyError("predictive spread is not finite");
  StudentTParams t;
  t.dof = nu_;
  t.location = mean_.dot(phi);
  // (xi + 1) / (xi nu) psi with xi = 1 / spread, finite as spread -> 0.
  t.squared_scale = (1.0 + spread) * psi_ / t.dof;
  return t;
}

std::shared_ptr<const NigPrior> make_prior_diagonal(const Vector& variances, double psi,
                                                    double nu) {
  if (!(psi > 0.0) || !(nu > 0.0)) throw ConfigError("NIG prior needs psi > 0 and nu > 0");
  for (Eigen::Index i = 0; i < variances.size(); ++i) {
    if (!(variances[i] > 0.0) || !std::isfinite(variances[i]))
      throw NumericalError("prior covariance is singular");
  }
  auto p = std::make_shared<NigPrior>();
  p->precision = variances.cwiseInverse().asDiagonal();
  p->psi = psi;
  p->nu = nu;
  return p;
}

std::shared_ptr<const NigPrior> make_prior_precision(const Vector& precisions, double psi,
                                                    double nu) {
  if (!(psi > 0.0) || !(nu > 0.0)) throw ConfigError("NIG prior needs psi > 0 and nu > 0");
  for (Eigen::Index i = 0; i < precisions.size(); ++i) {
    if (!(precisions[i] > 0.0) || !std::isfinite(precisions[i]))
      throw NumericalError("prior precision must be positive and finite");
  }
  auto p = std::make_shared<NigPrior>();
  p->precision = precisions.asDiagonal();
  p->psi = psi;
  p->nu = nu;
  return p;
}

NigStatistics prior_statistics(const Matrix& covariance, double psi, double nu) {
  if (!(psi > 0.0) || !(nu > 0.0)) throw ConfigError("NIG prior needs psi > 0 and nu > 0");
  if (covariance.rows() != covariance.cols() || covariance.rows() == 0)
    throw ConfigError("prior covariance must be square");
  Eigen::LLT<Matrix> llt(covariance);
  if (llt.info() != Eigen::Success) throw NumericalError("prior covariance is singular");
  auto p = std::make_shared<NigPrior>();
  p->precision = llt.solve(Matrix::Identity(covariance.rows(), covariance.cols()));
  p->precision = 0.5 * (p->precision + p->precision.transpose()).eval();
  p->psi = psi;
  p->nu = nu;
  return NigStatistics(std::move(p));
}

NigStatistics prior_statistics_diagonal(const Vector& variances, double psi, double nu) {
  return NigStatistics(make_prior_diagonal(variances, psi, nu));
}

NigParams posterior_params(const NigStatistics& stats) { return stats.posterior(); }

StudentTParams predictive_student_t(const NigStatistics& stats, const Vector& phi) {
  const NigParams p = stats.posterior();
  const double spread = phi.dot(p.covariance_shape * phi);
  if (!std::isfinite(spread)) throw DegeneracyError("predictive spread is not finite");
  StudentTParams t;
  t.dof = p.dof;
  t.location = p.mean.dot(phi);
  t.squared_scale = (1.0 + spread) * p.scale / t.dof;
  return t;
}

double gp_posterior_mean(const NigStatistics& stats, const Vector& phi) {
  return stats.posterior().mean.dot(phi);
}

}  // namespace stiffid
