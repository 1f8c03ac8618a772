#include "stiffid/rrgp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <vector>

namespace stiffid {

namespace {

constexpr double kPi = std::numbers::pi;

bool all_finite(const Vector& v) { return v.allFinite(); }

double eigenvalue_of(const std::vector<int>& index, const Vector& half_widths) {
  double rho = 0.0;
  for (std::size_t i = 0; i < index.size(); ++i) {
    const double j = index[i];
    rho += kPi * kPi * j * j / (4.0 * half_widths[i] * half_widths[i]);
  }
  return rho;
}

struct Candidate {
  std::vector<int> index;
  double eigenvalue;
};

bool candidate_less(const Candidate& a, const Candidate& b) {
  const double tol = 1e-12 * std::max(std::abs(a.eigenvalue), std::abs(b.eigenvalue));
  if (std::abs(a.eigenvalue - b.eigenvalue) > tol) return a.eigenvalue < b.eigenvalue;
  return a.index < b.index;
}

// All multi-indices in {1..j_max}^n, sorted.
std::vector<Candidate> enumerate_grid(int n, int j_max, const Vector& half_widths) {
  std::vector<Candidate> out;
  std::vector<int> index(n, 1);
  while (true) {
    out.push_back({index, eigenvalue_of(index, half_widths)});
    int d = n - 1;
    while (d >= 0 && index[d] == j_max) {
      index[d] = 1;
      --d;
    }
    if (d < 0) break;
    ++index[d];
  }
  std::sort(out.begin(), out.end(), candidate_less);
  return out;
}

}  // namespace

DomainBox::DomainBox(Vector half_widths) : half_widths_(std::move(half_widths)) {
  if (half_widths_.size() < 1) throw ConfigError("domain box needs at least one dimension");
  for (Eigen::Index i = 0; i < half_widths_.size(); ++i) {
    if (!(half_widths_[i] > 0.0) || !std::isfinite(half_widths_[i]))
      throw ConfigError("domain half-widths must be finite and positive");
  }
}

void KernelHyperparams::validate() const {
  if (!(signal_variance > 0.0) || !std::isfinite(signal_variance))
    throw ConfigError("kernel signal variance must be positive");
  if (!(length_scale > 0.0) || !std::isfinite(length_scale))
    throw ConfigError("kernel length scale must be positive");
}

InputScaler InputScaler::identity(int dims) {
  return {Vector::Zero(dims), Vector::Ones(dims)};
}

InputScaler InputScaler::from_workspace(const Vector& lower, const Vector& upper,
                                        const DomainBox& domain, double fill) {
  if (lower.size() != domain.dims() || upper.size() != domain.dims())
    throw ConfigError("workspace bounds do not match the domain dimension");
  if (!(fill > 0.0 && fill <= 1.0)) throw ConfigError("workspace fill fraction must be in (0, 1]");
  InputScaler s;
  s.center = 0.5 * (lower + upper);
  s.scale = (0.5 * (upper - lower)).cwiseQuotient(fill * domain.half_widths());
  s.validate();
  return s;
}

Vector InputScaler::apply(const Vector& q_raw) const {
  return (q_raw - center).cwiseQuotient(scale);
}

Vector InputScaler::invert(const Vector& z) const { return z.cwiseProduct(scale) + center; }

void InputScaler::validate() const {
  if (center.size() != scale.size()) throw ConfigError("scaler center/scale size mismatch");
  for (Eigen::Index i = 0; i < scale.size(); ++i) {
    if (!(scale[i] > 0.0) || !std::isfinite(scale[i]))
      throw ConfigError("scaler entries must be finite and positive");
  }
  if (!center.allFinite()) throw ConfigError("scaler center must be finite");
}

LaplacianBasis::LaplacianBasis(int n_q, int basis_count, DomainBox domain)
    : domain_(std::move(domain)) {
  if (n_q < 1) throw ConfigError("basis needs n_q >= 1");
  if (basis_count < 1) throw ConfigError("basis needs M >= 1");
  if (domain_.dims() != n_q) throw ConfigError("domain dimension does not match n_q");
  const Vector& L = domain_.half_widths();

  // Start with the smallest cube holding M entries, then grow it until no index
  // outside the cube can undercut the M-th smallest eigenvalue inside it.
  int j_max = 1;
  while (std::pow(static_cast<double>(j_max), n_q) < basis_count) ++j_max;
  std::vector<Candidate> grid;
  while (true) {
    grid = enumerate_grid(n_q, j_max, L);
    const double mth = grid[basis_count - 1].eigenvalue;
    double base = 0.0;
    for (int i = 0; i < n_q; ++i) base += kPi * kPi / (4.0 * L[i] * L[i]);
    double outside = std::numeric_limits<double>::infinity();
    for (int i = 0; i < n_q; ++i) {
      const double j = j_max + 1;
      outside = std::min(outside, base + kPi * kPi * (j * j - 1.0) / (4.0 * L[i] * L[i]));
    }
    if (mth < outside) break;
    ++j_max;
  }

  index_grid_.resize(basis_count, n_q);
  eigenvalues_.resize(basis_count);
  max_index_ = Eigen::VectorXi::Ones(n_q);
  for (int m = 0; m < basis_count; ++m) {
    for (int i = 0; i < n_q; ++i) {
      index_grid_(m, i) = grid[m].index[i];
      max_index_[i] = std::max(max_index_[i], grid[m].index[i]);
    }
    eigenvalues_[m] = grid[m].eigenvalue;
  }
  normalization_ = 1.0;
  for (int i = 0; i < n_q; ++i) normalization_ /= std::sqrt(L[i]);
}

LaplacianBasis::LaplacianBasis(const LaplacianBasis& other)
    : domain_(other.domain_),
      index_grid_(other.index_grid_),
      eigenvalues_(other.eigenvalues_),
      max_index_(other.max_index_),
      normalization_(other.normalization_),
      clamps_(other.clamp_count()) {}

LaplacianBasis& LaplacianBasis::operator=(const LaplacianBasis& other) {
  if (this != &other) {
    domain_ = other.domain_;
    index_grid_ = other.index_grid_;
    eigenvalues_ = other.eigenvalues_;
    max_index_ = other.max_index_;
    normalization_ = other.normalization_;
    clamps_.store(other.clamp_count(), std::memory_order_relaxed);
  }
  return *this;
}

Vector LaplacianBasis::evaluate(const Vector& q) const {
  Vector out(size());
  evaluate(q, out);
  return out;
}

void LaplacianBasis::evaluate(const Vector& q, Eigen::Ref<Vector> out) const {
  const int n = dims();
  if (q.size() != n) throw InvalidInputError("basis input has wrong dimension");
  if (!all_finite(q)) throw InvalidInputError("basis input is not finite");
  const Vector& L = domain_.half_widths();

  // sines[i][j-1] = sin(pi j (q_i + L_i) / (2 L_i))
  constexpr int kStackDims = 8;
  constexpr int kStackIdx = 32;
  bool clamped = false;
  std::vector<double> heap;
  double stack[kStackDims * kStackIdx];
  const int stride = max_index_.maxCoeff();
  double* sines = stack;
  if (n > kStackDims || stride > kStackIdx) {
    heap.resize(static_cast<std::size_t>(n) * stride);
    sines = heap.data();
  }
  for (int i = 0; i < n; ++i) {
    double qi = q[i];
    if (qi < -L[i]) {
      qi = -L[i];
      clamped = true;
    } else if (qi > L[i]) {
      qi = L[i];
      clamped = true;
    }
    const double arg = kPi * (qi + L[i]) / (2.0 * L[i]);
    for (int j = 1; j <= max_index_[i]; ++j) sines[i * stride + j - 1] = std::sin(arg * j);
  }
  if (clamped) clamps_.fetch_add(1, std::memory_order_relaxed);

  for (int m = 0; m < size(); ++m) {
    double v = normalization_;
    for (int i = 0; i < n; ++i) v *= sines[i * stride + index_grid_(m, i) - 1];
    out[m] = v;
  }
}

double spectral_density_se(double omega, const KernelHyperparams& hp, int n_q) {
  const double ell2 = hp.length_scale * hp.length_scale;
  return hp.signal_variance * std::pow(2.0 * kPi * ell2, 0.5 * n_q) *
         std::exp(-0.5 * ell2 * omega * omega);
}

Vector prior_variances(const LaplacianBasis& basis, const KernelHyperparams& hp) {
  Vector v(basis.size());
  for (int m = 0; m < basis.size(); ++m)
    v[m] = spectral_density_se(std::sqrt(basis.eigenvalues()[m]), hp, basis.dims());
  return v;
}

double log_spectral_density_se(double omega, const KernelHyperparams& hp, int n_q) {
  const double ell2 = hp.length_scale * hp.length_scale;
  return std::log(hp.signal_variance) + 0.5 * n_q * std::log(2.0 * kPi * ell2) -
         0.5 * ell2 * omega * omega;
}

Vector prior_precisions(const LaplacianBasis& basis, const KernelHyperparams& hp) {
  // Capped so that long length scales give huge but finite precisions.
  constexpr double kMaxLogPrecision = 300.0;
  Vector p(basis.size());
  for (int m = 0; m < basis.size(); ++m) {
    const double log_s = log_spectral_density_se(std::sqrt(basis.eigenvalues()[m]), hp, basis.dims());
    p[m] = std::exp(std::min(-log_s, kMaxLogPrecision));
  }
  return p;
}

Matrix prior_covariance(const LaplacianBasis& basis, const KernelHyperparams& hp) {
  return prior_variances(basis, hp).asDiagonal();
}

double approx_kernel(const LaplacianBasis& basis, const KernelHyperparams& hp, const Vector& q,
                     const Vector& q_prime) {
  const Vector s = prior_variances(basis, hp);
  const Vector a = basis.evaluate(q);
  const Vector b = basis.evaluate(q_prime);
  // Summed in index order so that swapping the arguments gives a bit-identical result.
  double acc = 0.0;
  for (int m = 0; m < basis.size(); ++m) acc += s[m] * (a[m] * b[m]);
  return acc;
}

double se_kernel(const KernelHyperparams& hp, const Vector& q, const Vector& q_prime) {
  const double r2 = (q - q_prime).squaredNorm();
  return hp.signal_variance * std::exp(-0.5 * r2 / (hp.length_scale * hp.length_scale));
}

}  // namespace stiffid
