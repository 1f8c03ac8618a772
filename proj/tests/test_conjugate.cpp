#include "oracles.hpp"

#include "stiffid/conjugate.hpp"
#include "stiffid/random.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

using namespace stiffid;

namespace {

Vector unit(int m, int i) {
  Vector e = Vector::Zero(m);
  e[i] = 1.0;
  return e;
}

Vector randn(int m, CounterRng& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  Vector v(m);
  for (auto& x : v) x = n01(rng);
  return v;
}

}  // namespace

TEST_CASE("prior statistics") {
  const NigStatistics s = prior_statistics(Matrix::Identity(3, 3), 4.0, 1.0);
  CHECK(s.s1().norm() == 0.0);
  CHECK((s.r1() - Matrix::Identity(3, 3)).norm() == 0.0);
  CHECK(s.s2() == 4.0);
  CHECK(s.r2() == 1.0);

  const NigStatistics one = prior_statistics(Matrix::Constant(1, 1, 2.0), 4.0, 1.0);
  CHECK(one.r1()(0, 0) == doctest::Approx(0.5).epsilon(1e-15));

  Matrix v(3, 3);
  v << 2.0, 0.3, 0.1, 0.3, 1.0, -0.2, 0.1, -0.2, 0.7;
  const NigParams p = prior_statistics(v, 2.5, 3.0).posterior();
  CHECK(p.mean.norm() <= 1e-10);
  CHECK((p.covariance_shape - v).cwiseAbs().maxCoeff() <= 1e-10);
  CHECK(p.scale == doctest::Approx(2.5).epsilon(1e-10));
  CHECK(p.dof == 3.0);

  CHECK_THROWS_AS(prior_statistics(Matrix::Zero(2, 2), 4.0, 1.0), NumericalError);
  CHECK_THROWS_AS(prior_statistics(Matrix::Identity(2, 2), 0.0, 1.0), ConfigError);
  CHECK_THROWS_AS(prior_statistics(Matrix::Identity(2, 2), 1.0, -1.0), ConfigError);
  CHECK_THROWS_AS(prior_statistics_diagonal(Eigen::Vector2d(1.0, 0.0), 1.0, 1.0), NumericalError);
  CHECK_THROWS_AS(make_prior_precision(Eigen::Vector2d(1.0, INFINITY), 1.0, 1.0), NumericalError);
}

TEST_CASE("measurement update arithmetic") {
  NigStatistics s = prior_statistics(Matrix::Identity(3, 3), 4.0, 1.0);
  s.measurement_update(unit(3, 0), 2.0);
  CHECK(s.s1() == Vector(2.0 * unit(3, 0)));
  CHECK(s.s2() == 8.0);
  CHECK((s.r1() - (Matrix::Identity(3, 3) + unit(3, 0) * unit(3, 0).transpose())).norm() == 0.0);
  CHECK(s.r2() == 2.0);

  const Vector s1 = s.s1();
  const double s2 = s.s2();
  s.measurement_update(Eigen::Vector3d(0.5, -1.0, 2.0), 0.0);
  CHECK(s.s1() == s1);
  CHECK(s.s2() == s2);
  CHECK(s.r2() == 3.0);
  CHECK(s.r1()(2, 2) == 5.0);
}

TEST_CASE("recursive posterior equals batch regression") {
  CounterRng rng(11, Stream::kTest, 0, 0);
  const int m = 6;
  const int n = 150;
  Vector var(m);
  for (int i = 0; i < m; ++i) var[i] = 0.2 + 0.3 * i;
  NigStatistics s = prior_statistics_diagonal(var, 4.0, 1.0);
  Matrix phi(n, m);
  Vector k(n);
  for (int r = 0; r < n; ++r) {
    phi.row(r) = randn(m, rng).transpose();
    k[r] = 1.5 * phi(r, 0) - phi(r, 3) + 0.2 * randn(1, rng)[0];
    s.measurement_update(phi.row(r).transpose(), k[r]);
  }
  const NigParams p = s.posterior();
  const oracle::BatchNig b = oracle::batch_regression(phi, k, Matrix(var.asDiagonal()), 4.0, 1.0);
  CHECK((p.mean - b.mean).norm() <= 1e-8 * b.mean.norm());
  CHECK((p.covariance_shape - b.cov_shape).norm() <= 1e-8 * b.cov_shape.norm());
  CHECK(p.scale == doctest::Approx(b.scale).epsilon(1e-8));
  CHECK(p.dof == b.dof);
}

TEST_CASE("posterior: diffuse prior and a scalar hand computation") {
  NigStatistics diffuse = prior_statistics(1e6 * Matrix::Identity(3, 3), 4.0, 1.0);
  diffuse.measurement_update(unit(3, 0), 3.0);
  CHECK((diffuse.posterior().mean - 3.0 * unit(3, 0)).norm() <= 1e-2);

  // V = [2], psi = 4, nu = 1; observations (phi, k) = (1, 3), (2, 1).
  NigStatistics s = prior_statistics(Matrix::Constant(1, 1, 2.0), 4.0, 1.0);
  s.measurement_update(Vector::Constant(1, 1.0), 3.0);
  s.measurement_update(Vector::Constant(1, 2.0), 1.0);
  const NigParams p = s.posterior();
  CHECK(p.mean[0] == doctest::Approx(5.0 / 5.5).epsilon(1e-14));
  CHECK(p.covariance_shape(0, 0) == doctest::Approx(1.0 / 5.5).epsilon(1e-14));
  CHECK(p.scale == doctest::Approx(14.0 - 25.0 / 5.5).epsilon(1e-14));
  CHECK(p.dof == 3.0);
}

TEST_CASE("posterior: non-positive scale is reported") {
  auto prior = make_prior_diagonal(Vector::Ones(1), 1e-3, 1.0);
  // s2 below s1^T r1^-1 s1.
  const NigStatistics bad = NigStatistics::restore(prior, Vector::Constant(1, 10.0), 1.0,
                                                   Matrix::Constant(1, 1, 1.0), 1.0);
  CHECK_THROWS_AS(bad.posterior(), DegeneracyError);
  const NigFactor f(bad);
  CHECK(f.psi_clamped());
  CHECK(f.scale() == NigFactor::kMinScale);
}

TEST_CASE("time update") {
  CounterRng rng(5, Stream::kTest, 0, 0);
  NigStatistics s = prior_statistics_diagonal(Eigen::Vector2d(1.0, 2.0), 4.0, 1.0);
  for (int i = 0; i < 5; ++i) s.measurement_update(randn(2, rng), randn(1, rng)[0]);
  const NigStatistics before = s;
  s.time_update(1.0);
  CHECK(s.s1() == before.s1());
  CHECK(s.data_r1() == before.data_r1());
  CHECK(s.data_s2() == before.data_s2());

  s.time_update(0.9);
  s.time_update(0.9);
  CHECK((s.s1() - 0.81 * before.s1()).norm() <= 1e-14);
  CHECK((s.data_r1() - 0.81 * before.data_r1()).norm() <= 1e-13);
  CHECK(s.data_s2() == doctest::Approx(0.81 * before.data_s2()).epsilon(1e-14));
  CHECK(s.data_r2() == doctest::Approx(0.81 * before.data_r2()).epsilon(1e-14));
  // Forgetting discounts data only; the prior part is untouched.
  CHECK((s.r1() - s.data_r1() - before.prior().precision).norm() <= 1e-14);
  CHECK(s.r2() - s.data_r2() == 1.0);

  CHECK_THROWS_AS(s.time_update(0.0), ConfigError);
  CHECK_THROWS_AS(s.time_update(1.1), ConfigError);
}

TEST_CASE("time update: r2 fixed point under constant data") {
  const double lambda = 0.95;
  NigStatistics s = prior_statistics(Matrix::Identity(1, 1), 4.0, 1.0);
  for (int t = 0; t < 2000; ++t) {
    s.time_update(lambda);
    s.measurement_update(Vector::Constant(1, 0.5), 1.0);
  }
  CHECK(s.r2() == doctest::Approx(1.0 / (1.0 - lambda) + 1.0).epsilon(1e-10));
}

TEST_CASE("grouping of updates does not matter without forgetting") {
  CounterRng rng(8, Stream::kTest, 0, 0);
  const int m = 4;
  std::vector<Vector> phis;
  std::vector<double> ks;
  for (int i = 0; i < 60; ++i) {
    phis.push_back(randn(m, rng));
    ks.push_back(randn(1, rng)[0] * 3.0);
  }
  NigStatistics a = prior_statistics_diagonal(Vector::Ones(m), 4.0, 1.0);
  NigStatistics b = a;
  for (std::size_t i = 0; i < phis.size(); ++i) {
    a.measurement_update(phis[i], ks[i]);
    if (i % 7 == 0) a.time_update(1.0);
  }
  for (std::size_t i = phis.size(); i-- > 0;) b.measurement_update(phis[i], ks[i]);
  const NigParams pa = a.posterior();
  const NigParams pb = b.posterior();
  CHECK((pa.mean - pb.mean).norm() <= 1e-8 * pa.mean.norm());
  CHECK(pa.scale == doctest::Approx(pb.scale).epsilon(1e-8));
  CHECK(pa.dof == pb.dof);
}

TEST_CASE("r1 stays SPD and psi positive on hierarchical data") {
  CounterRng rng(21, Stream::kTest, 0, 0);
  std::normal_distribution<double> n01(0.0, 1.0);
  const int m = 5;
  for (int run = 0; run < 20; ++run) {
    const Vector var = Vector::Constant(m, 0.5 + run * 0.1);
    NigStatistics s = prior_statistics_diagonal(var, 4.0, 1.0);
    std::gamma_distribution<double> gamma(0.5, 2.0 / 4.0);
    const double sigma2 = 1.0 / gamma(rng);
    const Vector a = std::sqrt(sigma2) * var.cwiseSqrt().cwiseProduct(randn(m, rng));
    for (int t = 0; t < 50; ++t) {
      const Vector phi = randn(m, rng);
      s.measurement_update(phi, a.dot(phi) + std::sqrt(sigma2) * n01(rng));
      if (run % 2) s.time_update(0.97);
      Eigen::SelfAdjointEigenSolver<Matrix> eig(s.r1());
      CHECK(eig.eigenvalues().minCoeff() > 0.0);
      CHECK(s.posterior().scale > 0.0);
    }
  }
}

TEST_CASE("replacing the prior keeps the data") {
  CounterRng rng(2, Stream::kTest, 0, 0);
  NigStatistics s = prior_statistics_diagonal(Vector::Ones(3), 4.0, 1.0);
  for (int i = 0; i < 4; ++i) s.measurement_update(randn(3, rng), 1.0);
  const Matrix data = s.data_r1();
  s.replace_prior(make_prior_diagonal(Vector::Constant(3, 0.5), 4.0, 1.0));
  CHECK(s.data_r1() == data);
  CHECK((s.r1() - data - 2.0 * Matrix::Identity(3, 3)).norm() <= 1e-14);
  CHECK_THROWS_AS(s.replace_prior(make_prior_diagonal(Vector::Ones(2), 4.0, 1.0)), ConfigError);
}

TEST_CASE("Student-t predictive") {
  const NigStatistics s = prior_statistics(Matrix::Identity(3, 3), 4.0, 1.0);
  const StudentTParams t = predictive_student_t(s, unit(3, 0));
  CHECK(t.dof == 1.0);
  CHECK(t.location == 0.0);
  CHECK(t.squared_scale == doctest::Approx(8.0).epsilon(1e-15));

  // Zero feature vector: xi -> infinity, Lambda -> psi / rho.
  const StudentTParams z = predictive_student_t(s, Vector::Zero(3));
  CHECK(z.squared_scale == doctest::Approx(4.0).epsilon(1e-15));

  CounterRng rng(4, Stream::kTest, 0, 0);
  NigStatistics u = prior_statistics_diagonal(Eigen::Vector3d(1.0, 2.0, 0.5), 3.0, 2.0);
  for (int i = 0; i < 10; ++i) u.measurement_update(randn(3, rng), randn(1, rng)[0]);
  const Vector phi = randn(3, rng);
  const NigParams p = u.posterior();
  const double xi = 1.0 / phi.dot(p.covariance_shape * phi);
  const StudentTParams pt = predictive_student_t(u, phi);
  CHECK(pt.dof == p.dof);
  CHECK(pt.location == doctest::Approx(p.mean.dot(phi)).epsilon(1e-13));
  CHECK(pt.squared_scale == doctest::Approx((xi + 1.0) / (xi * p.dof) * p.scale).epsilon(1e-12));
  CHECK(gp_posterior_mean(u, phi) == pt.location);

  const StudentTParams ft = NigFactor(u).predictive(phi);
  CHECK(ft.location == doctest::Approx(pt.location).epsilon(1e-12));
  CHECK(ft.squared_scale == doctest::Approx(pt.squared_scale).epsilon(1e-12));
  CHECK(gp_posterior_mean(prior_statistics(Matrix::Identity(3, 3), 4.0, 1.0), phi) == 0.0);
}

TEST_CASE("Student-t scale shrinks with consistent data") {
  const int m = 3;
  const Eigen::Vector3d a(1.0, -2.0, 0.5);
  double at10 = 0.0;
  double at100 = 0.0;
  double at1000 = 0.0;
  for (int rep = 0; rep < 20; ++rep) {
    CounterRng rng(9, Stream::kTest, 0, static_cast<std::uint64_t>(rep));
    NigStatistics s = prior_statistics_diagonal(Vector::Constant(m, 10.0), 4.0, 1.0);
    const Vector probe = Eigen::Vector3d(0.3, 0.2, -0.1);
    for (int t = 1; t <= 1000; ++t) {
      const Vector phi = randn(m, rng);
      s.measurement_update(phi, a.dot(phi) + 0.1 * randn(1, rng)[0]);
      const double lam = predictive_student_t(s, probe).squared_scale;
      if (t == 10) at10 += lam;
      if (t == 100) at100 += lam;
      if (t == 1000) at1000 += lam;
    }
  }
  CHECK(at100 < at10);
  CHECK(at1000 < at100);
}

TEST_CASE("predictive location is linear in s1") {
  CounterRng rng(13, Stream::kTest, 0, 0);
  const int m = 4;
  auto prior = make_prior_diagonal(Vector::Ones(m), 50.0, 3.0);
  Matrix r1 = Matrix::Zero(m, m);
  for (int i = 0; i < 8; ++i) {
    const Vector v = randn(m, rng);
    r1 += v * v.transpose();
  }
  const Vector s1a = randn(m, rng);
  const Vector s1b = randn(m, rng);
  const Vector phi = randn(m, rng);
  auto loc = [&](const Vector& s1) {
    return predictive_student_t(NigStatistics::restore(prior, s1, 40.0, r1, 8.0), phi).location;
  };
  CHECK(loc(s1a + 2.0 * s1b) == doctest::Approx(loc(s1a) + 2.0 * loc(s1b)).epsilon(1e-12));
}

TEST_CASE("Student-t sampling") {
  CounterRng rng(1, Stream::kTest, 0, 0);
  CHECK(sample_student_t({3.0, 1.25, 0.0}, rng) == 1.25);

  // Cauchy: test the median only. SE of the median is 1 / (2 f(mu) sqrt(n)).
  const StudentTParams cauchy{1.0, -2.0, 9.0};
  const int n = 100000;
  std::vector<double> draws(n);
  for (auto& d : draws) d = sample_student_t(cauchy, rng);
  std::nth_element(draws.begin(), draws.begin() + n / 2, draws.end());
  const double density = 1.0 / (std::numbers::pi * 3.0);
  const double se = 1.0 / (2.0 * density * std::sqrt(static_cast<double>(n)));
  CHECK(std::abs(draws[n / 2] - cauchy.location) <= 3.0 * se);
}

TEST_CASE("variance of the predictive") {
  CHECK(StudentTParams{2.0, 0.0, 1.0}.variance() == INFINITY);
  CHECK(StudentTParams{6.0, 0.0, 2.0}.variance() == doctest::Approx(3.0).epsilon(1e-15));
}
