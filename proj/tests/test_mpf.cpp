#include "oracles.hpp"

#include "stiffid/oscillator.hpp"
#include "stiffid/particle_filter.hpp"

#include <doctest.h>

#include <cmath>
#include <sstream>

using namespace stiffid;

namespace {

// Oscillator whose stiffness enters the transition, pose = position.
std::shared_ptr<LinearGaussianModel> lti_model() {
  return std::make_shared<LinearGaussianModel>(oracle::lti_matrices());
}

GpSetup small_gp() {
  GpSetup gp;
  gp.basis = std::make_shared<LaplacianBasis>(1, 8, DomainBox(Vector::Constant(1, 1.0)));
  gp.scaler = InputScaler::identity(1);
  gp.hyperparams = {4.0, 0.5};
  return gp;
}

FilterConfig small_config(int n = 64) {
  FilterConfig fc;
  fc.particle_count = n;
  fc.process_noise_cov = Matrix::Identity(2, 2) * 1e-3;
  fc.measurement_noise_cov = Matrix::Constant(1, 1, 0.05);
  fc.rng_seed = 3;
  return fc;
}

InitialStateSampler start_at(const Vector& x0) {
  return [x0](CounterRng&) { return x0; };
}

struct Run {
  std::vector<StepRecord> records;
};

Run run(MarginalizedParticleFilter& pf, const oracle::LtiData& d, int steps) {
  Run r;
  for (int t = 1; t <= steps; ++t)
    r.records.push_back(pf.step(d.u.row(t - 1).transpose(), d.u.row(t).transpose(),
                                d.y.row(t).transpose()));
  return r;
}

oracle::LtiData lti_data(int steps = 40) {
  const auto model = lti_model();
  return oracle::simulate_lti(model->transition_matrix(4.0), oracle::lti_matrices().b,
                              model->output_matrix(4.0), Matrix::Identity(2, 2) * 1e-3,
                              Matrix::Constant(1, 1, 0.05), Eigen::Vector2d(0.2, 0.0), steps, 17);
}

void check_same(const Run& a, const Run& b) {
  REQUIRE(a.records.size() == b.records.size());
  for (std::size_t t = 0; t < a.records.size(); ++t) {
    CHECK(a.records[t].state_mean == b.records[t].state_mean);
    CHECK(a.records[t].stiffness_mean == b.records[t].stiffness_mean);
    CHECK(a.records[t].ess == b.records[t].ess);
  }
}

Particle particle_at(double position, double weight, double k = 0.0) {
  Particle p;
  p.state = Eigen::Vector2d(position, 0.0);
  p.stiffness = k;
  p.weight = weight;
  return p;
}

}  // namespace

TEST_CASE("initial particle set") {
  MarginalizedParticleFilter pf(lti_model(), small_config(50), small_gp(),
                                start_at(Eigen::Vector2d(0.2, 0.0)));
  for (const Particle& p : pf.particles()) {
    CHECK(p.weight == doctest::Approx(1.0 / 50.0).epsilon(1e-15));
    CHECK(p.stats.r2() == 1.0);
  }
  CHECK(pf.snapshot().ess == doctest::Approx(50.0).epsilon(1e-12));
  CHECK(pf.step_index() == 0);
}

TEST_CASE("config validation") {
  const auto model = lti_model();
  auto bad = [&](auto edit) {
    FilterConfig fc = small_config();
    edit(fc);
    CHECK_THROWS_AS(fc.validate(*model), ConfigError);
  };
  bad([](FilterConfig& f) { f.particle_count = 0; });
  bad([](FilterConfig& f) { f.forgetting_multiplier = 0.0; });
  bad([](FilterConfig& f) { f.forgetting_multiplier = 1.5; });
  bad([](FilterConfig& f) { f.hyperparam_walk_var = Vector::Constant(2, -1.0); });
  bad([](FilterConfig& f) { f.ess_resample_threshold = 0.0; });
  bad([](FilterConfig& f) { f.workers = 0; });
  bad([](FilterConfig& f) { f.process_noise_cov = Matrix::Identity(3, 3); });
  CHECK_NOTHROW(small_config().validate(*model));
}

TEST_CASE("determinism and worker invariance") {
  const oracle::LtiData d = lti_data();
  auto make = [&](std::uint64_t seed, int workers) {
    FilterConfig fc = small_config();
    fc.rng_seed = seed;
    fc.workers = workers;
    fc.hyperparam_learning = true;
    fc.hyperparam_walk_var = Vector::Constant(2, 0.05);
    return MarginalizedParticleFilter(lti_model(), fc, small_gp(),
                                      start_at(Eigen::Vector2d(0.2, 0.0)));
  };
  auto a = make(3, 1);
  auto b = make(3, 1);
  auto c = make(3, 3);
  auto other = make(4, 1);
  const Run ra = run(a, d, 30);
  check_same(ra, run(b, d, 30));
  check_same(ra, run(c, d, 30));
  const Run ro = run(other, d, 30);
  CHECK(ro.records.back().stiffness_mean != ra.records.back().stiffness_mean);
}

TEST_CASE("weights stay normalized") {
  const oracle::LtiData d = lti_data();
  FilterConfig fc = small_config();
  fc.ess_resample_threshold = 0.5;
  fc.resampling = ResamplingScheme::kSystematic;
  MarginalizedParticleFilter pf(lti_model(), fc, small_gp(), start_at(Eigen::Vector2d(0.2, 0.0)));
  for (int t = 1; t <= 30; ++t) {
    const StepRecord r = pf.step(d.u.row(t - 1).transpose(), d.u.row(t).transpose(),
                                 d.y.row(t).transpose());
    double sum = 0.0;
    for (const Particle& p : pf.particles()) {
      CHECK(p.weight >= 0.0);
      sum += p.weight;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.ess >= 1.0);
    CHECK(r.ess <= 64.0 + 1e-9);
    CHECK(r.step == t);
  }
}

TEST_CASE("first-stage weights by hand") {
  const auto model = lti_model();
  const Gaussian noise(Matrix::Identity(1, 1));
  std::vector<Particle> ps{particle_at(0.0, 1.0 / 3), particle_at(0.0, 1.0 / 3),
                           particle_at(0.0, 1.0 / 3)};
  const std::vector<Vector> aux{Eigen::Vector2d(0.0, 0.0), Eigen::Vector2d(1.0, 0.0),
                                Eigen::Vector2d(2.0, 0.0)};
  const Vector w = first_stage_weights(ps, aux, Vector::Zero(1), Vector::Zero(1), *model, noise);
  const Eigen::Vector3d raw(1.0, std::exp(-0.5), std::exp(-2.0));
  CHECK((w - raw / raw.sum()).cwiseAbs().maxCoeff() <= 1e-15);

  ps[0].weight = 0.0;
  const Vector w0 = first_stage_weights(ps, aux, Vector::Zero(1), Vector::Zero(1), *model, noise);
  CHECK(w0[0] == 0.0);
  CHECK(w0[1] == doctest::Approx(std::exp(-0.5) / (std::exp(-0.5) + std::exp(-2.0))));
}

TEST_CASE("second-stage weights") {
  const auto model = lti_model();
  const Gaussian noise(Matrix::Identity(1, 1));
  const std::vector<Vector> aux{Eigen::Vector2d(0.0, 0.0), Eigen::Vector2d(1.0, 0.0)};
  const std::vector<double> ks{0.0, 0.0};
  // Children sitting on their ancestor's look-ahead have uniform weights.
  std::vector<Particle> same{particle_at(1.0, 0.5), particle_at(1.0, 0.5), particle_at(0.0, 0.5)};
  const Vector u = second_stage_weights(same, {1, 1, 0}, aux, ks, Vector::Zero(1),
                                        Vector::Zero(1), *model, noise);
  CHECK((u.array() - 1.0 / 3.0).abs().maxCoeff() <= 1e-15);

  // One child at 2 from ancestor 1: ratio exp(-2) / exp(-0.5).
  std::vector<Particle> kids{particle_at(2.0, 0.5), particle_at(1.0, 0.5)};
  const Vector v = second_stage_weights(kids, {1, 1}, aux, ks, Vector::Zero(1), Vector::Zero(1),
                                        *model, noise);
  const double r = std::exp(-1.5);
  CHECK(v[0] == doctest::Approx(r / (1.0 + r)).epsilon(1e-14));
}

TEST_CASE("log-weight normalization") {
  const Vector w = normalize_log_weights(Eigen::Vector3d(-1000.0, -1000.0 + std::log(3.0), NAN));
  CHECK(w[0] == doctest::Approx(0.25));
  CHECK(w[1] == doctest::Approx(0.75));
  CHECK(w[2] == 0.0);
  CHECK(effective_sample_size(Eigen::Vector2d(0.5, 0.5)) == doctest::Approx(2.0));

  try {
    normalize_log_weights(Vector::Constant(4, -INFINITY), 12);
    FAIL("expected DegeneracyError");
  } catch (const DegeneracyError& e) {
    CHECK(e.step() == 12);
    CHECK(std::string(e.what()).find("step 12") != std::string::npos);
  }
}

TEST_CASE("resampling") {
  const Eigen::Vector3d w(0.2, 0.3, 0.5);
  CounterRng rng(1, Stream::kTest, 0, 0);
  const int n = 100000;
  Eigen::Vector3d counts = Eigen::Vector3d::Zero();
  for (int rep = 0; rep < 10; ++rep) {
    Vector big(n / 10 * 3);
    for (Eigen::Index i = 0; i < big.size(); ++i) big[i] = w[i % 3];
    big /= big.sum();
    for (std::size_t a : resample_multinomial(big, rng)) counts[static_cast<Eigen::Index>(a % 3)] += 1.0;
  }
  const double total = counts.sum();
  for (int j = 0; j < 3; ++j) {
    const double se = std::sqrt(total * w[j] * (1.0 - w[j]));
    CHECK(std::abs(counts[j] - total * w[j]) <= 4.0 * se);
  }

  Vector sys_w(4);
  sys_w << 0.1, 0.4, 0.25, 0.25;
  const auto sys = resample_systematic(sys_w, rng);
  Vector c = Vector::Zero(4);
  for (std::size_t a : sys) c[static_cast<Eigen::Index>(a)] += 1.0;
  for (int j = 0; j < 4; ++j) {
    CHECK(c[j] >= std::floor(4.0 * sys_w[j]));
    CHECK(c[j] <= std::ceil(4.0 * sys_w[j]));
  }
  const auto degenerate = resample_multinomial(Eigen::Vector3d(0.0, 1.0, 0.0), rng);
  for (std::size_t a : degenerate) CHECK(a == 1);
}

TEST_CASE("hyperparameter walk") {
  const GpSetup gp = small_gp();
  Particle p;
  p.hyperparams = gp.hyperparams;
  p.stats = NigStatistics(gp.prior_for(gp.hyperparams));
  p.stats.measurement_update(Vector::Ones(8), 2.0);
  const Particle before = p;
  CounterRng rng(2, Stream::kTest, 0, 0);
  hyperparam_walk(p, Vector::Zero(2), gp, rng);
  CHECK(p.hyperparams == before.hyperparams);
  CHECK(p.stats.r1() == before.stats.r1());

  hyperparam_walk(p, Vector::Constant(2, 0.1), gp, rng);
  CHECK(p.hyperparams.signal_variance != before.hyperparams.signal_variance);
  CHECK(p.hyperparams.length_scale > 0.0);
  CHECK(p.stats.data_r1() == before.stats.data_r1());
  CHECK((p.stats.prior().precision.diagonal() - prior_precisions(*gp.basis, p.hyperparams))
            .cwiseAbs()
            .maxCoeff() <= 1e-9 * p.stats.prior().precision.diagonal().cwiseAbs().maxCoeff());

  // Log-space walk: the log of the signal variance moves with the configured spread.
  double sum = 0.0;
  double sum_sq = 0.0;
  const int reps = 4000;
  for (int i = 0; i < reps; ++i) {
    Particle q = before;
    CounterRng r(5, Stream::kTest, 1, static_cast<std::uint64_t>(i));
    hyperparam_walk(q, Eigen::Vector2d(0.04, 0.0), gp, r);
    const double z = std::log(q.hyperparams.signal_variance / before.hyperparams.signal_variance);
    sum += z;
    sum_sq += z * z;
    CHECK(q.hyperparams.length_scale == before.hyperparams.length_scale);
  }
  CHECK(std::abs(sum / reps) <= 4.0 * 0.2 / std::sqrt(reps));
  CHECK(sum_sq / reps == doctest::Approx(0.04).epsilon(0.1));
}

TEST_CASE("estimate matches a naive weighted sum") {
  std::vector<Particle> ps{particle_at(1.0, 0.2, 3.0), particle_at(-1.0, 0.3, 5.0),
                           particle_at(4.0, 0.5, -1.0)};
  ps[1].state[1] = 2.0;
  const Estimate e = estimate(ps);
  CHECK(e.state_mean[0] == doctest::Approx(0.2 - 0.3 + 2.0));
  CHECK(e.state_mean[1] == doctest::Approx(0.6));
  CHECK(e.stiffness_mean == doctest::Approx(0.6 + 1.5 - 0.5));
  CHECK(e.ess == doctest::Approx(1.0 / (0.04 + 0.09 + 0.25)));
}

TEST_CASE("checkpoint round trip") {
  const oracle::LtiData d = lti_data();
  FilterConfig fc = small_config();
  fc.hyperparam_learning = true;
  fc.hyperparam_walk_var = Vector::Constant(2, 0.05);
  MarginalizedParticleFilter a(lti_model(), fc, small_gp(), start_at(Eigen::Vector2d(0.2, 0.0)));
  run(a, d, 10);
  std::stringstream buf;
  a.save_checkpoint(buf);

  MarginalizedParticleFilter b(lti_model(), fc, small_gp(), start_at(Eigen::Vector2d(0.0, 0.0)));
  b.load_checkpoint(buf);
  CHECK(b.step_index() == 10);
  CHECK(b.mean_coefficients() == a.mean_coefficients());
  oracle::LtiData tail = d;
  tail.u = d.u.bottomRows(d.u.rows() - 10);
  tail.y = d.y.bottomRows(d.y.rows() - 10);
  check_same(run(a, tail, 10), run(b, tail, 10));

  std::stringstream junk("not a checkpoint");
  CHECK_THROWS_AS(b.load_checkpoint(junk), IoError);
}

TEST_CASE("fixed stiffness bypasses the GP") {
  const oracle::LtiData d = lti_data();
  FilterConfig fc = small_config();
  fc.fixed_stiffness = 4.0;
  MarginalizedParticleFilter pf(lti_model(), fc, GpSetup{}, start_at(Eigen::Vector2d(0.2, 0.0)));
  const Run r = run(pf, d, 10);
  for (const Particle& p : pf.particles()) CHECK(p.stiffness == 4.0);
  CHECK_FALSE(r.records.back().best_posterior.has_value());
}

TEST_CASE("learned stiffness") {
  const oracle::LtiData d = lti_data();
  MarginalizedParticleFilter pf(lti_model(), small_config(), small_gp(),
                                start_at(Eigen::Vector2d(0.2, 0.0)));
  run(pf, d, 20);
  const std::vector<Vector> poses{Vector::Constant(1, 0.1), Vector::Constant(1, -0.3)};
  const auto batch = pf.learned_stiffness(poses);
  const LearnedGp gp = pf.learned_gp();
  for (std::size_t i = 0; i < poses.size(); ++i) {
    const auto one = pf.learned_stiffness(poses[i]);
    CHECK(batch[i].first == doctest::Approx(one.first).epsilon(1e-12));
    CHECK(batch[i].second == doctest::Approx(one.second).epsilon(1e-12));
    CHECK(gp.mean(poses[i]) == doctest::Approx(one.first).epsilon(1e-9));
    CHECK(one.second >= 0.0);
  }
}

TEST_CASE("two particles are exchangeable") {
  // With N = 2 and identical initial states, swapping the particle order of a
  // checkpoint leaves the weighted estimate unchanged.
  const oracle::LtiData d = lti_data();
  MarginalizedParticleFilter pf(lti_model(), small_config(2), small_gp(),
                                start_at(Eigen::Vector2d(0.2, 0.0)));
  run(pf, d, 5);
  const StepRecord s = pf.snapshot();
  std::vector<Particle> swapped{pf.particles()[1], pf.particles()[0]};
  const Estimate e = estimate(swapped);
  CHECK((e.state_mean - s.state_mean).norm() <= 1e-15);
  CHECK(e.stiffness_mean == doctest::Approx(s.stiffness_mean).epsilon(1e-15));
}

TEST_CASE("wrong dimensions are rejected") {
  MarginalizedParticleFilter pf(lti_model(), small_config(), small_gp(),
                                start_at(Eigen::Vector2d(0.2, 0.0)));
  CHECK_THROWS_AS(pf.step(Vector::Zero(2), Vector::Zero(1), Vector::Zero(1)), InvalidInputError);
  CHECK_THROWS_AS(pf.step(Vector::Zero(1), Vector::Zero(1), Vector::Zero(3)), InvalidInputError);
}
