#include <doctest.h>

#include <cmath>

#include "exbias/data.hpp"
#include "exbias/denoiser.hpp"
#include "exbias/stats.hpp"

using namespace exbias;

TEST_SUITE("denoiser") {
  const NoiseSchedule kSchedule = default_linear_schedule(1000);

  TEST_CASE("unit Gaussian posterior mean") {
    const auto spec = GaussianDataSpec::unit(3);
    const Vec x = (Vec(3) << 0.3, -1.2, 2.0).finished();
    for (int t : {1, 250, 999}) {
      const EpsPrediction p = analytic_eps(spec, kSchedule, x, t);
      const double ab = kSchedule.alpha_bar(t);
      CHECK((p.x0_hat - std::sqrt(ab) * x).norm() < 1e-12);
      CHECK((p.eps - std::sqrt(1 - ab) * x).norm() < 1e-12);
    }
  }

  TEST_CASE("a centred query returns the data mean") {
    GaussianDataSpec spec{(Vec(2) << 1.0, -2.0).finished(), (Mat(2, 2) << 2.0, 0.5, 0.5, 1.0).finished()};
    AnalyticDenoiser d(spec);
    const double ab = kSchedule.alpha_bar(400);
    CHECK((d.posterior_mean(std::sqrt(ab) * spec.mean, ab) - spec.mean).norm() < 1e-12);
  }

  TEST_CASE("diagonal posterior mean by hand") {
    AnalyticDenoiser d(GaussianDataSpec::diagonal(Vec::Zero(2), (Vec(2) << 4.0, 1.0).finished()));
    const Vec x0 = d.posterior_mean(Vec::Ones(2), 0.5);
    CHECK(x0[0] == doctest::Approx(std::sqrt(0.5) * 4.0 / 2.5).epsilon(1e-14));
    CHECK(x0[1] == doctest::Approx(std::sqrt(0.5) * 1.0 / 1.0).epsilon(1e-14));
  }

  TEST_CASE("posterior Jacobian matches central differences") {
    GaussianDataSpec spec{(Vec(3) << 0.5, 0.0, -1.0).finished(),
                          (Mat(3, 3) << 2.0, 0.3, 0.1, 0.3, 1.0, -0.2, 0.1, -0.2, 0.5).finished()};
    AnalyticDenoiser d(spec);
    const double ab = 0.37;
    const Vec x = (Vec(3) << 0.2, -0.4, 1.1).finished();
    const Mat J = d.posterior_jacobian(ab);
    const double h = 1e-5;
    for (int j = 0; j < 3; ++j) {
      Vec e = Vec::Zero(3);
      e[j] = h;
      const Vec fd = (d.posterior_mean(x + e, ab) - d.posterior_mean(x - e, ab)) / (2 * h);
      for (int i = 0; i < 3; ++i) CHECK(fd[i] == doctest::Approx(J(i, j)).epsilon(1e-5));
    }
  }

  TEST_CASE("eps / x0 inversion round trip") {
    Rng rng(11);
    for (int k = 0; k < 20; ++k) {
      const Vec x = rng.normal_vec(4), eps = rng.normal_vec(4);
      const double ab = 0.05 + 0.9 * rng.uniform();
      const EpsPrediction a = EpsPrediction::from_eps(x, ab, eps);
      const EpsPrediction b = EpsPrediction::from_x0(x, ab, a.x0_hat);
      CHECK((b.eps - eps).norm() < 1e-10);
    }
  }

  TEST_CASE("zero-error oracle returns the true x0 and eps") {
    Rng rng(3);
    const Vec x0 = rng.normal_vec(2), eps = rng.normal_vec(2);
    const int t = 300;
    const double ab = kSchedule.alpha_bar(t);
    const Vec x = std::sqrt(ab) * x0 + std::sqrt(1 - ab) * eps;
    const EpsPrediction p = noisy_oracle_eps(x0, ErrorProfile::constant(0.0), rng, kSchedule, x, t);
    CHECK(p.x0_hat == x0);
    CHECK((p.eps - eps).norm() < 1e-12);
  }

  TEST_CASE("oracle error variance and independence") {
    NoisyOracleDenoiser d(1, ErrorProfile::constant(0.1));
    const Vec x0 = Vec::Constant(1, 0.4), x = Vec::Constant(1, 0.1);
    Rng rng(stream_key(5, StreamPurpose::kOracle, 0));
    PredictContext ctx{&x0, &rng};
    const NoiseLevel level = level_at(kSchedule, 500);
    const int n = 100000;
    RunningStats err;
    std::vector<double> z(n);
    for (int i = 0; i < n; ++i) {
      z[i] = d.predict(x, level, ctx).x0_hat[0] - x0[0];
      err.add(z[i]);
    }
    CHECK(std::abs(err.variance() - 0.01) <= 3 * err.variance_std_error());
    double num = 0, den = 0;
    for (int i = 0; i < n; ++i) {
      den += (z[i] - err.mean()) * (z[i] - err.mean());
      if (i > 0) num += (z[i] - err.mean()) * (z[i - 1] - err.mean());
    }
    CHECK(std::abs(num / den) < 0.01);
  }

  TEST_CASE("oracle needs an anchor") {
    NoisyOracleDenoiser d(1, ErrorProfile::constant(0.1));
    Rng rng(1);
    PredictContext ctx{nullptr, &rng};
    CHECK_THROWS(d.predict(Vec::Zero(1), level_at(kSchedule, 5), ctx));
  }

  TEST_CASE("proportional profile") {
    const ErrorProfile p = ErrorProfile::proportional(0.2);
    CHECK(p.at(0.75) == doctest::Approx(0.1));
    CHECK(ErrorProfile::constant(0.3).at(0.1) == 0.3);
  }

  TEST_CASE("analytic predictor rejects bad queries") {
    const auto spec = GaussianDataSpec::unit(2);
    CHECK_THROWS(analytic_eps(spec, kSchedule, Vec::Zero(2), 0));
    CHECK_THROWS(analytic_eps(spec, kSchedule, Vec::Zero(2), 1001));
    CHECK_THROWS(analytic_eps(spec, kSchedule, Vec::Zero(3), 10));
  }

  TEST_CASE("data specs are validated") {
    GaussianDataSpec bad{Vec::Zero(2), (Mat(2, 2) << 1.0, 2.0, 2.0, 1.0).finished()};
    CHECK_THROWS(bad.validate());
    GaussianDataSpec asym{Vec::Zero(2), (Mat(2, 2) << 1.0, 0.1, 0.0, 1.0).finished()};
    CHECK_THROWS(asym.validate());
  }

  TEST_CASE("samplers reproduce their stated moments") {
    const int n = 200000;
    MixtureSampler mix({(Vec(2) << -1.5, 0.0).finished(), (Vec(2) << 1.5, 0.0).finished()}, 0.5);
    TwoMoonsSampler moons(0.1);
    for (const DataSampler* d : {static_cast<const DataSampler*>(&mix), static_cast<const DataSampler*>(&moons)}) {
      Mat rows(n, 2);
      Rng rng(42);
      for (int i = 0; i < n; ++i) rows.row(i) = d->sample(rng).transpose();
      Vec mean;
      Mat cov;
      sample_moments(rows, mean, cov);
      CHECK((mean - d->mean()).norm() < 0.01);
      CHECK((cov - d->covariance()).norm() < 0.02);
    }
  }
}
