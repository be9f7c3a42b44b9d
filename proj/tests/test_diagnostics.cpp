#include <doctest.h>

#include <cmath>
#include <sstream>

#include "exbias/diagnostics.hpp"
#include "exbias/theory.hpp"

using namespace exbias;

namespace {

SamplerConfig ddpm(int grid_steps, std::uint64_t seed) {
  SamplerConfig c;
  c.grid = respace(default_linear_schedule(1000), grid_steps);
  c.seed = seed;
  return c;
}

}  // namespace

TEST_SUITE("diagnostics") {
  TEST_CASE("one-dimensional Frechet gap") {
    CHECK(frechet_gap_1d(0.7, 0.7) == 0.0);
    CHECK(frechet_gap_1d(4.0, 1.0) == 1.0);
    CHECK_THROWS(frechet_gap_1d(-0.1, 1.0));
    CHECK_THROWS(frechet_gap_1d(1.0, -0.1));
  }

  TEST_CASE("Gaussian Frechet distance") {
    const Mat cov = (Mat(2, 2) << 2.0, 0.4, 0.4, 1.0).finished();
    const Vec m = (Vec(2) << 1.0, -1.0).finished();
    CHECK(std::abs(frechet_gaussian(m, cov, m, cov)) < 1e-12);
    CHECK(frechet_gaussian(Vec::Zero(2), cov, (Vec(2) << 3.0, 4.0).finished(), cov) == doctest::Approx(25.0));
    const double one_d =
        frechet_gaussian(Vec::Constant(1, 0.5), Mat::Constant(1, 1, 4.0), Vec::Constant(1, -0.5), Mat::Constant(1, 1, 1.0));
    CHECK(one_d == doctest::Approx(1.0 + frechet_gap_1d(4.0, 1.0)));
    const Mat bad = (Mat(2, 2) << 1.0, 2.0, 2.0, 1.0).finished();
    CHECK_THROWS(frechet_gaussian(m, bad, m, cov));
    CHECK_THROWS(frechet_gaussian(m, cov, Vec::Zero(3), Mat::Identity(3, 3)));
  }

  TEST_CASE("PSD square root") {
    const Mat a = (Mat(3, 3) << 4.0, 1.0, 0.0, 1.0, 3.0, 0.5, 0.0, 0.5, 2.0).finished();
    const Mat r = psd_sqrt(a);
    CHECK((r * r - a).norm() < 1e-12);
    CHECK((r - r.transpose()).norm() < 1e-14);
    CHECK_THROWS(psd_sqrt((Mat(2, 2) << 1.0, 0.0, 0.0, -1.0).finished()));
  }

  TEST_CASE("too few chains are rejected") {
    NoisyOracleDenoiser d(1, ErrorProfile::constant(0.1));
    GaussianSampler data(GaussianDataSpec::unit(1));
    CHECK_THROWS_AS(measure_delta_t(d, ddpm(10, 1), data, 999), std::invalid_argument);
    CHECK_THROWS_AS(measure_single_step_error(d, ddpm(10, 1), data, 10), std::invalid_argument);
  }

  TEST_CASE("delta equals the Frechet gap of the measured variance") {
    NoisyOracleDenoiser d(1, ErrorProfile::constant(0.1));
    GaussianSampler data(GaussianDataSpec::unit(1));
    const BiasReport r = measure_delta_t(d, ddpm(20, 4), data, 4000);
    for (std::size_t i = 0; i < r.rows(); ++i) {
      CHECK(r.delta[i] == frechet_gap_1d(r.measured_var[i], r.train_var[i]));
      CHECK(r.multi_err[i] == r.measured_var[i] - r.train_var[i]);
      CHECK(r.delta[i] >= 0.0);
    }
    CHECK(r.n[1] == 4000);
    CHECK(r.train_var[20] == doctest::Approx(1.0 - default_linear_schedule(1000).alpha_bar(1000)));
  }

  TEST_CASE("the forward-process start has the training variance") {
    NoisyOracleDenoiser d(2, ErrorProfile::constant(0.1));
    GaussianSampler data(GaussianDataSpec::unit(2));
    const BiasReport r = measure_delta_t(d, ddpm(20, 8), data, 20000);
    CHECK(std::abs(r.multi_err[20]) <= 3 * r.measured_var_se[20]);
  }

  TEST_CASE("zero-error first step reproduces the training variance") {
    NoisyOracleDenoiser d(1, ErrorProfile::constant(0.0));
    GaussianSampler data(GaussianDataSpec::unit(1));
    const BiasReport r = measure_single_step_error(d, ddpm(20, 2), data, 20000);
    const std::size_t row = r.row(19);
    CHECK(std::abs(r.single_err[row]) <= 3 * r.measured_var_se[row]);
    CHECK(r.delta[row] <= std::pow(3 * r.measured_var_se[row], 2) / r.train_var[row] + 1e-12);
  }

  TEST_CASE("exact-denoiser multi-step error matches the closed-form chain") {
    const auto spec = GaussianDataSpec::diagonal(Vec::Constant(2, 0.5), (Vec(2) << 2.0, 0.5).finished());
    AnalyticDenoiser d(spec);
    GaussianSampler data(spec);
    const SamplerConfig c = ddpm(20, 6);
    const BiasReport r = measure_multi_step_error(d, c, data, 20000);
    const ChainVariance exact = gaussian_chain_var(spec, c, LinearPredictor::analytic());
    for (int t = 0; t <= 20; ++t) {
      const std::size_t i = r.row(t);
      CHECK(std::abs(r.multi_err[i] - exact.residual[i].extra_term) <= 4 * r.measured_var_se[i]);
    }
  }

  TEST_CASE("exact-denoiser norm curves agree at the start") {
    const auto spec = GaussianDataSpec::unit(2);
    AnalyticDenoiser d(spec);
    GaussianSampler data(spec);
    const BiasReport r = measure_eps_norms(d, ddpm(20, 3), data, 20000);
    const std::size_t top = r.row(20);
    const double se = std::hypot(r.eps_norm_train_se[top], r.eps_norm_sample_se[top]);
    CHECK(std::abs(r.eps_norm_train[top] - r.eps_norm_sample[top]) <= 3 * se);
    CHECK(std::isnan(r.norm_ratio[0]));
  }

  TEST_CASE("bias CSV columns") {
    BiasReport r(respace(default_linear_schedule(100), 4));
    std::ostringstream out;
    write_bias_csv(out, r);
    const std::string text = out.str();
    CHECK(text.rfind("t,train_var,measured_var,delta,single_err,multi_err,eps_norm_train,eps_norm_sample,norm_ratio,n,", 0) ==
          0);
    CHECK(std::count(text.begin(), text.end(), '\n') == 6);
  }
}
