#include <doctest.h>

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "exbias/diagnostics.hpp"
#include "exbias/sampler.hpp"

using namespace exbias;

namespace {

class ConstantDenoiser final : public Denoiser {
 public:
  explicit ConstantDenoiser(Vec eps) : eps_(std::move(eps)) {}
  int dim() const override { return static_cast<int>(eps_.size()); }
  EpsPrediction predict(const Vec& x, const NoiseLevel& level, PredictContext&) const override {
    return EpsPrediction::from_eps(x, level.alpha_bar, eps_);
  }

 private:
  Vec eps_;
};

class FailingDenoiser final : public Denoiser {
 public:
  int dim() const override { return 1; }
  EpsPrediction predict(const Vec&, const NoiseLevel& level, PredictContext&) const override {
    if (level.t == 7) throw std::runtime_error("boom");
    return {Vec::Zero(1), Vec::Zero(1)};
  }
};

SamplerConfig config(SamplerKind kind, const RespacedSchedule& grid, std::uint64_t seed = 1) {
  SamplerConfig c;
  c.kind = kind;
  c.grid = grid;
  c.seed = seed;
  return c;
}

}  // namespace

TEST_SUITE("sampler") {
  const NoiseSchedule kSchedule = default_linear_schedule(1000);

  TEST_CASE("DDPM step with the true eps is the posterior mean") {
    Rng rng(4);
    const Vec x0 = rng.normal_vec(3), eps = rng.normal_vec(3);
    for (int t : {2, 100, 1000}) {
      const double ab = kSchedule.alpha_bar(t), ab_prev = kSchedule.alpha_bar(t - 1);
      const Vec x = std::sqrt(ab) * x0 + std::sqrt(1 - ab) * eps;
      const Vec out = ddpm_step(x, t, EpsPrediction::from_eps(x, ab, eps), kSchedule, Vec::Zero(3));
      const Vec mu = std::sqrt(ab_prev) * kSchedule.beta(t) / (1 - ab) * x0 +
                     std::sqrt(kSchedule.alpha(t)) * (1 - ab_prev) / (1 - ab) * x;
      CHECK((out - mu).norm() < 1e-12);
    }
    CHECK_THROWS(ddpm_step(Vec::Zero(1), 0, {Vec::Zero(1), Vec::Zero(1)}, kSchedule, Vec::Zero(1)));
  }

  TEST_CASE("the final DDPM step is deterministic") {
    const Vec x = Vec::Constant(2, 0.3);
    const EpsPrediction p = EpsPrediction::from_eps(x, kSchedule.alpha_bar(1), Vec::Constant(2, 0.1));
    CHECK(ddpm_step(x, 1, p, kSchedule, Vec::Zero(2)) == ddpm_step(x, 1, p, kSchedule, Vec::Constant(2, 5.0)));
  }

  TEST_CASE("DDIM with eta 0 and the true eps is exact") {
    Rng rng(8);
    const Vec x0 = rng.normal_vec(2), eps = rng.normal_vec(2);
    const int t = 600, t_prev = 350;
    const double ab = kSchedule.alpha_bar(t), ab_prev = kSchedule.alpha_bar(t_prev);
    const Vec x = std::sqrt(ab) * x0 + std::sqrt(1 - ab) * eps;
    const Vec out = ddim_step(x, t, t_prev, EpsPrediction::from_eps(x, ab, eps), 0.0, kSchedule, Vec());
    CHECK((out - (std::sqrt(ab_prev) * x0 + std::sqrt(1 - ab_prev) * eps)).norm() < 1e-12);
    CHECK_THROWS(ddim_step(x, t, t, EpsPrediction::from_eps(x, ab, eps), 0.0, kSchedule, Vec()));
    CHECK_THROWS_AS(ddim_step(x, t, t - 1, EpsPrediction::from_eps(x, ab, eps), 50.0, kSchedule, Vec::Zero(2)),
                    std::domain_error);
  }

  TEST_CASE("DDIM with eta 1 coincides with lower-bound DDPM") {
    Rng rng(12);
    for (int t : {2, 10, 500, 1000}) {
      const Vec x = rng.normal_vec(3), eps = rng.normal_vec(3), noise = rng.normal_vec(3);
      const EpsPrediction p = EpsPrediction::from_eps(x, kSchedule.alpha_bar(t), eps);
      const Vec a = ddim_step(x, t, t - 1, p, 1.0, kSchedule, noise);
      const Vec b = ddpm_step(x, t, p, kSchedule, noise, SamplingVariance::kLowerBound);
      CHECK((a - b).norm() < 1e-10);
      CHECK(ddim_sigma(kSchedule, t, t - 1, 1.0) == doctest::Approx(std::sqrt(kSchedule.posterior_var(t))));
    }
  }

  TEST_CASE("uniform scaling divides the eps norm by lambda") {
    Rng rng(2);
    const Vec x = rng.normal_vec(4);
    const double ab = 0.4;
    const EpsPrediction raw = EpsPrediction::from_eps(x, ab, rng.normal_vec(4));
    const EpsPrediction used = scale_prediction(raw, x, ab, 1.05);
    CHECK(used.eps.norm() == doctest::Approx(raw.eps.norm() / 1.05).epsilon(1e-14));
    CHECK((EpsPrediction::from_x0(x, ab, used.x0_hat).eps - used.eps).norm() < 1e-12);
    const EpsPrediction same = scale_prediction(raw, x, ab, 1.0);
    CHECK(same.eps == raw.eps);
    CHECK(same.x0_hat == raw.x0_hat);
  }

  TEST_CASE("Heun equals Euler for a constant eps field") {
    const RespacedSchedule grid = respace(kSchedule, 21);
    ConstantDenoiser d(Vec::Constant(2, 0.7));
    const Vec x = (Vec(2) << 0.2, -1.0).finished();
    PredictContext ctx;
    for (int t = 2; t <= 21; ++t) {
      const OdeStep e = euler_step(x, t, t - 1, d, grid, nullptr, ctx);
      const OdeStep h = heun_step(x, t, t - 1, d, grid, nullptr, ctx);
      CHECK(h.evals.size() == 2);
      CHECK((h.next - e.next).norm() < 1e-12);
    }
    CHECK(heun_step(x, 1, 0, d, grid, nullptr, ctx).evals.size() == 1);
  }

  TEST_CASE("Euler is DDIM with eta 0") {
    const RespacedSchedule grid = respace(kSchedule, 10);
    AnalyticDenoiser d(GaussianDataSpec::unit(1));
    const Vec x = Vec::Constant(1, 0.9);
    PredictContext ctx;
    const OdeStep e = euler_step(x, 6, 5, d, grid, nullptr, ctx);
    const Vec ddim = ddim_step(x, 6, 5, e.evals[0], 0.0, grid.effective, Vec());
    CHECK((e.next - ddim).norm() == 0.0);
  }

  TEST_CASE("lambda = 1 reproduces the unscaled chain bitwise") {
    const RespacedSchedule grid = respace(kSchedule, 20);
    PerturbedAnalyticDenoiser d(GaussianDataSpec::unit(2), ErrorProfile::constant(0.1));
    for (SamplerKind kind : {SamplerKind::kDdpm, SamplerKind::kDdim, SamplerKind::kEuler, SamplerKind::kHeun}) {
      SamplerConfig plain = config(kind, grid, 9);
      plain.eta = 0.5;
      SamplerConfig scaled = plain;
      scaled.scaling = ScalingSchedule::uniform(1.0);
      CHECK(run_chain(plain, d, ChainInit::from_noise(), 3) == run_chain(scaled, d, ChainInit::from_noise(), 3));
    }
  }

  TEST_CASE("same seed gives the same trajectory") {
    const RespacedSchedule grid = respace(kSchedule, 50);
    NoisyOracleDenoiser d(2, ErrorProfile::constant(0.1));
    const SamplerConfig c = config(SamplerKind::kDdpm, grid, 77);
    const ChainInit init = ChainInit::anchored(Vec::Constant(2, 0.5));
    const ChainRecord a = run_chain(c, d, init, 4), b = run_chain(c, d, init, 4);
    CHECK(a == b);
    CHECK(a.states.size() == a.steps.size() + 1);
    CHECK_FALSE(a == run_chain(c, d, init, 5));
  }

  TEST_CASE("recorded steps replay exactly") {
    const RespacedSchedule grid = respace(kSchedule, 20);
    NoisyOracleDenoiser d(1, ErrorProfile::constant(0.1));
    const SamplerConfig c = config(SamplerKind::kDdpm, grid, 5);
    const ChainRecord r = run_chain(c, d, ChainInit::anchored(Vec::Constant(1, -0.3)), 0);
    for (std::size_t i = 0; i < r.steps.size(); ++i) {
      const auto& s = r.steps[i];
      const Vec next = ddpm_step(r.states[i], s.t, s.raw[0], grid.effective, s.noise);
      CHECK(next == r.states[i + 1]);
    }
  }

  TEST_CASE("anchored exact DDIM chain recovers x0") {
    NoisyOracleDenoiser d(2, ErrorProfile::constant(0.0));
    const SamplerConfig c = config(SamplerKind::kDdim, identity_respacing(kSchedule), 3);
    const Vec x0 = (Vec(2) << 1.2, -0.4).finished();
    const ChainRecord r = run_chain(c, d, ChainInit::anchored(x0), 0);
    CHECK((r.states.back() - x0).norm() < 1e-9);
  }

  TEST_CASE("results do not depend on the thread count") {
    const RespacedSchedule grid = respace(kSchedule, 20);
    PerturbedAnalyticDenoiser d(GaussianDataSpec::unit(2), ErrorProfile::constant(0.1));
    const SamplerConfig c = config(SamplerKind::kDdpm, grid, 21);
    const Mat a = generate_samples(d, c, 3000, {1, 1000});
    const Mat b = generate_samples(d, c, 3000, {4, 1000});
    CHECK(a == b);
    NoisyOracleDenoiser oracle(2, ErrorProfile::constant(0.1));
    GaussianSampler data(GaussianDataSpec::unit(2));
    const BiasReport r1 = measure_delta_t(oracle, c, data, 2500, {1, 1000});
    const BiasReport r3 = measure_delta_t(oracle, c, data, 2500, {3, 1000});
    CHECK(r1.measured_var == r3.measured_var);
  }

  TEST_CASE("step failures name the timestep") {
    FailingDenoiser d;
    const SamplerConfig c = config(SamplerKind::kDdpm, respace(kSchedule, 10));
    try {
      run_chain(c, d, ChainInit::from_noise());
      FAIL("expected an exception");
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()).find("t=7") != std::string::npos);
    }
  }

  TEST_CASE("config validation") {
    SamplerConfig c = config(SamplerKind::kDdim, respace(kSchedule, 10));
    c.eta = 1.5;
    CHECK_THROWS(c.validate());
    c.eta = 0.0;
    c.scaling = ScalingSchedule::linear(-0.2, 1.0);
    CHECK_THROWS(c.validate());
  }

  TEST_CASE("chain CSV layout") {
    const RespacedSchedule grid = respace(kSchedule, 3);
    AnalyticDenoiser d(GaussianDataSpec::unit(2));
    const ChainRecord r = run_chain(config(SamplerKind::kEuler, grid), d, ChainInit::from_noise(), 2);
    std::ostringstream out;
    write_chain_csv_header(out, 2);
    write_chain_csv_rows(out, r);
    std::istringstream in(out.str());
    std::string line;
    std::getline(in, line);
    CHECK(line == "chain_id,t,x0,x1,eps_norm");
    int rows = 0;
    while (std::getline(in, line)) ++rows;
    CHECK(rows == 4);
  }
}
