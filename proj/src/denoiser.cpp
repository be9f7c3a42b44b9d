#include "exbias/denoiser.hpp"

#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

namespace exbias {

EpsPrediction EpsPrediction::from_eps(const Vec& x, double alpha_bar, Vec eps) {
  Vec x0 = (x - std::sqrt(1.0 - alpha_bar) * eps) / std::sqrt(alpha_bar);
  return {std::move(eps), std::move(x0)};
}

EpsPrediction EpsPrediction::from_x0(const Vec& x, double alpha_bar, Vec x0_hat) {
  Vec eps = (x - std::sqrt(alpha_bar) * x0_hat) / std::sqrt(1.0 - alpha_bar);
  return {std::move(eps), std::move(x0_hat)};
}

NoiseLevel level_at(const RespacedSchedule& grid, int i) {
  return {i, grid.effective.alpha_bar(i), grid.time_fraction(i)};
}

NoiseLevel level_at(const NoiseSchedule& schedule, int t) {
  return {t, schedule.alpha_bar(t), static_cast<double>(t) / schedule.steps()};
}

double ErrorProfile::at(double alpha_bar) const {
  return kind == Kind::kConstant ? scale : scale * std::sqrt(1.0 - alpha_bar);
}

namespace {

void check_dim(const Vec& x, int dim) {
  if (x.size() != dim) {
    throw std::invalid_argument(fmt::format("input has dimension {}, denoiser expects {}", x.size(), dim));
  }
}

void check_level(const NoiseLevel& level) {
  if (!(level.alpha_bar > 0.0 && level.alpha_bar < 1.0)) {
    throw std::out_of_range(fmt::format("alpha_bar {} at t={} is not a valid query level", level.alpha_bar, level.t));
  }
}

Rng& require_rng(PredictContext& ctx) {
  if (ctx.rng == nullptr) throw std::logic_error("prediction-error draws need an RNG stream");
  return *ctx.rng;
}

}  // namespace

AnalyticDenoiser::AnalyticDenoiser(GaussianDataSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  Eigen::SelfAdjointEigenSolver<Mat> eig(spec_.covariance);
  basis_ = eig.eigenvectors();
  spectrum_ = eig.eigenvalues().cwiseMax(0.0);
}

Vec AnalyticDenoiser::posterior_mean(const Vec& x, double alpha_bar) const {
  const double s = std::sqrt(alpha_bar);
  const Vec gain = (s * spectrum_.array() / (alpha_bar * spectrum_.array() + (1.0 - alpha_bar))).matrix();
  const Vec centered = x - s * spec_.mean;
  return spec_.mean + basis_ * gain.asDiagonal() * (basis_.transpose() * centered);
}

Mat AnalyticDenoiser::posterior_jacobian(double alpha_bar) const {
  const double s = std::sqrt(alpha_bar);
  const Vec gain = (s * spectrum_.array() / (alpha_bar * spectrum_.array() + (1.0 - alpha_bar))).matrix();
  return basis_ * gain.asDiagonal() * basis_.transpose();
}

EpsPrediction AnalyticDenoiser::predict(const Vec& x, const NoiseLevel& level, PredictContext&) const {
  check_dim(x, dim());
  check_level(level);
  return EpsPrediction::from_x0(x, level.alpha_bar, posterior_mean(x, level.alpha_bar));
}

NoisyOracleDenoiser::NoisyOracleDenoiser(int dim, ErrorProfile profile) : dim_(dim), profile_(profile) {
  if (profile_.scale < 0.0) throw std::invalid_argument("prediction error scale must be >= 0");
}

EpsPrediction NoisyOracleDenoiser::predict(const Vec& x, const NoiseLevel& level, PredictContext& ctx) const {
  check_dim(x, dim_);
  check_level(level);
  if (ctx.anchor_x0 == nullptr) {
    throw std::logic_error("noisy oracle needs the ground-truth x_0 of an anchored chain");
  }
  const double e = profile_.at(level.alpha_bar);
  Vec x0 = *ctx.anchor_x0;
  // Always draw so the stream position does not depend on e.
  x0 += e * require_rng(ctx).normal_vec(dim_);
  return EpsPrediction::from_x0(x, level.alpha_bar, std::move(x0));
}

PerturbedAnalyticDenoiser::PerturbedAnalyticDenoiser(GaussianDataSpec spec, ErrorProfile profile)
    : exact_(std::move(spec)), profile_(profile) {
  if (profile_.scale < 0.0) throw std::invalid_argument("prediction error scale must be >= 0");
}

EpsPrediction PerturbedAnalyticDenoiser::predict(const Vec& x, const NoiseLevel& level,
                                                 PredictContext& ctx) const {
  check_dim(x, dim());
  check_level(level);
  Vec x0 = exact_.posterior_mean(x, level.alpha_bar);
  x0 += profile_.at(level.alpha_bar) * require_rng(ctx).normal_vec(dim());
  return EpsPrediction::from_x0(x, level.alpha_bar, std::move(x0));
}

EpsPrediction analytic_eps(const GaussianDataSpec& spec, const NoiseSchedule& schedule, const Vec& x, int t) {
  if (t < 1 || t > schedule.steps()) throw std::out_of_range(fmt::format("timestep {} out of range", t));
  AnalyticDenoiser d(spec);
  PredictContext ctx;
  return d.predict(x, level_at(schedule, t), ctx);
}

EpsPrediction noisy_oracle_eps(const Vec& x0_true, const ErrorProfile& profile, Rng& rng,
                               const NoiseSchedule& schedule, const Vec& x, int t) {
  if (t < 1 || t > schedule.steps()) throw std::out_of_range(fmt::format("timestep {} out of range", t));
  NoisyOracleDenoiser d(static_cast<int>(x.size()), profile);
  PredictContext ctx{&x0_true, &rng};
  return d.predict(x, level_at(schedule, t), ctx);
}

}  // namespace exbias
