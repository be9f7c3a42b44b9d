#pragma once

#include <optional>

#include "exbias/data.hpp"
#include "exbias/rng.hpp"
#include "exbias/schedule.hpp"

namespace exbias {

/// An epsilon prediction together with the x_0 estimate it implies through
/// x_0 = (x_t - sqrt(1 - alpha_bar) eps) / sqrt(alpha_bar).
struct EpsPrediction {
  Vec eps;
  Vec x0_hat;

  static EpsPrediction from_eps(const Vec& x, double alpha_bar, Vec eps);
  static EpsPrediction from_x0(const Vec& x, double alpha_bar, Vec x0_hat);
};

/// Where on the diffusion path a query is made.
struct NoiseLevel {
  int t = 0;              // index on the sampling grid
  double alpha_bar = 0;   // alpha_bar at that index
  double time = 0;        // parent timestep / parent T, the network's time input
};

NoiseLevel level_at(const RespacedSchedule& grid, int i);
NoiseLevel level_at(const NoiseSchedule& schedule, int t);

/// Per-query side information. Only simulation predictors look at it.
struct PredictContext {
  const Vec* anchor_x0 = nullptr;  // ground-truth x_0 of an anchored chain
  Rng* rng = nullptr;              // stream for fresh prediction-error draws
};

class Denoiser {
 public:
  virtual ~Denoiser() = default;
  virtual int dim() const = 0;
  virtual EpsPrediction predict(const Vec& x, const NoiseLevel& level, PredictContext& ctx) const = 0;
};

/// Prediction-error scale e_t as a function of the noise level.
struct ErrorProfile {
  enum class Kind { kConstant, kProportional };
  Kind kind = Kind::kConstant;
  double scale = 0.0;

  /// Constant: scale. Proportional: scale * sqrt(1 - alpha_bar).
  double at(double alpha_bar) const;

  static ErrorProfile constant(double c) { return {Kind::kConstant, c}; }
  static ErrorProfile proportional(double c) { return {Kind::kProportional, c}; }
};

/// Exact posterior-mean predictor E[x_0 | x_t] for Gaussian data.
class AnalyticDenoiser final : public Denoiser {
 public:
  explicit AnalyticDenoiser(GaussianDataSpec spec);
  int dim() const override { return spec_.dim(); }
  EpsPrediction predict(const Vec& x, const NoiseLevel& level, PredictContext& ctx) const override;

  /// Posterior mean mu + sqrt(ab) S (ab S + (1-ab) I)^-1 (x - sqrt(ab) mu).
  Vec posterior_mean(const Vec& x, double alpha_bar) const;
  /// d x0_hat / d x.
  Mat posterior_jacobian(double alpha_bar) const;

  const GaussianDataSpec& spec() const { return spec_; }
  /// Eigen-decomposition of the data covariance.
  const Mat& eigenvectors() const { return basis_; }
  const Vec& eigenvalues() const { return spectrum_; }

 private:
  GaussianDataSpec spec_;
  Mat basis_;
  Vec spectrum_;
};

/// x0_hat = x0_true + e_t * zeta, zeta ~ N(0, I) drawn fresh on every call.
/// Needs the chain's anchor x_0, so it only runs inside diagnostic harnesses.
class NoisyOracleDenoiser final : public Denoiser {
 public:
  NoisyOracleDenoiser(int dim, ErrorProfile profile);
  int dim() const override { return dim_; }
  EpsPrediction predict(const Vec& x, const NoiseLevel& level, PredictContext& ctx) const override;
  const ErrorProfile& profile() const { return profile_; }

 private:
  int dim_;
  ErrorProfile profile_;
};

/// Posterior mean plus e_t * zeta. Same error model as the noisy oracle but
/// usable for generation from pure noise.
class PerturbedAnalyticDenoiser final : public Denoiser {
 public:
  PerturbedAnalyticDenoiser(GaussianDataSpec spec, ErrorProfile profile);
  int dim() const override { return exact_.dim(); }
  EpsPrediction predict(const Vec& x, const NoiseLevel& level, PredictContext& ctx) const override;
  const AnalyticDenoiser& exact() const { return exact_; }
  const ErrorProfile& profile() const { return profile_; }

 private:
  AnalyticDenoiser exact_;
  ErrorProfile profile_;
};

EpsPrediction analytic_eps(const GaussianDataSpec& spec, const NoiseSchedule& schedule, const Vec& x, int t);

EpsPrediction noisy_oracle_eps(const Vec& x0_true, const ErrorProfile& profile, Rng& rng,
                               const NoiseSchedule& schedule, const Vec& x, int t);

}  // namespace exbias
