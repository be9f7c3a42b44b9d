#pragma once

#include <vector>

#include "exbias/data.hpp"
#include "exbias/denoiser.hpp"
#include "exbias/sampler.hpp"
#include "exbias/schedule.hpp"

namespace exbias {

/// Variance of x_hat_t around sqrt(alpha_bar_t) x_0 compared with training.
struct VariancePrediction {
  int t = 0;
  double train_var = 0;    // 1 - alpha_bar_t
  double sampled_var = 0;
  double extra_term = 0;   // sampled_var - train_var
};

/// One DDPM step from the true x_{t+1} with a predictor whose x_0 estimate
/// carries Gaussian error of std e_next: 1 - ab_t + (sqrt(ab_t) b_{t+1} / (1 - ab_{t+1}) e)^2.
/// Valid for 1 <= t < T.
VariancePrediction ddpm_single_step_var(const NoiseSchedule& schedule, int t, double e_next);

/// Two DDPM steps from the true x_{t+1}, second-order accurate in the error.
/// Valid for 2 <= t < T.
VariancePrediction ddpm_two_step_var(const NoiseSchedule& schedule, int t, double e);

/// One DDIM(eta = 0) step from the true x_{t+1}. Valid for 1 <= t < T.
VariancePrediction ddim_single_step_var(const NoiseSchedule& schedule, int t, double e_next);

/// Predictors for which a sampling chain over Gaussian data stays linear-Gaussian.
struct LinearPredictor {
  enum class Kind { kOracle, kAnalytic, kPerturbedAnalytic };
  Kind kind = Kind::kOracle;
  ErrorProfile profile;

  static LinearPredictor oracle(ErrorProfile p) { return {Kind::kOracle, p}; }
  static LinearPredictor analytic() { return {Kind::kAnalytic, ErrorProfile::constant(0.0)}; }
  static LinearPredictor perturbed(ErrorProfile p) { return {Kind::kPerturbedAnalytic, p}; }
};

struct ChainVariance {
  /// Index t = 0..T'. Entries outside [stop, start] are left at zero with t set.
  std::vector<VariancePrediction> residual;  // pooled variance of x_hat_t - sqrt(ab_t) x_0
  std::vector<double> marginal;              // pooled variance of x_hat_t itself
};

/// Exact moment propagation of anchored chains (x_start built from x_0 by the
/// forward process) through the configured sampler, scaling included. Each
/// step is affine in (x_hat, x_0) plus fresh Gaussian sources, so the joint
/// moments are carried exactly per eigen-coordinate of the data covariance.
/// Variances are pooled over coordinates the same way the Monte Carlo
/// harness pools them.
ChainVariance gaussian_chain_var(const GaussianDataSpec& spec, const SamplerConfig& config,
                                 const LinearPredictor& predictor, int start = 0, int stop = 0);

}  // namespace exbias
