#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "exbias/data.hpp"
#include "exbias/denoiser.hpp"
#include "exbias/sampler.hpp"
#include "exbias/stats.hpp"

namespace exbias {

/// Per-timestep aggregates on one sampling grid (rows t = 0..T').
/// Quantities that a given measurement does not produce are NaN.
struct BiasReport {
  std::vector<int> t;
  std::vector<double> train_var;       // 1 - alpha_bar at the grid point
  std::vector<double> measured_var;    // pooled residual variance (beta hat)
  std::vector<double> measured_var_se;
  std::vector<double> delta;           // (sqrt(measured) - sqrt(train))^2
  std::vector<double> single_err;      // single-step variance error
  std::vector<double> multi_err;       // multi-step variance error
  std::vector<double> eps_norm_train;
  std::vector<double> eps_norm_train_se;
  std::vector<double> eps_norm_sample;
  std::vector<double> eps_norm_sample_se;
  std::vector<double> norm_ratio;
  std::vector<long long> n;

  explicit BiasReport(const RespacedSchedule& grid);
  BiasReport() = default;

  std::size_t rows() const { return t.size(); }
  /// Row index of grid index t (rows are ascending 0..T').
  std::size_t row(int step) const;
};

/// Columns t,train_var,measured_var,delta,single_err,multi_err,eps_norm_train,
/// eps_norm_sample,norm_ratio,n, then the standard-error columns.
void write_bias_csv(std::ostream& out, const BiasReport& report);

struct HarnessOptions {
  int threads = 1;
  /// Chain counts below this are rejected.
  long long min_chains = 1000;
};

/// Per-grid-index accumulators of an anchored multi-step run.
struct AnchoredRunStats {
  std::vector<RunningStats> residual;    // index t: x_hat_t - sqrt(ab_t) x_0, pooled over coordinates
  std::vector<RunningStats> eps_norm;    // index t: ||eps_theta(x_hat_t, t)||, t >= 1
  std::vector<RunningStats> marginal;    // index t: coordinates of x_hat_t itself
};

/// Anchored harness: each chain draws x_0 from `data` (stream
/// kData, chain index), builds x_T by the forward process and runs the full
/// sampler, recording residuals and raw eps norms at every grid index.
AnchoredRunStats run_anchored_chains(const Denoiser& denoiser, const SamplerConfig& config, const DataSampler& data,
                                     long long n_chains, const HarnessOptions& opts = {});

/// Exposure bias delta_t with multi_err filled alongside.
BiasReport measure_delta_t(const Denoiser& denoiser, const SamplerConfig& config, const DataSampler& data,
                           long long n_chains, const HarnessOptions& opts = {});

/// Multi-step variance error (signed), with delta filled alongside.
BiasReport measure_multi_step_error(const Denoiser& denoiser, const SamplerConfig& config, const DataSampler& data,
                                    long long n_chains, const HarnessOptions& opts = {});

/// Single-step variance error: for every t, ground-truth x_t by the forward
/// process, one sampler step, residual at t-1. Reported at row t-1.
BiasReport measure_single_step_error(const Denoiser& denoiser, const SamplerConfig& config, const DataSampler& data,
                                     long long n_per_step, const HarnessOptions& opts = {});

/// Residual variance of x_hat_{t-1} after two steps from the true x_{t+1},
/// indexed by t (valid 1..T'-1). Entry 0 is unused.
std::vector<RunningStats> measure_two_step_var(const Denoiser& denoiser, const SamplerConfig& config,
                                               const DataSampler& data, long long n_per_step,
                                               const HarnessOptions& opts = {});

/// Training curve from ground-truth x_t, sampling curve from anchored chains
/// and their ratio. measured_var/delta/multi_err of the same chains are filled too.
BiasReport measure_eps_norms(const Denoiser& denoiser, const SamplerConfig& config, const DataSampler& data,
                             long long n, const HarnessOptions& opts = {});

/// Training-time ||eps_theta(x_t, t)|| for t = 1..T' (index t; index 0 unused).
std::vector<RunningStats> training_eps_norms(const Denoiser& denoiser, const RespacedSchedule& grid,
                                             const DataSampler& data, std::uint64_t seed, long long n,
                                             const HarnessOptions& opts = {});

/// Terminal states of n chains started from pure noise, one per row.
Mat generate_samples(const Denoiser& denoiser, const SamplerConfig& config, long long n,
                     const HarnessOptions& opts = {});

/// (sqrt(var_sampled) - sqrt(var_train))^2, the per-dimension Frechet gap.
double frechet_gap_1d(double var_sampled, double var_train);

/// ||m1 - m2||^2 + tr(S1 + S2 - 2 (S1 S2)^{1/2}).
double frechet_gaussian(const Vec& mean1, const Mat& cov1, const Vec& mean2, const Mat& cov2);

/// Symmetric PSD square root; throws on a non-PSD input.
Mat psd_sqrt(const Mat& m);

}  // namespace exbias
