#pragma once

#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "exbias/config.hpp"
#include "exbias/data.hpp"
#include "exbias/denoiser.hpp"
#include "exbias/diagnostics.hpp"
#include "exbias/mlp.hpp"
#include "exbias/sampler.hpp"
#include "exbias/scaling.hpp"
#include "exbias/theory.hpp"

namespace exbias {

/// Objects a run config resolves to.
struct Setup {
  RespacedSchedule grid;
  std::unique_ptr<DataSampler> data;
  std::optional<GaussianDataSpec> gaussian;  // set for gaussian data
  std::unique_ptr<Denoiser> denoiser;
  /// Denoiser for chains started from pure noise; the noisy oracle is
  /// replaced by the perturbed analytic predictor with the same profile.
  std::unique_ptr<Denoiser> generator;
  std::optional<LinearPredictor> linear;  // set when chains stay linear-Gaussian
  SamplerConfig sampler;
};

NoiseSchedule make_schedule(const ScheduleParams& p);
std::unique_ptr<DataSampler> make_data(const DataParams& p);
ErrorProfile make_profile(const DenoiserParams& p);
SamplerConfig make_sampler(const SamplerParams& p, RespacedSchedule grid, std::uint64_t seed);
/// MLP weights are read from denoiser.weights.
Setup build_setup(const RunConfig& config);

// ---- verify-theory ----

struct CheckRow {
  std::string check;
  int t = 0;
  double predicted = 0;
  double measured = 0;
  double se = 0;
  double tolerance = 0;
  bool pass = false;
};

struct VerifyResult {
  std::vector<CheckRow> rows;
  bool all_pass() const;
};

/// Single-step DDPM and DDIM variances, the two-step DDPM variance, the
/// zero-error single step and the exact multi-step chain, each against its
/// closed form. Uses the noisy oracle with the [verify] error levels.
VerifyResult run_verify_theory(const RunConfig& config, int threads);
void write_verify_csv(std::ostream& out, const VerifyResult& result);

// ---- bias ----

struct BiasResult {
  BiasReport report;
  /// Exact chain moments when the configured chain is linear-Gaussian.
  std::optional<ChainVariance> oracle;
};

/// Anchored multi-step chains (delta, multi_err) plus the single-step
/// harness (single_err) on the configured setup.
BiasResult run_bias(const RunConfig& config, int threads);
/// Columns t,predicted_var,predicted_multi_err,predicted_marginal_var.
void write_chain_oracle_csv(std::ostream& out, const ChainVariance& oracle);

// ---- norms ----

struct NormsResult {
  BiasReport report;
  NormRatioSeries ratio;
  std::optional<InversionResult> fit;
  std::string fit_error;  // why the fit failed, if it did
};

NormsResult run_norms(const RunConfig& config, int threads);
/// Sum over t = 1..T' of |sampling norm - training norm|.
double summed_norm_gap(const BiasReport& report);

// ---- sweep ----

struct SweepRow {
  double b = 1.0;
  double delta1 = 0;
  double delta1_se = 0;
  double frechet = 0;
  double norm_gap = 0;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::size_t argmin_delta = 0;
  std::size_t argmin_frechet = 0;
  /// Rank correlation of delta_1 and the Frechet distance across the grid.
  double spearman = 0;
};

/// One anchored run and one generation run per uniform b. Chains share
/// random streams across b, so differences between rows are common-noise
/// comparisons.
SweepResult run_sweep(const RunConfig& config, int threads);
void write_sweep_csv(std::ostream& out, const SweepResult& result);

// ---- train ----

TrainConfig make_train_config(const RunConfig& config);
TrainResult run_train(const RunConfig& config);

// ---- sample ----

/// Full trajectories of run.n_chains chains, in chain order. Oracle runs are
/// anchored to data draws; everything else starts from pure noise.
std::vector<ChainRecord> run_sample(const RunConfig& config, int threads);

// ---- ODE solver comparison ----

/// Probability-flow ODE of an analytic denoiser integrated with `steps`
/// uniform Euler steps in sigma = sqrt((1 - ab) / ab), from alpha_bar
/// `ab_from` down to ab = 1.
Vec probability_flow_reference(const AnalyticDenoiser& denoiser, const Vec& x, double ab_from, int steps);

struct OdeComparison {
  double euler_error = 0;  // mean ||x_0 - reference|| over chains
  double heun_error = 0;
  double euler_norm_gap = 0;
  double heun_norm_gap = 0;
};

OdeComparison compare_ode_solvers(const GaussianDataSpec& spec, const RespacedSchedule& grid, long long n_chains,
                                  std::uint64_t seed, int reference_steps, int threads);

/// Writes the config as "# " lines.
void write_config_header(std::ostream& out, const RunConfig& config);

}  // namespace exbias
