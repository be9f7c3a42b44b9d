#pragma once

#include <iosfwd>
#include <span>
#include <vector>

namespace exbias {

/// Which per-step variance the stochastic samplers inject.
enum class SamplingVariance {
  kLowerBound,  // posterior variance (tilde beta)
  kUpperBound,  // beta
};

/// Discrete variance-preserving noise schedule, indexed t = 1..T.
///
/// alpha_bar(0) is defined as 1, which makes posterior_var(1) == 0 and the
/// final reverse step noise-free. Immutable after construction.
class NoiseSchedule {
 public:
  /// Empty placeholder with zero steps.
  NoiseSchedule() = default;
  /// Build from betas; derived sequences are computed in double precision.
  explicit NoiseSchedule(std::vector<double> betas);

  /// Build from a strictly decreasing alpha_bar sequence; the stored alpha_bar
  /// values are kept bit-exact and betas are recomputed from ratios.
  static NoiseSchedule from_alpha_bars(std::vector<double> alpha_bars);

  int steps() const { return static_cast<int>(betas_.size()); }

  double beta(int t) const;
  double alpha(int t) const;
  /// Valid for t in 0..T.
  double alpha_bar(int t) const;
  double posterior_var(int t) const;
  double sampling_var(int t, SamplingVariance choice) const;
  /// 1 - alpha_bar(t): variance of q(x_t | x_0).
  double train_var(int t) const { return 1.0 - alpha_bar(t); }

  std::span<const double> betas() const { return betas_; }
  std::span<const double> alpha_bars() const { return alpha_bars_; }
  std::span<const double> posterior_vars() const { return posterior_vars_; }

 private:
  void derive_posterior();
  void check_index(int t, int lo) const;

  std::vector<double> betas_;
  std::vector<double> alphas_;
  std::vector<double> alpha_bars_;
  std::vector<double> posterior_vars_;
};

NoiseSchedule make_linear_schedule(int steps, double beta_start, double beta_end);

/// Linear schedule with endpoints 1e-4 and 0.02 at T=1000, scaled by 1000/T.
NoiseSchedule default_linear_schedule(int steps);

/// A T'-step subsequence of a parent schedule used for fast sampling.
struct RespacedSchedule {
  NoiseSchedule parent;
  /// Strictly increasing parent timesteps tau_1..tau_T', last one equal to T.
  std::vector<int> timesteps;
  /// Schedule over grid indices 1..T' with alpha_bar(i) == parent.alpha_bar(tau_i).
  NoiseSchedule effective;

  int grid_steps() const { return effective.steps(); }
  /// Parent timestep of grid index i; 0 maps to 0.
  int parent_timestep(int i) const { return i == 0 ? 0 : timesteps.at(i - 1); }
  /// Continuous time tau_i / T in [0, 1].
  double time_fraction(int i) const {
    return static_cast<double>(parent_timestep(i)) / parent.steps();
  }
};

/// Even respacing round(j*T/T') for j=1..T'. T' == T returns the parent itself.
RespacedSchedule respace(const NoiseSchedule& parent, int grid_steps);

RespacedSchedule identity_respacing(const NoiseSchedule& schedule);

/// CSV with columns t,beta,alpha_bar,posterior_var.
void write_schedule_csv(std::ostream& out, const NoiseSchedule& schedule);

}  // namespace exbias
