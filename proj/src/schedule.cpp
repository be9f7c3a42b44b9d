#include "exbias/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <ostream>
#include <stdexcept>

namespace exbias {

NoiseSchedule::NoiseSchedule(std::vector<double> betas) : betas_(std::move(betas)) {
  if (betas_.empty()) throw std::invalid_argument("noise schedule needs at least one step");
  alphas_.reserve(betas_.size());
  alpha_bars_.reserve(betas_.size());
  double prod = 1.0;
  for (std::size_t i = 0; i < betas_.size(); ++i) {
    const double b = betas_[i];
    if (!(b > 0.0 && b < 1.0)) {
      throw std::invalid_argument(fmt::format("beta_{} = {} outside (0, 1)", i + 1, b));
    }
    alphas_.push_back(1.0 - b);
    prod *= 1.0 - b;
    alpha_bars_.push_back(prod);
  }
  derive_posterior();
}

NoiseSchedule NoiseSchedule::from_alpha_bars(std::vector<double> alpha_bars) {
  if (alpha_bars.empty()) throw std::invalid_argument("noise schedule needs at least one step");
  NoiseSchedule s;
  double prev = 1.0;
  for (std::size_t i = 0; i < alpha_bars.size(); ++i) {
    const double ab = alpha_bars[i];
    if (!(ab > 0.0 && ab < prev)) {
      throw std::invalid_argument(
          fmt::format("alpha_bar must be strictly decreasing in (0, 1); index {} = {}", i + 1, ab));
    }
    const double alpha = ab / prev;
    s.alphas_.push_back(alpha);
    s.betas_.push_back(1.0 - alpha);
    prev = ab;
  }
  s.alpha_bars_ = std::move(alpha_bars);
  s.derive_posterior();
  return s;
}

void NoiseSchedule::derive_posterior() {
  posterior_vars_.resize(betas_.size());
  for (std::size_t i = 0; i < betas_.size(); ++i) {
    const double ab_prev = i == 0 ? 1.0 : alpha_bars_[i - 1];
    posterior_vars_[i] = (1.0 - ab_prev) / (1.0 - alpha_bars_[i]) * betas_[i];
  }
}

void NoiseSchedule::check_index(int t, int lo) const {
  if (t < lo || t > steps()) {
    throw std::out_of_range(fmt::format("timestep {} outside [{}, {}]", t, lo, steps()));
  }
}

double NoiseSchedule::beta(int t) const {
  check_index(t, 1);
  return betas_[t - 1];
}

double NoiseSchedule::alpha(int t) const {
  check_index(t, 1);
  return alphas_[t - 1];
}

double NoiseSchedule::alpha_bar(int t) const {
  check_index(t, 0);
  return t == 0 ? 1.0 : alpha_bars_[t - 1];
}

double NoiseSchedule::posterior_var(int t) const {
  check_index(t, 1);
  return posterior_vars_[t - 1];
}

double NoiseSchedule::sampling_var(int t, SamplingVariance choice) const {
  return choice == SamplingVariance::kLowerBound ? posterior_var(t) : beta(t);
}

NoiseSchedule make_linear_schedule(int steps, double beta_start, double beta_end) {
  if (steps < 2) throw std::invalid_argument("linear schedule needs T >= 2");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    throw std::invalid_argument(
        fmt::format("linear schedule endpoints must satisfy 0 < {} <= {} < 1", beta_start, beta_end));
  }
  std::vector<double> betas(steps);
  const double span = beta_end - beta_start;
  for (int i = 0; i < steps; ++i) {
    betas[i] = beta_start + span * static_cast<double>(i) / static_cast<double>(steps - 1);
  }
  betas.back() = beta_end;
  return NoiseSchedule(std::move(betas));
}

NoiseSchedule default_linear_schedule(int steps) {
  // Scaling pushes beta_end to 1 for T <= 20; cap it below 1 as in the
  // clipped cosine schedules of the DDPM family.
  const double scale = 1000.0 / static_cast<double>(steps);
  return make_linear_schedule(steps, std::min(1e-4 * scale, 0.999), std::min(0.02 * scale, 0.999));
}

RespacedSchedule respace(const NoiseSchedule& parent, int grid_steps) {
  const int T = parent.steps();
  if (grid_steps < 2 || grid_steps > T) {
    throw std::invalid_argument(fmt::format("respacing needs 2 <= T' <= {}, got {}", T, grid_steps));
  }
  if (grid_steps == T) return identity_respacing(parent);

  std::vector<int> steps;
  for (int j = 1; j <= grid_steps; ++j) {
    const auto pos = static_cast<int>(std::lround(static_cast<double>(j) * T / grid_steps));
    const int t = std::clamp(pos, 1, T);
    if (steps.empty() || t > steps.back()) steps.push_back(t);
  }
  if (steps.back() != T) steps.push_back(T);

  std::vector<double> abars;
  abars.reserve(steps.size());
  for (int t : steps) abars.push_back(parent.alpha_bar(t));
  return RespacedSchedule{parent, std::move(steps), NoiseSchedule::from_alpha_bars(std::move(abars))};
}

RespacedSchedule identity_respacing(const NoiseSchedule& schedule) {
  std::vector<int> steps(schedule.steps());
  for (int t = 1; t <= schedule.steps(); ++t) steps[t - 1] = t;
  return RespacedSchedule{schedule, std::move(steps), schedule};
}

void write_schedule_csv(std::ostream& out, const NoiseSchedule& schedule) {
  out << "t,beta,alpha_bar,posterior_var\n";
  for (int t = 1; t <= schedule.steps(); ++t) {
    out << fmt::format("{},{:.17g},{:.17g},{:.17g}\n", t, schedule.beta(t), schedule.alpha_bar(t),
                       schedule.posterior_var(t));
  }
}

}  // namespace exbias
