#pragma once

#include <iosfwd>
#include <span>
#include <vector>

namespace exbias {

/// Epsilon Scaling factor lambda(t) over sampling grid indices 1..T'.
struct ScalingSchedule {
  enum class Form { kUniform, kLinear };
  Form form = Form::kUniform;
  double k = 0.0;
  double b = 1.0;

  static ScalingSchedule uniform(double b) { return {Form::kUniform, 0.0, b}; }
  static ScalingSchedule linear(double k, double b) { return {Form::kLinear, k, b}; }

  /// Uniform: b. Linear: k*t + b.
  double at(int t) const { return form == Form::kUniform ? b : k * t + b; }

  /// Throws unless lambda(t) > 0 for every t in 1..grid_steps.
  void validate(int grid_steps) const;
};

double lambda_at(const ScalingSchedule& s, int t);

/// Measured ratio DeltaN(t) = ||eps_sample|| / ||eps_train|| on grid indices.
struct NormRatioSeries {
  std::vector<int> t;
  std::vector<double> ratio;
  std::vector<long long> n_samples;

  std::size_t size() const { return t.size(); }
  /// Ratio at grid index t; throws when absent.
  double at(int t) const;
};

/// Discrete accumulation model DeltaN(t) - 1 = sum_{u=t+1}^{T'} (lambda_u - 1)(u - t),
/// evaluated for t = 1..T'. `lambdas[u-1]` is lambda_u.
NormRatioSeries forward_accumulate(std::span<const double> lambdas);
NormRatioSeries forward_accumulate(const ScalingSchedule& s, int grid_steps);

struct InversionOptions {
  int t_min = 5;
  /// |k| * T' below this collapses the result to Uniform.
  double uniform_threshold = 0.002;
};

struct InversionResult {
  ScalingSchedule schedule;
  /// Fitted coefficients of g(t) - 1 = a1 m + a2 m^2 + a3 m^3 with m = T' - t.
  double a1 = 0, a2 = 0, a3 = 0;
};

/// Least-squares polynomial fit of g over [t_min, T'], followed by the exact
/// second-difference inversion of the accumulation model on the fitted curve.
InversionResult invert_norm_ratio_detailed(const NormRatioSeries& g, const InversionOptions& opts = {});
ScalingSchedule invert_norm_ratio(const NormRatioSeries& g, int t_min = 5);

/// Columns t,ratio,n_samples.
void write_norm_ratio_csv(std::ostream& out, const NormRatioSeries& g);
NormRatioSeries read_norm_ratio_csv(std::istream& in);

}  // namespace exbias
