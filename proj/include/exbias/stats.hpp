#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace exbias {

/// One-pass mean/variance accumulator with third and fourth central moments,
/// mergeable across shards (Chan/Pebay update formulas).
class RunningStats {
 public:
  void add(double x);
  void merge(const RunningStats& other);

  std::int64_t count() const { return n_; }
  double mean() const { return mean_; }
  /// Population variance (ddof = 0), the numpy.var convention.
  double variance() const { return n_ > 0 ? m2_ / static_cast<double>(n_) : 0.0; }
  double std_error_of_mean() const;
  /// Asymptotic standard error of variance(): sqrt((mu4 - sigma^4) / n).
  double variance_std_error() const;

 private:
  std::int64_t n_ = 0;
  double mean_ = 0;
  double m2_ = 0;
  double m3_ = 0;
  double m4_ = 0;
};

/// Spearman rank correlation (average ranks for ties).
double spearman(std::span<const double> a, std::span<const double> b);

std::vector<double> average_ranks(std::span<const double> v);

}  // namespace exbias
