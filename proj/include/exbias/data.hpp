#pragma once

#include <memory>
#include <vector>

#include <Eigen/Dense>

#include "exbias/rng.hpp"

namespace exbias {

using Mat = Eigen::MatrixXd;

/// Gaussian q(x_0) used as an analytically tractable data distribution.
struct GaussianDataSpec {
  Vec mean;
  Mat covariance;

  int dim() const { return static_cast<int>(mean.size()); }

  /// Throws unless the covariance is square, symmetric and PSD.
  void validate() const;

  static GaussianDataSpec unit(int dim);
  static GaussianDataSpec diagonal(Vec mean, const Vec& variances);
};

/// Draws i.i.d. x_0 samples from a toy distribution.
class DataSampler {
 public:
  virtual ~DataSampler() = default;
  virtual int dim() const = 0;
  virtual Vec sample(Rng& rng) const = 0;
  /// Exact first two moments, used as the reference of Frechet distances.
  virtual Vec mean() const = 0;
  virtual Mat covariance() const = 0;
};

class GaussianSampler final : public DataSampler {
 public:
  explicit GaussianSampler(GaussianDataSpec spec);
  int dim() const override { return spec_.dim(); }
  Vec sample(Rng& rng) const override;
  Vec mean() const override { return spec_.mean; }
  Mat covariance() const override { return spec_.covariance; }
  const GaussianDataSpec& spec() const { return spec_; }

 private:
  GaussianDataSpec spec_;
  Mat factor_;  // factor_ * factor_^T == covariance
};

/// Equal-weight mixture of isotropic Gaussians sharing one standard deviation.
class MixtureSampler final : public DataSampler {
 public:
  MixtureSampler(std::vector<Vec> means, double sigma);
  int dim() const override { return static_cast<int>(means_.front().size()); }
  Vec sample(Rng& rng) const override;
  Vec mean() const override;
  Mat covariance() const override;

 private:
  std::vector<Vec> means_;
  double sigma_;
};

/// Two interleaved half circles with isotropic jitter, standardized to roughly
/// unit scale.
class TwoMoonsSampler final : public DataSampler {
 public:
  explicit TwoMoonsSampler(double noise = 0.1);
  int dim() const override { return 2; }
  Vec sample(Rng& rng) const override;
  Vec mean() const override;
  Mat covariance() const override;

 private:
  double noise_;
};

/// Sample mean and (population) covariance of the rows of `samples`.
void sample_moments(const Mat& samples, Vec& mean, Mat& covariance);

}  // namespace exbias
