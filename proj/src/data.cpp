#include "exbias/data.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include <fmt/format.h>

namespace exbias {

void GaussianDataSpec::validate() const {
  const auto n = mean.size();
  if (n == 0) throw std::invalid_argument("Gaussian data spec has zero dimension");
  if (covariance.rows() != n || covariance.cols() != n) {
    throw std::invalid_argument(fmt::format("covariance is {}x{}, expected {}x{}", covariance.rows(),
                                            covariance.cols(), n, n));
  }
  if (!covariance.isApprox(covariance.transpose(), 1e-12)) {
    throw std::invalid_argument("covariance is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Mat> eig(covariance, Eigen::EigenvaluesOnly);
  const double tol = 1e-12 * std::max(1.0, eig.eigenvalues().cwiseAbs().maxCoeff());
  if (eig.eigenvalues().minCoeff() < -tol) {
    throw std::invalid_argument(
        fmt::format("covariance is not PSD (min eigenvalue {})", eig.eigenvalues().minCoeff()));
  }
}

GaussianDataSpec GaussianDataSpec::unit(int dim) {
  return {Vec::Zero(dim), Mat::Identity(dim, dim)};
}

GaussianDataSpec GaussianDataSpec::diagonal(Vec mean, const Vec& variances) {
  if (mean.size() != variances.size()) {
    throw std::invalid_argument("mean and variance dimensions differ");
  }
  Mat cov = variances.asDiagonal();
  return {std::move(mean), std::move(cov)};
}

GaussianSampler::GaussianSampler(GaussianDataSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  Eigen::SelfAdjointEigenSolver<Mat> eig(spec_.covariance);
  const Vec roots = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  factor_ = eig.eigenvectors() * roots.asDiagonal();
}

Vec GaussianSampler::sample(Rng& rng) const {
  return spec_.mean + factor_ * rng.normal_vec(spec_.dim());
}

MixtureSampler::MixtureSampler(std::vector<Vec> means, double sigma)
    : means_(std::move(means)), sigma_(sigma) {
  if (means_.empty()) throw std::invalid_argument("mixture needs at least one component");
  for (const auto& m : means_) {
    if (m.size() != means_.front().size()) throw std::invalid_argument("mixture means differ in dimension");
  }
  if (!(sigma_ >= 0.0)) throw std::invalid_argument("mixture sigma must be non-negative");
}

Vec MixtureSampler::sample(Rng& rng) const {
  const int k = rng.uniform_int(0, static_cast<int>(means_.size()) - 1);
  return means_[k] + sigma_ * rng.normal_vec(dim());
}

Vec MixtureSampler::mean() const {
  Vec m = Vec::Zero(dim());
  for (const auto& c : means_) m += c;
  return m / static_cast<double>(means_.size());
}

Mat MixtureSampler::covariance() const {
  const Vec m = mean();
  Mat cov = sigma_ * sigma_ * Mat::Identity(dim(), dim());
  for (const auto& c : means_) cov += (c - m) * (c - m).transpose() / static_cast<double>(means_.size());
  return cov;
}

// Moons: upper arc (cos s, sin s), lower arc (1 - cos s, 0.5 - sin s), s ~ U(0, pi),
// then shifted by (-0.5, -0.25) and scaled by 1/0.7 so both axes are near unit scale.
namespace {
constexpr double kMoonScale = 1.0 / 0.7;
}

TwoMoonsSampler::TwoMoonsSampler(double noise) : noise_(noise) {}

Vec TwoMoonsSampler::sample(Rng& rng) const {
  const double s = std::numbers::pi * rng.uniform();
  const bool upper = rng.uniform() < 0.5;
  Vec x(2);
  if (upper) {
    x << std::cos(s), std::sin(s);
  } else {
    x << 1.0 - std::cos(s), 0.5 - std::sin(s);
  }
  x[0] += noise_ * rng.normal() - 0.5;
  x[1] += noise_ * rng.normal() - 0.25;
  return kMoonScale * x;
}

// E[cos s] = 0, E[sin s] = 2/pi, E[cos^2] = E[sin^2] = 1/2, E[sin s cos s] = 0 for s ~ U(0, pi).
Vec TwoMoonsSampler::mean() const {
  Vec m(2);
  m << (0.5 * (0.0 + 1.0) - 0.5), (0.5 * (2.0 / std::numbers::pi + 0.5 - 2.0 / std::numbers::pi) - 0.25);
  return kMoonScale * m;
}

Mat TwoMoonsSampler::covariance() const {
  const double pi = std::numbers::pi;
  const double e_sin = 2.0 / pi;
  // Per-arc raw second moments, averaged over the two arcs.
  const double exx = 0.5 * (0.5 + (1.0 + 0.5));               // E[cos^2], E[(1-cos)^2] = 1 + 1/2
  const double eyy = 0.5 * (0.5 + (0.25 - e_sin + 0.5));      // E[sin^2], E[(0.5-sin)^2]
  const double exy = 0.5 * (0.0 + (0.5 - e_sin));              // E[cos sin], E[(1-cos)(0.5-sin)]
  const double mx = 0.5, my = 0.25;
  Mat cov(2, 2);
  cov << exx - mx * mx + noise_ * noise_, exy - mx * my, exy - mx * my, eyy - my * my + noise_ * noise_;
  return kMoonScale * kMoonScale * cov;
}

void sample_moments(const Mat& samples, Vec& mean, Mat& covariance) {
  const double n = static_cast<double>(samples.rows());
  mean = samples.colwise().mean().transpose();
  const Mat centered = samples.rowwise() - mean.transpose();
  covariance = centered.transpose() * centered / n;
}

}  // namespace exbias
