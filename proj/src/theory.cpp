#include "exbias/theory.hpp"

#include <array>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

namespace exbias {

namespace {

void check_range(const NoiseSchedule& s, int t, int lo, const char* what) {
  if (t < lo || t >= s.steps()) {
    throw std::out_of_range(fmt::format("{} needs {} <= t < {}, got {}", what, lo, s.steps(), t));
  }
}

VariancePrediction make(const NoiseSchedule& s, int t, double extra) {
  const double train = 1.0 - s.alpha_bar(t);
  return {t, train, train + extra, extra};
}

// sqrt(ab_t) b_{t+1} / (1 - ab_{t+1}): the weight of x0_hat in the posterior mean.
double x0_weight(const NoiseSchedule& s, int t) {
  return std::sqrt(s.alpha_bar(t)) * s.beta(t + 1) / (1.0 - s.alpha_bar(t + 1));
}

}  // namespace

VariancePrediction ddpm_single_step_var(const NoiseSchedule& s, int t, double e_next) {
  check_range(s, t, 1, "ddpm_single_step_var");
  const double w = x0_weight(s, t) * e_next;
  return make(s, t, w * w);
}

VariancePrediction ddpm_two_step_var(const NoiseSchedule& s, int t, double e) {
  check_range(s, t, 2, "ddpm_two_step_var");
  const double first = x0_weight(s, t - 1) * e;
  const double f = std::pow(x0_weight(s, t) * e, 2);
  const double one_minus_prev = 1.0 - s.alpha_bar(t - 1);
  const double second =
      s.alpha(t) * one_minus_prev * one_minus_prev / (4.0 * std::pow(1.0 - s.alpha_bar(t), 3)) * f * f;
  const double train = 1.0 - s.alpha_bar(t - 1);
  return {t - 1, train, train + first * first + second, first * first + second};
}

VariancePrediction ddim_single_step_var(const NoiseSchedule& s, int t, double e_next) {
  check_range(s, t, 1, "ddim_single_step_var");
  const double ab_next = s.alpha_bar(t + 1);
  const double c = 1.0 - std::sqrt((s.alpha(t + 1) - ab_next) / (1.0 - ab_next));
  return make(s, t, c * c * s.alpha_bar(t) * e_next * e_next);
}

namespace {

// Fresh standard-normal sources a single step can draw on.
enum Source { kZeta1 = 0, kZeta2, kNoise, kSources };

// a_x x + a_0 x0 + c + sum_k f_k xi_k for one eigen-coordinate.
struct Affine {
  double ax = 0, a0 = 0, c = 0;
  std::array<double, kSources> f{};

  Affine operator+(const Affine& o) const {
    Affine r{ax + o.ax, a0 + o.a0, c + o.c, {}};
    for (int k = 0; k < kSources; ++k) r.f[k] = f[k] + o.f[k];
    return r;
  }
  Affine operator*(double s) const {
    Affine r{ax * s, a0 * s, c * s, {}};
    for (int k = 0; k < kSources; ++k) r.f[k] = f[k] * s;
    return r;
  }
  Affine operator-(const Affine& o) const { return *this + o * -1.0; }
};

Affine state_form() { return {1.0, 0.0, 0.0, {}}; }

struct Pred {
  Affine eps, x0;
};

// Joint moments of (x, x0) for one coordinate.
struct Moments {
  double mx = 0, m0 = 0, vxx = 0, vx0 = 0, v00 = 0;

  double mean(const Affine& a) const { return a.ax * mx + a.a0 * m0 + a.c; }
  double var(const Affine& a) const {
    double v = a.ax * a.ax * vxx + 2.0 * a.ax * a.a0 * vx0 + a.a0 * a.a0 * v00;
    for (double fk : a.f) v += fk * fk;
    return v;
  }
  Moments advance(const Affine& a) const {
    return {mean(a), m0, var(a), a.ax * vx0 + a.a0 * v00, v00};
  }
};

class CoordinateStepper {
 public:
  CoordinateStepper(const SamplerConfig& cfg, const LinearPredictor& p, double data_var, double data_mean)
      : cfg_(cfg), p_(p), s_(data_var), mu_(data_mean) {}

  // Prediction at grid index t for a query whose value is the affine form `x`.
  Pred predict(const Affine& x, int t, Source zeta) const {
    const NoiseSchedule& sch = cfg_.grid.effective;
    const double ab = sch.alpha_bar(t);
    const double e = p_.profile.at(ab);
    Affine x0;
    switch (p_.kind) {
      case LinearPredictor::Kind::kOracle:
        x0 = Affine{0.0, 1.0, 0.0, {}};
        break;
      case LinearPredictor::Kind::kAnalytic:
      case LinearPredictor::Kind::kPerturbedAnalytic: {
        const double gain = std::sqrt(ab) * s_ / (ab * s_ + 1.0 - ab);
        x0 = x * gain;
        x0.c += mu_ * (1.0 - gain * std::sqrt(ab));
        break;
      }
    }
    if (p_.kind != LinearPredictor::Kind::kAnalytic) x0.f[zeta] += e;
    const Affine eps = (x - x0 * std::sqrt(ab)) * (1.0 / std::sqrt(1.0 - ab));
    const double lam = cfg_.lambda(t);
    if (lam == 1.0) return {eps, x0};
    const Affine scaled = eps * (1.0 / lam);
    return {scaled, (x - scaled * std::sqrt(1.0 - ab)) * (1.0 / std::sqrt(ab))};
  }

  Affine step(int t) const {
    const NoiseSchedule& sch = cfg_.grid.effective;
    const int t_prev = t - 1;
    const Affine x = state_form();
    switch (cfg_.kind) {
      case SamplerKind::kDdpm: {
        const Pred p = predict(x, t, kZeta1);
        Affine out = (x - p.eps * (sch.beta(t) / std::sqrt(1.0 - sch.alpha_bar(t)))) * (1.0 / std::sqrt(sch.alpha(t)));
        if (t_prev > 0) out.f[kNoise] += std::sqrt(sch.sampling_var(t, cfg_.variance));
        return out;
      }
      case SamplerKind::kDdim: {
        const Pred p = predict(x, t, kZeta1);
        const double sigma = t_prev > 0 ? ddim_sigma(sch, t, t_prev, cfg_.eta) : 0.0;
        Affine out = ddim(p, t_prev, sigma);
        out.f[kNoise] += sigma;
        return out;
      }
      case SamplerKind::kEuler:
      case SamplerKind::kHeun: {
        const Pred p = predict(x, t, kZeta1);
        const Affine euler = ddim(p, t_prev, 0.0);
        if (cfg_.kind == SamplerKind::kEuler || t_prev == 0) return euler;
        const Pred q = predict(euler, t_prev, kZeta2);
        const double ab = sch.alpha_bar(t);
        const Affine eps = (p.eps + q.eps) * 0.5;
        const Affine x0 = (x - eps * std::sqrt(1.0 - ab)) * (1.0 / std::sqrt(ab));
        return ddim({eps, x0}, t_prev, 0.0);
      }
    }
    throw std::logic_error("unknown sampler kind");
  }

 private:
  Affine ddim(const Pred& p, int t_prev, double sigma) const {
    const double ab_prev = cfg_.grid.effective.alpha_bar(t_prev);
    const double dir = 1.0 - ab_prev - sigma * sigma;
    if (dir < 0.0) throw std::domain_error(fmt::format("DDIM step to {}: negative direction variance", t_prev));
    return p.x0 * std::sqrt(ab_prev) + p.eps * std::sqrt(dir);
  }

  const SamplerConfig& cfg_;
  const LinearPredictor& p_;
  double s_;
  double mu_;
};

}  // namespace

ChainVariance gaussian_chain_var(const GaussianDataSpec& spec, const SamplerConfig& config,
                                 const LinearPredictor& predictor, int start, int stop) {
  spec.validate();
  config.validate();
  const NoiseSchedule& sch = config.grid.effective;
  const int T = config.grid.grid_steps();
  if (start == 0) start = T;
  if (start < 1 || start > T || stop < 0 || stop >= start) {
    throw std::out_of_range(fmt::format("chain range {} -> {} invalid on a {}-step grid", start, stop, T));
  }
  const int n = spec.dim();
  Eigen::SelfAdjointEigenSolver<Mat> eig(spec.covariance);
  const Mat& U = eig.eigenvectors();
  const Vec spectrum = eig.eigenvalues().cwiseMax(0.0);
  const Vec mu = U.transpose() * spec.mean;

  ChainVariance out;
  out.residual.resize(static_cast<std::size_t>(T) + 1);
  out.marginal.assign(static_cast<std::size_t>(T) + 1, 0.0);
  for (int t = 0; t <= T; ++t) out.residual[static_cast<std::size_t>(t)].t = t;

  std::vector<Moments> m(static_cast<std::size_t>(n));
  const double ab0 = sch.alpha_bar(start);
  for (int c = 0; c < n; ++c) {
    const double s = spectrum[c];
    m[c] = {std::sqrt(ab0) * mu[c], mu[c], ab0 * s + 1.0 - ab0, std::sqrt(ab0) * s, s};
  }

  auto record = [&](int t) {
    const double ab = sch.alpha_bar(t);
    const Affine residual{1.0, -std::sqrt(ab), 0.0, {}};
    double second = 0.0, marg_second = 0.0;
    Vec res_mean(n), marg_mean(n);
    for (int c = 0; c < n; ++c) {
      res_mean[c] = m[c].mean(residual);
      marg_mean[c] = m[c].mx;
      second += m[c].var(residual) + res_mean[c] * res_mean[c];
      marg_second += m[c].vxx + m[c].mx * m[c].mx;
    }
    const double grand = (U * res_mean).mean();
    const double marg_grand = (U * marg_mean).mean();
    const double pooled = second / n - grand * grand;
    out.residual[static_cast<std::size_t>(t)] = make(sch, t, pooled - (1.0 - ab));
    out.marginal[static_cast<std::size_t>(t)] = marg_second / n - marg_grand * marg_grand;
  };

  record(start);
  for (int t = start; t > stop; --t) {
    for (int c = 0; c < n; ++c) {
      CoordinateStepper stepper(config, predictor, spectrum[c], mu[c]);
      m[c] = m[c].advance(stepper.step(t));
    }
    record(t - 1);
  }
  return out;
}

}  // namespace exbias
