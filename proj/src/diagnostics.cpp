#include "exbias/diagnostics.hpp"

#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>

#include <fmt/format.h>

#include "exbias/parallel.hpp"

namespace exbias {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Stream indices for per-timestep harnesses live above bit 40 so they never
// collide with plain chain indices.
std::uint64_t step_stream(int t, long long j) {
  return (static_cast<std::uint64_t>(t) << 40) | static_cast<std::uint64_t>(j);
}

constexpr std::uint64_t kTrainingNormTag = 1ULL << 62;

void check_count(long long n, const HarnessOptions& opts) {
  if (n < opts.min_chains) {
    throw std::invalid_argument(fmt::format("{} samples requested, at least {} required", n, opts.min_chains));
  }
}

void add_pooled(RunningStats& s, const Vec& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) s.add(v[i]);
}

std::vector<RunningStats> merge_blocks(std::vector<std::vector<RunningStats>>& blocks, std::size_t width) {
  std::vector<RunningStats> out(width);
  for (const auto& b : blocks)
    for (std::size_t i = 0; i < width; ++i) out[i].merge(b[i]);
  return out;
}

}  // namespace

BiasReport::BiasReport(const RespacedSchedule& grid) {
  const int T = grid.grid_steps();
  const std::size_t n_rows = static_cast<std::size_t>(T) + 1;
  for (int i = 0; i <= T; ++i) {
    t.push_back(i);
    train_var.push_back(grid.parent.train_var(grid.parent_timestep(i)));
  }
  for (auto* col : {&measured_var, &measured_var_se, &delta, &single_err, &multi_err, &eps_norm_train,
                    &eps_norm_train_se, &eps_norm_sample, &eps_norm_sample_se, &norm_ratio}) {
    col->assign(n_rows, kNaN);
  }
  n.assign(n_rows, 0);
}

std::size_t BiasReport::row(int step) const {
  if (step < 0 || static_cast<std::size_t>(step) >= t.size()) {
    throw std::out_of_range(fmt::format("report has no row for t={}", step));
  }
  return static_cast<std::size_t>(step);
}

void write_bias_csv(std::ostream& out, const BiasReport& r) {
  out << "t,train_var,measured_var,delta,single_err,multi_err,eps_norm_train,eps_norm_sample,norm_ratio,n,"
         "measured_var_se,eps_norm_train_se,eps_norm_sample_se\n";
  auto num = [](double v) { return std::isnan(v) ? std::string() : fmt::format("{:.17g}", v); };
  for (std::size_t i = 0; i < r.rows(); ++i) {
    out << r.t[i] << ',' << num(r.train_var[i]) << ',' << num(r.measured_var[i]) << ',' << num(r.delta[i]) << ','
        << num(r.single_err[i]) << ',' << num(r.multi_err[i]) << ',' << num(r.eps_norm_train[i]) << ','
        << num(r.eps_norm_sample[i]) << ',' << num(r.norm_ratio[i]) << ',' << r.n[i] << ','
        << num(r.measured_var_se[i]) << ',' << num(r.eps_norm_train_se[i]) << ',' << num(r.eps_norm_sample_se[i])
        << '\n';
  }
}

namespace {

class AnchoredObserver final : public ChainObserver {
 public:
  AnchoredObserver(const NoiseSchedule& s, const Vec& x0, std::vector<RunningStats>& residual,
                   std::vector<RunningStats>& eps_norm, std::vector<RunningStats>& marginal)
      : s_(s), x0_(x0), residual_(residual), eps_norm_(eps_norm), marginal_(marginal) {}

  void on_start(int t, const Vec& state) override { record(t, state); }

  void on_step(int t, const Vec&, const StepRecord& step, const Vec& next) override {
    eps_norm_[t].add(step.raw.front().eps.norm());
    record(t - 1, next);
  }

 private:
  void record(int t, const Vec& state) {
    const Vec r = state - std::sqrt(s_.alpha_bar(t)) * x0_;
    add_pooled(residual_[t], r);
    add_pooled(marginal_[t], state);
  }

  const NoiseSchedule& s_;
  const Vec& x0_;
  std::vector<RunningStats>& residual_;
  std::vector<RunningStats>& eps_norm_;
  std::vector<RunningStats>& marginal_;
};

}  // namespace

AnchoredRunStats run_anchored_chains(const Denoiser& denoiser, const SamplerConfig& config, const DataSampler& data,
                                     long long n_chains, const HarnessOptions& opts) {
  check_count(n_chains, opts);
  if (data.dim() != denoiser.dim()) throw std::invalid_argument("data and denoiser dimensions differ");
  const int T = config.grid.grid_steps();
  const std::size_t width = static_cast<std::size_t>(T) + 1;
  const std::size_t n_blocks = block_count(static_cast<std::size_t>(n_chains));

  std::vector<std::vector<RunningStats>> res(n_blocks), eps(n_blocks), marg(n_blocks);
  parallel_for_blocks(n_blocks, opts.threads, [&](std::size_t b) {
    res[b].resize(width);
    eps[b].resize(width);
    marg[b].resize(width);
    const long long begin = static_cast<long long>(b * kChainsPerBlock);
    const long long end = std::min<long long>(n_chains, begin + static_cast<long long>(kChainsPerBlock));
    for (long long j = begin; j < end; ++j) {
      Rng data_rng(config.seed, StreamPurpose::kData, static_cast<std::uint64_t>(j));
      const ChainInit init = ChainInit::anchored(data.sample(data_rng));
      AnchoredObserver obs(config.grid.effective, *init.anchor_x0, res[b], eps[b], marg[b]);
      run_chain_observed(config, denoiser, init, static_cast<std::uint64_t>(j), obs);
    }
  });
  return {merge_blocks(res, width), merge_blocks(eps, width), merge_blocks(marg, width)};
}

namespace {

void fill_variance_columns(BiasReport& report, const AnchoredRunStats& stats, long long n_chains) {
  for (std::size_t i = 0; i < report.rows(); ++i) {
    const RunningStats& s = stats.residual[i];
    report.measured_var[i] = s.variance();
    report.measured_var_se[i] = s.variance_std_error();
    report.delta[i] = frechet_gap_1d(s.variance(), report.train_var[i]);
    report.multi_err[i] = s.variance() - report.train_var[i];
    report.n[i] = n_chains;
  }
}

}  // namespace

BiasReport measure_delta_t(const Denoiser& denoiser, const SamplerConfig& config, const DataSampler& data,
                           long long n_chains, const HarnessOptions& opts) {
  BiasReport report(config.grid);
  fill_variance_columns(report, run_anchored_chains(denoiser, config, data, n_chains, opts), n_chains);
  return report;
}

BiasReport measure_multi_step_error(const Denoiser& denoiser, const SamplerConfig& config, const DataSampler& data,
                                    long long n_chains, const HarnessOptions& opts) {
  return measure_delta_t(denoiser, config, data, n_chains, opts);
}

namespace {

class ResidualAtEnd final : public ChainObserver {
 public:
  ResidualAtEnd(const NoiseSchedule& s, const Vec& x0, RunningStats& out, int target)
      : s_(s), x0_(x0), out_(out), target_(target) {}
  void on_step(int t, const Vec&, const StepRecord&, const Vec& next) override {
    if (t - 1 == target_) add_pooled(out_, next - std::sqrt(s_.alpha_bar(target_)) * x0_);
  }

 private:
  const NoiseSchedule& s_;
  const Vec& x0_;
  RunningStats& out_;
  int target_;
};

// Runs `n` independent k-step segments from the true x_start for every start in
// [first, last]; returns residual stats at start - k, indexed by start.
std::vector<RunningStats> segment_residuals(const Denoiser& denoiser, const SamplerConfig& config,
                                            const DataSampler& data, long long n, int k, int first, int last,
                                            const HarnessOptions& opts) {
  const int T = config.grid.grid_steps();
  const std::size_t per_step_blocks = block_count(static_cast<std::size_t>(n));
  const int n_starts = last - first + 1;
  const std::size_t n_blocks = per_step_blocks * static_cast<std::size_t>(n_starts);

  std::vector<RunningStats> block_stats(n_blocks);
  parallel_for_blocks(n_blocks, opts.threads, [&](std::size_t b) {
    const int start = first + static_cast<int>(b / per_step_blocks);
    const std::size_t local = b % per_step_blocks;
    const long long begin = static_cast<long long>(local * kChainsPerBlock);
    const long long end = std::min<long long>(n, begin + static_cast<long long>(kChainsPerBlock));
    for (long long j = begin; j < end; ++j) {
      const std::uint64_t stream = step_stream(start, j);
      Rng data_rng(config.seed, StreamPurpose::kData, stream);
      const ChainInit init = ChainInit::anchored(data.sample(data_rng), start);
      ResidualAtEnd obs(config.grid.effective, *init.anchor_x0, block_stats[b], start - k);
      run_chain_observed(config, denoiser, init, stream, obs, start - k);
    }
  });

  std::vector<RunningStats> out(static_cast<std::size_t>(T) + 1);
  for (std::size_t b = 0; b < n_blocks; ++b) {
    out[static_cast<std::size_t>(first) + b / per_step_blocks].merge(block_stats[b]);
  }
  return out;
}

}  // namespace

BiasReport measure_single_step_error(const Denoiser& denoiser, const SamplerConfig& config, const DataSampler& data,
                                     long long n_per_step, const HarnessOptions& opts) {
  check_count(n_per_step, opts);
  const int T = config.grid.grid_steps();
  const auto by_start = segment_residuals(denoiser, config, data, n_per_step, 1, 1, T, opts);
  BiasReport report(config.grid);
  for (int start = 1; start <= T; ++start) {
    const std::size_t r = report.row(start - 1);
    const RunningStats& s = by_start[static_cast<std::size_t>(start)];
    report.measured_var[r] = s.variance();
    report.measured_var_se[r] = s.variance_std_error();
    report.single_err[r] = s.variance() - report.train_var[r];
    report.delta[r] = frechet_gap_1d(s.variance(), report.train_var[r]);
    report.n[r] = n_per_step;
  }
  return report;
}

std::vector<RunningStats> measure_two_step_var(const Denoiser& denoiser, const SamplerConfig& config,
                                               const DataSampler& data, long long n_per_step,
                                               const HarnessOptions& opts) {
  check_count(n_per_step, opts);
  const int T = config.grid.grid_steps();
  if (T < 3) throw std::invalid_argument("two-step measurement needs at least 3 grid steps");
  // start = t + 1 for t in 1..T-1; the residual lands at t - 1.
  auto by_start = segment_residuals(denoiser, config, data, n_per_step, 2, 2, T, opts);
  std::vector<RunningStats> by_t(static_cast<std::size_t>(T));
  for (int t = 1; t <= T - 1; ++t) by_t[static_cast<std::size_t>(t)] = by_start[static_cast<std::size_t>(t) + 1];
  return by_t;
}

std::vector<RunningStats> training_eps_norms(const Denoiser& denoiser, const RespacedSchedule& grid,
                                             const DataSampler& data, std::uint64_t seed, long long n,
                                             const HarnessOptions& opts) {
  check_count(n, opts);
  const int T = grid.grid_steps();
  const int dim = denoiser.dim();
  const std::size_t per_step_blocks = block_count(static_cast<std::size_t>(n));
  const std::size_t n_blocks = per_step_blocks * static_cast<std::size_t>(T);
  std::vector<RunningStats> block_stats(n_blocks);
  parallel_for_blocks(n_blocks, opts.threads, [&](std::size_t b) {
    const int t = 1 + static_cast<int>(b / per_step_blocks);
    const std::size_t local = b % per_step_blocks;
    const long long begin = static_cast<long long>(local * kChainsPerBlock);
    const long long end = std::min<long long>(n, begin + static_cast<long long>(kChainsPerBlock));
    const NoiseLevel level = level_at(grid, t);
    for (long long j = begin; j < end; ++j) {
      const std::uint64_t stream = kTrainingNormTag | step_stream(t, j);
      Rng data_rng(seed, StreamPurpose::kData, stream);
      Rng noise_rng(seed, StreamPurpose::kInit, stream);
      Rng oracle_rng(seed, StreamPurpose::kOracle, stream);
      const Vec x0 = data.sample(data_rng);
      const Vec xt = std::sqrt(level.alpha_bar) * x0 + std::sqrt(1.0 - level.alpha_bar) * noise_rng.normal_vec(dim);
      PredictContext ctx{&x0, &oracle_rng};
      block_stats[b].add(denoiser.predict(xt, level, ctx).eps.norm());
    }
  });
  std::vector<RunningStats> out(static_cast<std::size_t>(T) + 1);
  for (std::size_t b = 0; b < n_blocks; ++b) out[1 + b / per_step_blocks].merge(block_stats[b]);
  return out;
}

BiasReport measure_eps_norms(const Denoiser& denoiser, const SamplerConfig& config, const DataSampler& data,
                             long long n, const HarnessOptions& opts) {
  const AnchoredRunStats chains = run_anchored_chains(denoiser, config, data, n, opts);
  const auto train = training_eps_norms(denoiser, config.grid, data, config.seed, n, opts);
  BiasReport report(config.grid);
  fill_variance_columns(report, chains, n);
  for (int t = 1; t <= config.grid.grid_steps(); ++t) {
    const std::size_t r = report.row(t);
    report.eps_norm_train[r] = train[r].mean();
    report.eps_norm_train_se[r] = train[r].std_error_of_mean();
    report.eps_norm_sample[r] = chains.eps_norm[r].mean();
    report.eps_norm_sample_se[r] = chains.eps_norm[r].std_error_of_mean();
    report.norm_ratio[r] = report.eps_norm_sample[r] / report.eps_norm_train[r];
  }
  return report;
}

Mat generate_samples(const Denoiser& denoiser, const SamplerConfig& config, long long n, const HarnessOptions& opts) {
  if (n < 1) throw std::invalid_argument("need at least one sample");
  const int dim = denoiser.dim();
  Mat out(n, dim);
  const std::size_t n_blocks = block_count(static_cast<std::size_t>(n));

  class Terminal final : public ChainObserver {
   public:
    explicit Terminal(Vec& last) : last_(last) {}
    void on_step(int, const Vec&, const StepRecord&, const Vec& next) override { last_ = next; }

   private:
    Vec& last_;
  };

  parallel_for_blocks(n_blocks, opts.threads, [&](std::size_t b) {
    const long long begin = static_cast<long long>(b * kChainsPerBlock);
    const long long end = std::min<long long>(n, begin + static_cast<long long>(kChainsPerBlock));
    Vec last;
    for (long long j = begin; j < end; ++j) {
      Terminal obs(last);
      run_chain_observed(config, denoiser, ChainInit::from_noise(), static_cast<std::uint64_t>(j), obs);
      out.row(j) = last.transpose();
    }
  });
  return out;
}

double frechet_gap_1d(double var_sampled, double var_train) {
  if (var_sampled < 0.0 || var_train < 0.0) {
    throw std::invalid_argument(fmt::format("variances must be >= 0 (got {}, {})", var_sampled, var_train));
  }
  const double d = std::sqrt(var_sampled) - std::sqrt(var_train);
  return d * d;
}

Mat psd_sqrt(const Mat& m) {
  if (m.rows() != m.cols()) throw std::invalid_argument("matrix square root needs a square matrix");
  if (!m.isApprox(m.transpose(), 1e-10)) throw std::invalid_argument("matrix is not symmetric");
  Eigen::SelfAdjointEigenSolver<Mat> eig(m);
  const Vec& ev = eig.eigenvalues();
  const double tol = 1e-10 * std::max(1.0, ev.cwiseAbs().maxCoeff());
  if (ev.minCoeff() < -tol) throw std::invalid_argument(fmt::format("matrix is not PSD (min eigenvalue {})", ev.minCoeff()));
  return eig.eigenvectors() * ev.cwiseMax(0.0).cwiseSqrt().asDiagonal() * eig.eigenvectors().transpose();
}

double frechet_gaussian(const Vec& mean1, const Mat& cov1, const Vec& mean2, const Mat& cov2) {
  if (mean1.size() != mean2.size() || cov1.rows() != mean1.size() || cov2.rows() != mean2.size()) {
    throw std::invalid_argument("Frechet distance inputs have mismatched dimensions");
  }
  const Mat root1 = psd_sqrt(cov1);
  psd_sqrt(cov2);  // validates
  const Mat inner = root1 * cov2 * root1;
  const Mat sym = 0.5 * (inner + inner.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> eig(sym, Eigen::EigenvaluesOnly);
  const double cross = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  return (mean1 - mean2).squaredNorm() + cov1.trace() + cov2.trace() - 2.0 * cross;
}

}  // namespace exbias
