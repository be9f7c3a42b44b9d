#include "exbias/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>
#include <stdexcept>

#include <fmt/format.h>

#include "exbias/csv.hpp"
#include "exbias/parallel.hpp"
#include "exbias/stats.hpp"

namespace exbias {

NoiseSchedule make_schedule(const ScheduleParams& p) {
  if (p.beta_start == 0.0 && p.beta_end == 0.0) return default_linear_schedule(p.steps);
  return make_linear_schedule(p.steps, p.beta_start, p.beta_end);
}

namespace {

Vec broadcast(const std::vector<double>& v, int dim, const char* key) {
  if (v.size() == 1) return Vec::Constant(dim, v.front());
  if (static_cast<int>(v.size()) != dim) {
    throw ConfigError(fmt::format("[data] {}: expected 1 or {} values, got {}", key, dim, v.size()));
  }
  return Eigen::Map<const Vec>(v.data(), dim);
}

std::optional<GaussianDataSpec> gaussian_spec(const DataParams& p) {
  if (p.kind != "gaussian") return std::nullopt;
  const Vec var = broadcast(p.var, p.dim, "var");
  if (var.minCoeff() < 0.0) throw ConfigError("[data] var: variances must be >= 0");
  return GaussianDataSpec::diagonal(broadcast(p.mean, p.dim, "mean"), var);
}

}  // namespace

std::unique_ptr<DataSampler> make_data(const DataParams& p) {
  if (p.kind == "gaussian") return std::make_unique<GaussianSampler>(*gaussian_spec(p));
  if (p.kind == "mixture") {
    std::vector<Vec> means;
    for (const auto& c : p.centers) means.push_back(Eigen::Map<const Vec>(c.data(), static_cast<Eigen::Index>(c.size())));
    if (means.empty() || static_cast<int>(means.front().size()) != p.dim) {
      throw ConfigError(fmt::format("[data] centers: every center needs dim = {} coordinates", p.dim));
    }
    return std::make_unique<MixtureSampler>(std::move(means), p.sigma);
  }
  if (p.kind == "moons") {
    if (p.dim != 2) throw ConfigError("[data] dim: moons data is 2-dimensional");
    return std::make_unique<TwoMoonsSampler>(p.noise);
  }
  throw ConfigError(fmt::format("[data] kind: unknown '{}'", p.kind));
}

ErrorProfile make_profile(const DenoiserParams& p) {
  return p.profile == "proportional" ? ErrorProfile::proportional(p.e) : ErrorProfile::constant(p.e);
}

SamplerConfig make_sampler(const SamplerParams& p, RespacedSchedule grid, std::uint64_t seed) {
  SamplerConfig c;
  if (p.kind == "ddpm") c.kind = SamplerKind::kDdpm;
  else if (p.kind == "ddim") c.kind = SamplerKind::kDdim;
  else if (p.kind == "euler") c.kind = SamplerKind::kEuler;
  else if (p.kind == "heun") c.kind = SamplerKind::kHeun;
  else throw ConfigError(fmt::format("[sampler] kind: unknown '{}'", p.kind));
  c.eta = p.eta;
  c.variance = p.variance == "upper" ? SamplingVariance::kUpperBound : SamplingVariance::kLowerBound;
  c.grid = std::move(grid);
  if (p.scaling == "uniform") c.scaling = ScalingSchedule::uniform(p.b);
  else if (p.scaling == "linear") c.scaling = ScalingSchedule::linear(p.k, p.b);
  c.seed = seed;
  try {
    c.validate();
  } catch (const std::exception& e) {
    throw ConfigError(fmt::format("[sampler]: {}", e.what()));
  }
  return c;
}

namespace {

Mlp load_weights(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("[denoiser] weights: cannot open '{}'", path));
  return Mlp::load(in);
}

}  // namespace

Setup build_setup(const RunConfig& config) {
  config.validate();
  Setup s;
  s.grid = respace(make_schedule(config.schedule), config.schedule.grid_steps);
  s.data = make_data(config.data);
  s.gaussian = gaussian_spec(config.data);
  s.sampler = make_sampler(config.sampler, s.grid, config.run.seed);
  const ErrorProfile profile = make_profile(config.denoiser);
  const std::string& kind = config.denoiser.kind;
  const int dim = s.data->dim();

  if (kind != "oracle" && kind != "mlp" && !s.gaussian) {
    throw ConfigError(fmt::format("[denoiser] kind = {} needs [data] kind = gaussian", kind));
  }
  if (kind == "oracle") {
    s.denoiser = std::make_unique<NoisyOracleDenoiser>(dim, profile);
    if (s.gaussian) {
      s.generator = std::make_unique<PerturbedAnalyticDenoiser>(*s.gaussian, profile);
      s.linear = LinearPredictor::oracle(profile);
    }
  } else if (kind == "analytic") {
    s.denoiser = std::make_unique<AnalyticDenoiser>(*s.gaussian);
    s.generator = std::make_unique<AnalyticDenoiser>(*s.gaussian);
    s.linear = LinearPredictor::analytic();
  } else if (kind == "perturbed") {
    s.denoiser = std::make_unique<PerturbedAnalyticDenoiser>(*s.gaussian, profile);
    s.generator = std::make_unique<PerturbedAnalyticDenoiser>(*s.gaussian, profile);
    s.linear = LinearPredictor::perturbed(profile);
  } else {
    Mlp model = load_weights(config.denoiser.weights);
    if (model.data_dim() != dim) {
      throw ConfigError(fmt::format("[denoiser] weights: model dimension {} does not match data dimension {}",
                                    model.data_dim(), dim));
    }
    s.denoiser = std::make_unique<MlpDenoiser>(model);
    s.generator = std::make_unique<MlpDenoiser>(std::move(model));
  }
  return s;
}

void write_config_header(std::ostream& out, const RunConfig& config) { write_comment_block(out, to_ini(config)); }

// ---- verify-theory ----

bool VerifyResult::all_pass() const {
  return std::all_of(rows.begin(), rows.end(), [](const CheckRow& r) { return r.pass; });
}

VerifyResult run_verify_theory(const RunConfig& config, int threads) {
  config.validate();
  const RespacedSchedule grid = respace(make_schedule(config.schedule), config.schedule.grid_steps);
  const NoiseSchedule& eff = grid.effective;
  const int T = grid.grid_steps();
  const auto data = make_data(config.data);
  const VerifyParams& v = config.verify;
  const HarnessOptions opts{threads, 1000};
  const long long n = config.run.n_per_step;

  auto sampler = [&](SamplerKind kind) {
    SamplerConfig c;
    c.kind = kind;
    c.grid = grid;
    c.seed = config.run.seed;
    return c;
  };
  auto oracle = [&](double e) { return NoisyOracleDenoiser(data->dim(), ErrorProfile::constant(e)); };
  auto tol = [&](double predicted, double se, double rel) { return std::max(rel * predicted, v.se_multiplier * se); };

  VerifyResult result;
  auto add = [&](std::string name, int t, double predicted, double measured, double se, double tolerance) {
    // Round-off floor: exact-zero predictions are measured as ~1e-33.
    CheckRow r{std::move(name), t, predicted, measured, se, std::max(tolerance, 1e-12), false};
    r.pass = std::abs(measured - predicted) <= r.tolerance;
    result.rows.push_back(std::move(r));
  };

  {
    const auto d = oracle(v.e_single);
    const BiasReport r = measure_single_step_error(d, sampler(SamplerKind::kDdpm), *data, n, opts);
    for (int t = 1; t < T; ++t) {
      const double p = ddpm_single_step_var(eff, t, v.e_single).sampled_var;
      add("ddpm_single_step", t, p, r.measured_var[r.row(t)], r.measured_var_se[r.row(t)],
          tol(p, r.measured_var_se[r.row(t)], v.rel_tol));
    }
  }
  {
    const auto d = oracle(v.e_single);
    const BiasReport r = measure_single_step_error(d, sampler(SamplerKind::kDdim), *data, n, opts);
    for (int t = 1; t < T; ++t) {
      const double p = ddim_single_step_var(eff, t, v.e_single).sampled_var;
      add("ddim_single_step", t, p, r.measured_var[r.row(t)], r.measured_var_se[r.row(t)],
          tol(p, r.measured_var_se[r.row(t)], v.rel_tol));
    }
  }
  if (T >= 3) {
    const auto d = oracle(v.e_two);
    const auto r = measure_two_step_var(d, sampler(SamplerKind::kDdpm), *data, n, opts);
    for (int t = 2; t < T; ++t) {
      const double p = ddpm_two_step_var(eff, t, v.e_two).sampled_var;
      const RunningStats& s = r[static_cast<std::size_t>(t)];
      add("ddpm_two_step", t - 1, p, s.variance(), s.variance_std_error(),
          tol(p, s.variance_std_error(), v.two_step_rel_tol));
    }
  }
  {
    const auto d = oracle(0.0);
    const BiasReport r = measure_single_step_error(d, sampler(SamplerKind::kDdpm), *data, n, opts);
    for (int t = 0; t < T; ++t) {
      const std::size_t i = r.row(t);
      add("zero_error_single_step", t, r.train_var[i], r.measured_var[i], r.measured_var_se[i],
          v.se_multiplier * r.measured_var_se[i]);
    }
  }
  {
    const auto d = oracle(v.e_single);
    const SamplerConfig c = sampler(SamplerKind::kDdpm);
    const BiasReport r = measure_multi_step_error(d, c, *data, config.run.n_chains, opts);
    const auto spec = GaussianDataSpec::unit(data->dim());  // the oracle chain does not depend on the data
    const ChainVariance exact = gaussian_chain_var(spec, c, LinearPredictor::oracle(ErrorProfile::constant(v.e_single)));
    for (int t = 0; t < T; ++t) {
      const std::size_t i = r.row(t);
      add("ddpm_chain", t, exact.residual[i].sampled_var, r.measured_var[i], r.measured_var_se[i],
          v.se_multiplier * r.measured_var_se[i]);
    }
  }
  return result;
}

void write_verify_csv(std::ostream& out, const VerifyResult& result) {
  out << "check,t,predicted,measured,se,tolerance,pass\n";
  for (const auto& r : result.rows) {
    out << fmt::format("{},{},{:.17g},{:.17g},{:.17g},{:.17g},{}\n", r.check, r.t, r.predicted, r.measured, r.se,
                       r.tolerance, r.pass ? "pass" : "fail");
  }
}

// ---- bias ----

BiasResult run_bias(const RunConfig& config, int threads) {
  const Setup s = build_setup(config);
  const HarnessOptions opts{threads, 1000};
  BiasResult result;
  result.report = measure_delta_t(*s.denoiser, s.sampler, *s.data, config.run.n_chains, opts);
  const BiasReport single = measure_single_step_error(*s.denoiser, s.sampler, *s.data, config.run.n_per_step, opts);
  result.report.single_err = single.single_err;
  if (s.linear && s.gaussian) result.oracle = gaussian_chain_var(*s.gaussian, s.sampler, *s.linear);
  return result;
}

void write_chain_oracle_csv(std::ostream& out, const ChainVariance& oracle) {
  out << "t,predicted_var,predicted_multi_err,predicted_marginal_var\n";
  for (std::size_t i = 0; i < oracle.residual.size(); ++i) {
    const auto& r = oracle.residual[i];
    out << fmt::format("{},{:.17g},{:.17g},{:.17g}\n", r.t, r.sampled_var, r.extra_term, oracle.marginal[i]);
  }
}

// ---- norms ----

double summed_norm_gap(const BiasReport& report) {
  double gap = 0.0;
  for (std::size_t i = 1; i < report.rows(); ++i) gap += std::abs(report.eps_norm_sample[i] - report.eps_norm_train[i]);
  return gap;
}

NormsResult run_norms(const RunConfig& config, int threads) {
  const Setup s = build_setup(config);
  NormsResult result;
  result.report = measure_eps_norms(*s.denoiser, s.sampler, *s.data, config.run.n_chains, {threads, 1000});
  for (std::size_t i = 1; i < result.report.rows(); ++i) {
    result.ratio.t.push_back(result.report.t[i]);
    result.ratio.ratio.push_back(result.report.norm_ratio[i]);
    result.ratio.n_samples.push_back(result.report.n[i]);
  }
  try {
    result.fit = invert_norm_ratio_detailed(result.ratio, {config.fit.t_min, config.fit.uniform_threshold});
  } catch (const std::exception& e) {
    result.fit_error = e.what();
  }
  return result;
}

// ---- sweep ----

namespace {

std::size_t argmin(const std::vector<SweepRow>& rows, double SweepRow::*field) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < rows.size(); ++i)
    if (rows[i].*field < rows[best].*field) best = i;
  return best;
}

}  // namespace

SweepResult run_sweep(const RunConfig& config, int threads) {
  const Setup s = build_setup(config);
  if (!s.generator) {
    throw ConfigError("[denoiser] kind = oracle can only be swept on gaussian data (generation needs a predictor)");
  }
  const HarnessOptions opts{threads, 1000};
  const std::vector<double> grid = config.sweep.grid();
  const auto train = training_eps_norms(*s.denoiser, s.grid, *s.data, config.run.seed, config.run.n_chains, opts);
  const Vec ref_mean = s.data->mean();
  const Mat ref_cov = s.data->covariance();

  SweepResult result;
  for (double b : grid) {
    SamplerConfig c = s.sampler;
    c.scaling = ScalingSchedule::uniform(b);
    const AnchoredRunStats run = run_anchored_chains(*s.denoiser, c, *s.data, config.run.n_chains, opts);
    SweepRow row;
    row.b = b;
    const RunningStats& r1 = run.residual[1];
    const double train1 = s.grid.effective.train_var(1);
    row.delta1 = frechet_gap_1d(r1.variance(), train1);
    // Delta method: d delta / d var = (sqrt(var) - sqrt(train)) / sqrt(var).
    const double root = std::sqrt(r1.variance());
    row.delta1_se = root > 0 ? std::abs(root - std::sqrt(train1)) / root * r1.variance_std_error() : 0.0;
    for (int t = 1; t <= s.grid.grid_steps(); ++t) {
      row.norm_gap += std::abs(run.eps_norm[static_cast<std::size_t>(t)].mean() - train[static_cast<std::size_t>(t)].mean());
    }
    const Mat samples = generate_samples(*s.generator, c, config.run.n_samples, opts);
    Vec mean;
    Mat cov;
    sample_moments(samples, mean, cov);
    row.frechet = frechet_gaussian(mean, cov, ref_mean, ref_cov);
    result.rows.push_back(row);
  }
  result.argmin_delta = argmin(result.rows, &SweepRow::delta1);
  result.argmin_frechet = argmin(result.rows, &SweepRow::frechet);
  if (result.rows.size() >= 2) {
    std::vector<double> d, f;
    for (const auto& r : result.rows) {
      d.push_back(r.delta1);
      f.push_back(r.frechet);
    }
    result.spearman = spearman(d, f);
  } else {
    result.spearman = std::numeric_limits<double>::quiet_NaN();
  }
  return result;
}

void write_sweep_csv(std::ostream& out, const SweepResult& result) {
  out << "b,delta_1,delta_1_se,frechet,norm_gap,argmin_delta,argmin_frechet\n";
  for (std::size_t i = 0; i < result.rows.size(); ++i) {
    const auto& r = result.rows[i];
    out << fmt::format("{},{:.17g},{:.17g},{:.17g},{:.17g},{},{}\n", r.b, r.delta1, r.delta1_se, r.frechet, r.norm_gap,
                       i == result.argmin_delta ? 1 : 0, i == result.argmin_frechet ? 1 : 0);
  }
  out << fmt::format("# spearman(delta_1, frechet) = {:.6f}\n", result.spearman);
}

// ---- train ----

TrainConfig make_train_config(const RunConfig& config) {
  TrainConfig t;
  t.steps = config.train.steps;
  t.batch = config.train.batch;
  t.learning_rate = config.train.learning_rate;
  t.final_learning_rate = config.train.final_learning_rate;
  t.seed = config.run.seed;
  t.log_every = config.train.log_every;
  return t;
}

TrainResult run_train(const RunConfig& config) {
  config.validate();
  const auto data = make_data(config.data);
  const NoiseSchedule schedule = make_schedule(config.schedule);
  return train_mlp(*data, schedule, Mlp::initialized(data->dim(), config.train.hidden, config.run.seed),
                   make_train_config(config));
}

// ---- sample ----

std::vector<ChainRecord> run_sample(const RunConfig& config, int threads) {
  const Setup s = build_setup(config);
  const long long n = config.run.n_chains;
  const bool anchored = config.denoiser.kind == "oracle";
  std::vector<ChainRecord> out(static_cast<std::size_t>(n));
  parallel_for_blocks(block_count(static_cast<std::size_t>(n)), threads, [&](std::size_t b) {
    const std::size_t begin = b * kChainsPerBlock;
    const std::size_t end = std::min(static_cast<std::size_t>(n), begin + kChainsPerBlock);
    for (std::size_t j = begin; j < end; ++j) {
      ChainInit init = ChainInit::from_noise();
      if (anchored) {
        Rng data_rng(config.run.seed, StreamPurpose::kData, j);
        init = ChainInit::anchored(s.data->sample(data_rng));
      }
      out[j] = run_chain(s.sampler, *s.denoiser, init, j);
    }
  });
  return out;
}

// ---- ODE solver comparison ----

Vec probability_flow_reference(const AnalyticDenoiser& denoiser, const Vec& x, double ab_from, int steps) {
  if (steps < 1) throw std::invalid_argument("reference integration needs at least one step");
  if (!(ab_from > 0.0 && ab_from < 1.0)) throw std::invalid_argument("start alpha_bar must lie in (0, 1)");
  // y = x / sqrt(ab) obeys dy/dsigma = eps(x, sigma).
  const double sigma0 = std::sqrt((1.0 - ab_from) / ab_from);
  const double h = sigma0 / steps;
  Vec y = x / std::sqrt(ab_from);
  PredictContext ctx;
  for (int i = 0; i < steps; ++i) {
    const double sigma = sigma0 - i * h;
    const double ab = 1.0 / (1.0 + sigma * sigma);
    const Vec xi = y * std::sqrt(ab);
    y -= h * denoiser.predict(xi, {0, ab, 0.0}, ctx).eps;
  }
  return y;
}

OdeComparison compare_ode_solvers(const GaussianDataSpec& spec, const RespacedSchedule& grid, long long n_chains,
                                  std::uint64_t seed, int reference_steps, int threads) {
  const AnalyticDenoiser denoiser(spec);
  const GaussianSampler data(spec);
  const HarnessOptions opts{threads, 1000};
  OdeComparison out;
  const double ab_T = grid.effective.alpha_bar(grid.grid_steps());

  for (SamplerKind kind : {SamplerKind::kEuler, SamplerKind::kHeun}) {
    SamplerConfig c;
    c.kind = kind;
    c.grid = grid;
    c.seed = seed;
    const std::size_t n_blocks = block_count(static_cast<std::size_t>(n_chains));
    std::vector<RunningStats> err(n_blocks);
    parallel_for_blocks(n_blocks, threads, [&](std::size_t b) {
      const std::size_t begin = b * kChainsPerBlock;
      const std::size_t end = std::min(static_cast<std::size_t>(n_chains), begin + kChainsPerBlock);
      for (std::size_t j = begin; j < end; ++j) {
        const ChainRecord rec = run_chain(c, denoiser, ChainInit::from_noise(), j);
        const Vec ref = probability_flow_reference(denoiser, rec.states.front(), ab_T, reference_steps);
        err[b].add((rec.states.back() - ref).norm());
      }
    });
    RunningStats total;
    for (const auto& e : err) total.merge(e);
    const double gap = summed_norm_gap(measure_eps_norms(denoiser, c, data, n_chains, opts));
    (kind == SamplerKind::kEuler ? out.euler_error : out.heun_error) = total.mean();
    (kind == SamplerKind::kEuler ? out.euler_norm_gap : out.heun_norm_gap) = gap;
  }
  return out;
}

}  // namespace exbias
