#include "exbias/sampler.hpp"

#include <cmath>
#include <ostream>
#include <stdexcept>

#include <fmt/format.h>

namespace exbias {

const char* to_string(SamplerKind kind) {
  switch (kind) {
    case SamplerKind::kDdpm: return "ddpm";
    case SamplerKind::kDdim: return "ddim";
    case SamplerKind::kEuler: return "euler";
    case SamplerKind::kHeun: return "heun";
  }
  return "?";
}

void SamplerConfig::validate() const {
  if (!(eta >= 0.0 && eta <= 1.0)) throw std::invalid_argument(fmt::format("eta = {} outside [0, 1]", eta));
  if (scaling) scaling->validate(grid.grid_steps());
}

Vec ddpm_step(const Vec& x, int t, const EpsPrediction& pred, const NoiseSchedule& schedule, const Vec& noise,
              SamplingVariance variance) {
  if (t < 1) throw std::out_of_range(fmt::format("DDPM step needs t >= 1, got {}", t));
  const double coef = schedule.beta(t) / std::sqrt(1.0 - schedule.alpha_bar(t));
  Vec out = (x - coef * pred.eps) / std::sqrt(schedule.alpha(t));
  const double var = schedule.sampling_var(t, variance);
  if (var > 0.0) out += std::sqrt(var) * noise;
  return out;
}

double ddim_sigma(const NoiseSchedule& schedule, int t, int t_prev, double eta) {
  if (eta == 0.0) return 0.0;
  const double ab = schedule.alpha_bar(t);
  const double ab_prev = schedule.alpha_bar(t_prev);
  const double posterior = (1.0 - ab_prev) / (1.0 - ab) * (1.0 - ab / ab_prev);
  return eta * std::sqrt(posterior);
}

Vec ddim_step(const Vec& x, int t, int t_prev, const EpsPrediction& pred, double eta, const NoiseSchedule& schedule,
              const Vec& noise) {
  if (!(t > t_prev && t_prev >= 0)) {
    throw std::out_of_range(fmt::format("DDIM step needs t > t_prev >= 0, got {} -> {}", t, t_prev));
  }
  (void)x;
  const double ab_prev = schedule.alpha_bar(t_prev);
  const double sigma = ddim_sigma(schedule, t, t_prev, eta);
  const double dir_var = 1.0 - ab_prev - sigma * sigma;
  if (dir_var < 0.0) {
    throw std::domain_error(fmt::format("DDIM step {} -> {}: 1 - ab_prev - sigma^2 = {} < 0", t, t_prev, dir_var));
  }
  Vec out = std::sqrt(ab_prev) * pred.x0_hat + std::sqrt(dir_var) * pred.eps;
  if (sigma > 0.0) out += sigma * noise;
  return out;
}

EpsPrediction scale_prediction(const EpsPrediction& raw, const Vec& x, double alpha_bar, double lambda) {
  if (lambda == 1.0) return raw;
  return EpsPrediction::from_eps(x, alpha_bar, raw.eps / lambda);
}

namespace {

double lambda_of(const ScalingSchedule* scaling, int t) { return scaling ? scaling->at(t) : 1.0; }

}  // namespace

OdeStep euler_step(const Vec& x, int t, int t_prev, const Denoiser& denoiser, const RespacedSchedule& grid,
                   const ScalingSchedule* scaling, PredictContext& ctx) {
  const NoiseSchedule& s = grid.effective;
  OdeStep out;
  out.evals.push_back(denoiser.predict(x, level_at(grid, t), ctx));
  const EpsPrediction used = scale_prediction(out.evals[0], x, s.alpha_bar(t), lambda_of(scaling, t));
  out.next = ddim_step(x, t, t_prev, used, 0.0, s, Vec());
  return out;
}

OdeStep heun_step(const Vec& x, int t, int t_prev, const Denoiser& denoiser, const RespacedSchedule& grid,
                  const ScalingSchedule* scaling, PredictContext& ctx) {
  OdeStep out = euler_step(x, t, t_prev, denoiser, grid, scaling, ctx);
  if (t_prev == 0) return out;

  const NoiseSchedule& s = grid.effective;
  const Vec& predicted = out.next;
  out.evals.push_back(denoiser.predict(predicted, level_at(grid, t_prev), ctx));
  const double lam_t = lambda_of(scaling, t);
  const double lam_prev = lambda_of(scaling, t_prev);
  const Vec eps1 = lam_t == 1.0 ? out.evals[0].eps : Vec(out.evals[0].eps / lam_t);
  const Vec eps2 = lam_prev == 1.0 ? out.evals[1].eps : Vec(out.evals[1].eps / lam_prev);
  const EpsPrediction avg = EpsPrediction::from_eps(x, s.alpha_bar(t), 0.5 * (eps1 + eps2));
  out.next = ddim_step(x, t, t_prev, avg, 0.0, s, Vec());
  return out;
}

void run_chain_observed(const SamplerConfig& config, const Denoiser& denoiser, const ChainInit& init,
                        std::uint64_t chain_index, ChainObserver& observer, int stop) {
  config.validate();
  const RespacedSchedule& grid = config.grid;
  const NoiseSchedule& s = grid.effective;
  const int start = init.start == 0 ? grid.grid_steps() : init.start;
  if (start < 1 || start > grid.grid_steps() || stop < 0 || stop >= start) {
    throw std::out_of_range(fmt::format("chain range {} -> {} invalid on a {}-step grid", start, stop,
                                        grid.grid_steps()));
  }
  const int dim = denoiser.dim();

  Rng init_rng(config.seed, StreamPurpose::kInit, chain_index);
  Rng sampler_rng(config.seed, StreamPurpose::kSampler, chain_index);
  Rng oracle_rng(config.seed, StreamPurpose::kOracle, chain_index);

  Vec x;
  if (init.anchor_x0) {
    if (init.anchor_x0->size() != dim) throw std::invalid_argument("anchor x_0 has the wrong dimension");
    const double ab = s.alpha_bar(start);
    x = std::sqrt(ab) * *init.anchor_x0 + std::sqrt(1.0 - ab) * init_rng.normal_vec(dim);
  } else if (init.state) {
    if (init.state->size() != dim) throw std::invalid_argument("initial state has the wrong dimension");
    x = *init.state;
  } else {
    x = init_rng.normal_vec(dim);
  }

  PredictContext ctx{init.anchor_x0 ? &*init.anchor_x0 : nullptr, &oracle_rng};
  observer.on_start(start, x);

  StepRecord step;
  for (int t = start; t > stop; --t) {
    const int t_prev = t - 1;
    step.t = t;
    step.lambda = config.lambda(t);
    step.raw.clear();
    Vec next;
    try {
      switch (config.kind) {
        case SamplerKind::kDdpm: {
          step.raw.push_back(denoiser.predict(x, level_at(grid, t), ctx));
          step.noise = t_prev == 0 ? Vec::Zero(dim) : sampler_rng.normal_vec(dim);
          const EpsPrediction used = scale_prediction(step.raw[0], x, s.alpha_bar(t), step.lambda);
          next = ddpm_step(x, t, used, s, step.noise, config.variance);
          break;
        }
        case SamplerKind::kDdim: {
          step.raw.push_back(denoiser.predict(x, level_at(grid, t), ctx));
          const bool noisy = config.eta > 0.0 && t_prev > 0;
          step.noise = noisy ? sampler_rng.normal_vec(dim) : Vec::Zero(dim);
          const EpsPrediction used = scale_prediction(step.raw[0], x, s.alpha_bar(t), step.lambda);
          next = ddim_step(x, t, t_prev, used, noisy ? config.eta : 0.0, s, step.noise);
          break;
        }
        case SamplerKind::kEuler:
        case SamplerKind::kHeun: {
          const ScalingSchedule* sc = config.scaling ? &*config.scaling : nullptr;
          OdeStep r = config.kind == SamplerKind::kEuler ? euler_step(x, t, t_prev, denoiser, grid, sc, ctx)
                                                         : heun_step(x, t, t_prev, denoiser, grid, sc, ctx);
          step.raw = std::move(r.evals);
          step.noise = Vec::Zero(dim);
          next = std::move(r.next);
          break;
        }
      }
    } catch (const std::exception& e) {
      throw std::runtime_error(fmt::format("{} step at t={}: {}", to_string(config.kind), t, e.what()));
    }
    observer.on_step(t, x, step, next);
    x = std::move(next);
  }
}

namespace {

class Recorder final : public ChainObserver {
 public:
  explicit Recorder(ChainRecord& rec) : rec_(rec) {}
  void on_start(int t, const Vec& state) override {
    rec_.t.push_back(t);
    rec_.states.push_back(state);
  }
  void on_step(int t, const Vec&, const StepRecord& step, const Vec& next) override {
    rec_.steps.push_back(step);
    rec_.t.push_back(t - 1);
    rec_.states.push_back(next);
  }

 private:
  ChainRecord& rec_;
};

}  // namespace

ChainRecord run_chain(const SamplerConfig& config, const Denoiser& denoiser, const ChainInit& init,
                      std::uint64_t chain_index, int stop) {
  ChainRecord rec;
  rec.seed = config.seed;
  rec.chain = chain_index;
  rec.anchor_x0 = init.anchor_x0;
  Recorder recorder(rec);
  run_chain_observed(config, denoiser, init, chain_index, recorder, stop);
  return rec;
}

namespace {

bool same(const Vec& a, const Vec& b) { return a.size() == b.size() && a == b; }

bool same(const EpsPrediction& a, const EpsPrediction& b) { return same(a.eps, b.eps) && same(a.x0_hat, b.x0_hat); }

}  // namespace

bool ChainRecord::operator==(const ChainRecord& o) const {
  if (seed != o.seed || chain != o.chain || t != o.t || states.size() != o.states.size() ||
      steps.size() != o.steps.size() || anchor_x0.has_value() != o.anchor_x0.has_value()) {
    return false;
  }
  if (anchor_x0 && !same(*anchor_x0, *o.anchor_x0)) return false;
  for (std::size_t i = 0; i < states.size(); ++i)
    if (!same(states[i], o.states[i])) return false;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const auto& a = steps[i];
    const auto& b = o.steps[i];
    if (a.t != b.t || a.lambda != b.lambda || a.raw.size() != b.raw.size() || !same(a.noise, b.noise)) return false;
    for (std::size_t j = 0; j < a.raw.size(); ++j)
      if (!same(a.raw[j], b.raw[j])) return false;
  }
  return true;
}

void write_chain_csv_header(std::ostream& out, int dim) {
  out << "chain_id,t";
  for (int i = 0; i < dim; ++i) out << ",x" << i;
  out << ",eps_norm\n";
}

void write_chain_csv_rows(std::ostream& out, const ChainRecord& record) {
  for (std::size_t i = 0; i < record.states.size(); ++i) {
    out << record.chain << ',' << record.t[i];
    for (Eigen::Index d = 0; d < record.states[i].size(); ++d) out << fmt::format(",{:.17g}", record.states[i][d]);
    if (i < record.steps.size()) {
      out << fmt::format(",{:.17g}\n", record.steps[i].raw.front().eps.norm());
    } else {
      out << ",\n";
    }
  }
}

}  // namespace exbias
