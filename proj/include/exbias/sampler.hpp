#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include "exbias/denoiser.hpp"
#include "exbias/scaling.hpp"
#include "exbias/schedule.hpp"

namespace exbias {

enum class SamplerKind { kDdpm, kDdim, kEuler, kHeun };

const char* to_string(SamplerKind kind);

struct SamplerConfig {
  SamplerKind kind = SamplerKind::kDdpm;
  /// DDIM noise level: sigma_t = eta * sqrt(posterior variance).
  double eta = 0.0;
  /// Injected variance of the DDPM sampler.
  SamplingVariance variance = SamplingVariance::kLowerBound;
  RespacedSchedule grid;
  std::optional<ScalingSchedule> scaling;
  std::uint64_t seed = 0;

  void validate() const;
  /// lambda at grid index t, 1 when scaling is absent.
  double lambda(int t) const { return scaling ? scaling->at(t) : 1.0; }
};

/// (1/sqrt(alpha_t)) (x - beta_t / sqrt(1 - alpha_bar_t) eps) + sqrt(var_t) noise.
Vec ddpm_step(const Vec& x, int t, const EpsPrediction& pred, const NoiseSchedule& schedule, const Vec& noise,
              SamplingVariance variance = SamplingVariance::kLowerBound);

/// sigma for a DDIM jump t -> t_prev: eta times the posterior std of that jump.
double ddim_sigma(const NoiseSchedule& schedule, int t, int t_prev, double eta);

/// sqrt(ab_prev) x0_hat + sqrt(1 - ab_prev - sigma^2) eps + sigma noise.
Vec ddim_step(const Vec& x, int t, int t_prev, const EpsPrediction& pred, double eta, const NoiseSchedule& schedule,
              const Vec& noise);

/// Divides eps by lambda and re-derives x0_hat. lambda == 1 returns `raw` untouched.
EpsPrediction scale_prediction(const EpsPrediction& raw, const Vec& x, double alpha_bar, double lambda);

struct OdeStep {
  Vec next;
  /// Raw denoiser outputs: one for Euler, two for Heun (predictor, corrector).
  std::vector<EpsPrediction> evals;
};

/// Probability-flow step t -> t_prev on the grid; equals DDIM with eta = 0.
OdeStep euler_step(const Vec& x, int t, int t_prev, const Denoiser& denoiser, const RespacedSchedule& grid,
                   const ScalingSchedule* scaling, PredictContext& ctx);

/// Euler predictor, then a corrector that averages the (scaled) eps at both
/// ends and re-applies the DDIM(eta=0) update from (x, t). Falls back to Euler
/// when t_prev == 0, where eps is undefined.
OdeStep heun_step(const Vec& x, int t, int t_prev, const Denoiser& denoiser, const RespacedSchedule& grid,
                  const ScalingSchedule* scaling, PredictContext& ctx);

/// How a chain starts.
struct ChainInit {
  /// Grid index the chain starts from (0 means T').
  int start = 0;
  /// Known x_0: the start state is built by the forward process from it.
  std::optional<Vec> anchor_x0;
  /// Explicit start state; used when no anchor is given.
  std::optional<Vec> state;

  static ChainInit from_noise() { return {}; }
  static ChainInit anchored(Vec x0, int start = 0) { return {start, std::move(x0), std::nullopt}; }
  static ChainInit explicit_state(Vec x, int start = 0) { return {start, std::nullopt, std::move(x)}; }
};

struct StepRecord {
  int t = 0;
  double lambda = 1.0;
  std::vector<EpsPrediction> raw;  // denoiser outputs before scaling
  Vec noise;                       // injected standard-normal vector (zeros if none)
};

struct ChainRecord {
  std::uint64_t seed = 0;
  std::uint64_t chain = 0;
  std::vector<int> t;        // grid index of each state, descending to 0
  std::vector<Vec> states;   // states[0] is the start state
  std::vector<StepRecord> steps;
  std::optional<Vec> anchor_x0;

  bool operator==(const ChainRecord& other) const;
};

/// Receives every step of a running chain. Diagnostics use this to aggregate
/// without materializing records.
class ChainObserver {
 public:
  virtual ~ChainObserver() = default;
  virtual void on_start(int /*t*/, const Vec& /*state*/) {}
  virtual void on_step(int t, const Vec& x, const StepRecord& step, const Vec& next) = 0;
};

/// Runs one chain from init.start (or T') down to grid index `stop`.
/// Random streams derive from (config.seed, chain_index) only.
void run_chain_observed(const SamplerConfig& config, const Denoiser& denoiser, const ChainInit& init,
                        std::uint64_t chain_index, ChainObserver& observer, int stop = 0);

ChainRecord run_chain(const SamplerConfig& config, const Denoiser& denoiser, const ChainInit& init,
                      std::uint64_t chain_index = 0, int stop = 0);

/// Rows chain_id,t,x0..x{N-1},eps_norm. eps_norm is that of the raw
/// prediction made at the state (empty for the terminal state).
void write_chain_csv_header(std::ostream& out, int dim);
void write_chain_csv_rows(std::ostream& out, const ChainRecord& record);

}  // namespace exbias
