#pragma once

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace exbias {

/// Raised for malformed or inconsistent configuration; `what()` names the
/// offending line or [section] key.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ScheduleParams {
  int steps = 1000;
  /// Zero selects the default linear endpoints scaled by 1000 / steps.
  double beta_start = 0.0;
  double beta_end = 0.0;
  int grid_steps = 20;
};

struct DataParams {
  std::string kind = "gaussian";  // gaussian | mixture | moons
  int dim = 1;
  std::vector<double> mean{0.0};  // one value broadcasts
  std::vector<double> var{1.0};
  std::vector<std::vector<double>> centers{{-1.5, 0.0}, {1.5, 0.0}};
  double sigma = 0.5;
  double noise = 0.1;
};

struct DenoiserParams {
  std::string kind = "oracle";  // oracle | analytic | perturbed | mlp
  std::string profile = "constant";  // constant | proportional
  double e = 0.1;
  std::string weights;
};

struct SamplerParams {
  std::string kind = "ddpm";  // ddpm | ddim | euler | heun
  double eta = 0.0;
  std::string variance = "lower";  // lower | upper
  std::string scaling = "none";    // none | uniform | linear
  double k = 0.0;
  double b = 1.0;
};

struct RunParams {
  std::uint64_t seed = 0;
  long long n_chains = 50000;
  long long n_per_step = 200000;
  long long n_samples = 10000;
};

struct SweepParams {
  double b_min = 1.0;
  double b_max = 1.05;
  double b_step = 0.005;

  std::vector<double> grid() const;
};

struct FitParams {
  int t_min = 5;
  double uniform_threshold = 0.002;
};

struct TrainParams {
  int steps = 20000;
  int batch = 256;
  double learning_rate = 2e-3;
  double final_learning_rate = 1e-4;
  std::vector<int> hidden{64, 64, 64};
  int log_every = 100;
};

struct VerifyParams {
  double e_single = 0.1;
  double e_two = 0.05;
  double rel_tol = 0.02;
  double two_step_rel_tol = 0.05;
  double se_multiplier = 3.0;
};

/// Everything a run depends on. Thread count and output location are
/// deliberately absent: they must not change results.
struct RunConfig {
  /// verify-theory | sample | bias | norms | sweep | train; empty when unset.
  std::string command;
  ScheduleParams schedule;
  DataParams data;
  DenoiserParams denoiser;
  SamplerParams sampler;
  RunParams run;
  SweepParams sweep;
  FitParams fit;
  TrainParams train;
  VerifyParams verify;

  void validate() const;
};

/// Parses sectioned key=value text. Missing keys keep their defaults;
/// unknown sections or keys are errors.
RunConfig parse_config(std::istream& in, const std::string& source = "<config>");

/// Accepts either a config file or an emitted CSV, whose "# " header lines
/// carry the config it was produced with.
RunConfig load_config(const std::string& path);

/// Applies one "section.key=value" override. Values are type-checked but the
/// whole config is not validated, so call validate() after the last override.
void apply_override(RunConfig& config, const std::string& assignment);

/// Canonical text form; parse_config(to_ini(c)) reproduces c exactly.
std::string to_ini(const RunConfig& config);

}  // namespace exbias
