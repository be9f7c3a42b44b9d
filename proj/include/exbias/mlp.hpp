#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "exbias/data.hpp"
#include "exbias/denoiser.hpp"

namespace exbias {

/// Fully connected epsilon network: input concat(x, t/T), SiLU hidden layers,
/// linear output of the data dimension.
class Mlp {
 public:
  struct Layer {
    Mat weight;  // out x in
    Vec bias;
  };

  /// All weights and biases zero.
  Mlp(int data_dim, const std::vector<int>& hidden);

  /// Normal(0, 1/fan_in) weights, zero biases, from a seeded stream.
  static Mlp initialized(int data_dim, const std::vector<int>& hidden, std::uint64_t seed);

  int data_dim() const { return data_dim_; }
  std::vector<int> hidden_widths() const;
  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& layers() { return layers_; }

  Vec forward(const Vec& x, double time) const;
  /// inputs: (data_dim + 1) x batch, one query per column.
  Mat forward_batch(const Mat& inputs) const;

  /// Mean squared error per coordinate against `targets` and its gradient.
  double loss_and_gradient(const Mat& inputs, const Mat& targets, std::vector<Layer>& grads) const;

  void save(std::ostream& out) const;
  static Mlp load(std::istream& in);

  bool operator==(const Mlp& other) const;

 private:
  int data_dim_;
  std::vector<Layer> layers_;
};

class MlpDenoiser final : public Denoiser {
 public:
  explicit MlpDenoiser(Mlp model) : model_(std::move(model)) {}
  int dim() const override { return model_.data_dim(); }
  EpsPrediction predict(const Vec& x, const NoiseLevel& level, PredictContext& ctx) const override;
  const Mlp& model() const { return model_; }

 private:
  Mlp model_;
};

EpsPrediction mlp_eps(const Mlp& model, const NoiseSchedule& schedule, const Vec& x, int t);

struct TrainConfig {
  int steps = 20000;
  int batch = 256;
  double learning_rate = 2e-3;
  double final_learning_rate = 1e-4;  // geometric decay towards this
  double rms_decay = 0.99;
  double rms_epsilon = 1e-8;
  std::uint64_t seed = 0;
  int log_every = 100;
};

struct TrainResult {
  Mlp model;
  double initial_loss = 0;
  /// Mean batch loss over the last logging window.
  double final_loss = 0;
  std::vector<std::pair<int, double>> curve;  // (step, window-mean loss)
};

/// Minimizes E||eps - eps_theta(sqrt(ab_t) x0 + sqrt(1-ab_t) eps, t/T)||^2 / N with
/// t ~ U{1..T}, using RMSProp without momentum. Throws on a non-finite loss.
TrainResult train_mlp(const DataSampler& data, const NoiseSchedule& schedule, Mlp init,
                      const TrainConfig& config);

void write_loss_csv(std::ostream& out, const TrainResult& result);

}  // namespace exbias
