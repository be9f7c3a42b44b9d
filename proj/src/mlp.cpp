#include "exbias/mlp.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>

#include <fmt/format.h>

namespace exbias {

namespace {

constexpr const char* kMagic = "exbias-mlp";
constexpr int kFormatVersion = 1;

inline double sigmoid(double a) { return 1.0 / (1.0 + std::exp(-a)); }

Mat silu(const Mat& z) {
  return z.unaryExpr([](double a) { return a * sigmoid(a); });
}

Mat silu_grad(const Mat& z) {
  return z.unaryExpr([](double a) {
    const double s = sigmoid(a);
    return s * (1.0 + a * (1.0 - s));
  });
}

}  // namespace

Mlp::Mlp(int data_dim, const std::vector<int>& hidden) : data_dim_(data_dim) {
  if (data_dim < 1) throw std::invalid_argument("MLP data dimension must be positive");
  int in = data_dim + 1;
  for (int w : hidden) {
    if (w < 1) throw std::invalid_argument("MLP hidden widths must be positive");
    layers_.push_back({Mat::Zero(w, in), Vec::Zero(w)});
    in = w;
  }
  layers_.push_back({Mat::Zero(data_dim, in), Vec::Zero(data_dim)});
}

Mlp Mlp::initialized(int data_dim, const std::vector<int>& hidden, std::uint64_t seed) {
  Mlp m(data_dim, hidden);
  Rng rng(seed, StreamPurpose::kWeights, 0);
  for (auto& layer : m.layers_) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(layer.weight.cols()));
    for (Eigen::Index j = 0; j < layer.weight.cols(); ++j) {
      for (Eigen::Index i = 0; i < layer.weight.rows(); ++i) layer.weight(i, j) = scale * rng.normal();
    }
  }
  return m;
}

std::vector<int> Mlp::hidden_widths() const {
  std::vector<int> w;
  for (std::size_t l = 0; l + 1 < layers_.size(); ++l) w.push_back(static_cast<int>(layers_[l].bias.size()));
  return w;
}

Vec Mlp::forward(const Vec& x, double time) const {
  if (x.size() != data_dim_) {
    throw std::invalid_argument(fmt::format("MLP input has dimension {}, expected {}", x.size(), data_dim_));
  }
  Mat in(data_dim_ + 1, 1);
  in.topRows(data_dim_) = x;
  in(data_dim_, 0) = time;
  return forward_batch(in).col(0);
}

Mat Mlp::forward_batch(const Mat& inputs) const {
  if (inputs.rows() != data_dim_ + 1) throw std::invalid_argument("MLP batch has the wrong input width");
  Mat a = inputs;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Mat z = layers_[l].weight * a;
    z.colwise() += layers_[l].bias;
    a = l + 1 < layers_.size() ? silu(z) : std::move(z);
  }
  return a;
}

double Mlp::loss_and_gradient(const Mat& inputs, const Mat& targets, std::vector<Layer>& grads) const {
  const std::size_t n_layers = layers_.size();
  std::vector<Mat> pre(n_layers);
  std::vector<Mat> act(n_layers + 1);
  act[0] = inputs;
  for (std::size_t l = 0; l < n_layers; ++l) {
    pre[l] = layers_[l].weight * act[l];
    pre[l].colwise() += layers_[l].bias;
    act[l + 1] = l + 1 < n_layers ? silu(pre[l]) : pre[l];
  }
  const Mat diff = act[n_layers] - targets;
  const double count = static_cast<double>(diff.size());
  const double loss = diff.squaredNorm() / count;

  grads.resize(n_layers);
  Mat delta = (2.0 / count) * diff;
  for (std::size_t l = n_layers; l-- > 0;) {
    grads[l].weight = delta * act[l].transpose();
    grads[l].bias = delta.rowwise().sum();
    if (l > 0) delta = (layers_[l].weight.transpose() * delta).cwiseProduct(silu_grad(pre[l - 1]));
  }
  return loss;
}

void Mlp::save(std::ostream& out) const {
  out << kMagic << ' ' << kFormatVersion << '\n';
  out << "data_dim " << data_dim_ << '\n';
  out << "layers " << layers_.size() << '\n';
  for (const auto& layer : layers_) {
    out << "layer " << layer.weight.rows() << ' ' << layer.weight.cols() << '\n';
    for (Eigen::Index i = 0; i < layer.weight.rows(); ++i) {
      for (Eigen::Index j = 0; j < layer.weight.cols(); ++j) {
        out << (j ? " " : "") << fmt::format("{:a}", layer.weight(i, j));
      }
      out << '\n';
    }
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) {
      out << (i ? " " : "") << fmt::format("{:a}", layer.bias[i]);
    }
    out << '\n';
  }
}

namespace {

void expect_token(std::istream& in, const std::string& want) {
  std::string got;
  if (!(in >> got) || got != want) {
    throw std::runtime_error(fmt::format("MLP weight file: expected '{}', found '{}'", want, got));
  }
}

double read_hexfloat(std::istream& in) {
  std::string tok;
  if (!(in >> tok)) throw std::runtime_error("MLP weight file: truncated");
  std::size_t used = 0;
  const double v = std::stod(tok, &used);
  if (used != tok.size()) throw std::runtime_error(fmt::format("MLP weight file: bad number '{}'", tok));
  return v;
}

}  // namespace

Mlp Mlp::load(std::istream& in) {
  expect_token(in, kMagic);
  int version = 0;
  if (!(in >> version) || version != kFormatVersion) {
    throw std::runtime_error(fmt::format("MLP weight file: unsupported version {}", version));
  }
  int data_dim = 0;
  std::size_t n_layers = 0;
  expect_token(in, "data_dim");
  in >> data_dim;
  expect_token(in, "layers");
  in >> n_layers;
  if (!in || data_dim < 1 || n_layers < 1) throw std::runtime_error("MLP weight file: bad header");

  std::vector<Layer> layers;
  int expected_in = data_dim + 1;
  for (std::size_t l = 0; l < n_layers; ++l) {
    expect_token(in, "layer");
    Eigen::Index rows = 0, cols = 0;
    in >> rows >> cols;
    if (!in || cols != expected_in || rows < 1) {
      throw std::runtime_error(fmt::format("MLP weight file: layer {} has shape {}x{}", l, rows, cols));
    }
    Layer layer{Mat(rows, cols), Vec(rows)};
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) layer.weight(i, j) = read_hexfloat(in);
    for (Eigen::Index i = 0; i < rows; ++i) layer.bias[i] = read_hexfloat(in);
    expected_in = static_cast<int>(rows);
    layers.push_back(std::move(layer));
  }
  if (expected_in != data_dim) throw std::runtime_error("MLP weight file: output width != data_dim");

  std::vector<int> hidden;
  for (std::size_t l = 0; l + 1 < layers.size(); ++l) hidden.push_back(static_cast<int>(layers[l].bias.size()));
  Mlp m(data_dim, hidden);
  m.layers_ = std::move(layers);
  return m;
}

bool Mlp::operator==(const Mlp& other) const {
  if (data_dim_ != other.data_dim_ || layers_.size() != other.layers_.size()) return false;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& a = layers_[l];
    const auto& b = other.layers_[l];
    if (a.weight.rows() != b.weight.rows() || a.weight.cols() != b.weight.cols()) return false;
    if (a.weight != b.weight || a.bias != b.bias) return false;
  }
  return true;
}

EpsPrediction MlpDenoiser::predict(const Vec& x, const NoiseLevel& level, PredictContext&) const {
  return EpsPrediction::from_eps(x, level.alpha_bar, model_.forward(x, level.time));
}

EpsPrediction mlp_eps(const Mlp& model, const NoiseSchedule& schedule, const Vec& x, int t) {
  if (t < 1 || t > schedule.steps()) throw std::out_of_range(fmt::format("timestep {} out of range", t));
  MlpDenoiser d(model);
  PredictContext ctx;
  return d.predict(x, level_at(schedule, t), ctx);
}

TrainResult train_mlp(const DataSampler& data, const NoiseSchedule& schedule, Mlp init,
                      const TrainConfig& config) {
  if (data.dim() != init.data_dim()) throw std::invalid_argument("data and model dimensions differ");
  if (config.batch < 1 || config.steps < 0) throw std::invalid_argument("bad training budget");

  TrainResult result{std::move(init), 0.0, 0.0, {}};
  Mlp& model = result.model;
  const int dim = data.dim();
  const int T = schedule.steps();
  Rng rng(config.seed, StreamPurpose::kTrain, 0);

  std::vector<Mlp::Layer> grads;
  std::vector<Mlp::Layer> second_moment;
  for (const auto& layer : model.layers()) {
    second_moment.push_back({Mat::Zero(layer.weight.rows(), layer.weight.cols()), Vec::Zero(layer.bias.size())});
  }

  const double decay_rate =
      config.steps > 1 ? std::log(config.final_learning_rate / config.learning_rate) / (config.steps - 1) : 0.0;

  Mat inputs(dim + 1, config.batch);
  Mat targets(dim, config.batch);
  double window_sum = 0.0;
  int window_count = 0;
  for (int step = 0; step < config.steps; ++step) {
    for (int j = 0; j < config.batch; ++j) {
      const Vec x0 = data.sample(rng);
      const int t = rng.uniform_int(1, T);
      const double ab = schedule.alpha_bar(t);
      const Vec eps = rng.normal_vec(dim);
      inputs.col(j).head(dim) = std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * eps;
      inputs(dim, j) = static_cast<double>(t) / T;
      targets.col(j) = eps;
    }
    const double loss = model.loss_and_gradient(inputs, targets, grads);
    if (!std::isfinite(loss)) {
      throw std::runtime_error(fmt::format("training diverged: loss {} at step {}", loss, step));
    }
    if (step == 0) result.initial_loss = loss;
    window_sum += loss;
    ++window_count;

    const double lr = config.learning_rate * std::exp(decay_rate * step);
    const double rho = config.rms_decay;
    for (std::size_t l = 0; l < grads.size(); ++l) {
      auto& v = second_moment[l];
      const auto& g = grads[l];
      v.weight = rho * v.weight + (1.0 - rho) * g.weight.cwiseAbs2();
      v.bias = rho * v.bias + (1.0 - rho) * g.bias.cwiseAbs2();
      auto& p = model.layers()[l];
      p.weight.array() -= lr * g.weight.array() / (v.weight.array().sqrt() + config.rms_epsilon);
      p.bias.array() -= lr * g.bias.array() / (v.bias.array().sqrt() + config.rms_epsilon);
    }

    if (window_count == config.log_every || step + 1 == config.steps) {
      const double mean = window_sum / window_count;
      result.curve.emplace_back(step + 1, mean);
      result.final_loss = mean;
      window_sum = 0.0;
      window_count = 0;
    }
  }
  return result;
}

void write_loss_csv(std::ostream& out, const TrainResult& result) {
  out << "step,loss\n";
  for (const auto& [step, loss] : result.curve) out << fmt::format("{},{:.17g}\n", step, loss);
}

}  // namespace exbias
