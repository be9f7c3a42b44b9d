#pragma once

#include <cstdint>
#include <limits>
#include <random>

#include <Eigen/Dense>

namespace exbias {

using Vec = Eigen::VectorXd;

// Purposes keep the per-chain random streams disjoint, so adding or removing
// draws in one stream never shifts another.
enum class StreamPurpose : std::uint64_t {
  kInit = 1,     // x_T noise, or the forward-process noise of an anchored chain
  kSampler = 2,  // per-step injected noise
  kOracle = 3,   // prediction-error draws of the noisy oracle
  kData = 4,     // x_0 draws
  kTrain = 5,    // MLP training batches
  kWeights = 6,  // MLP initialization
  kAux = 7,
};

std::uint64_t splitmix64(std::uint64_t& state);

/// Hash (seed, purpose, index) into a 64-bit stream key.
std::uint64_t stream_key(std::uint64_t seed, StreamPurpose purpose, std::uint64_t index);

/// xoshiro256++ engine. Satisfies UniformRandomBitGenerator so it plugs into
/// the <random> distributions.
class Xoshiro256pp {
 public:
  using result_type = std::uint64_t;

  explicit Xoshiro256pp(std::uint64_t seed);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()();

 private:
  std::uint64_t s_[4];
};

/// A single deterministic stream with a Gaussian sampler attached.
class Rng {
 public:
  explicit Rng(std::uint64_t key) : engine_(key) {}
  Rng(std::uint64_t seed, StreamPurpose purpose, std::uint64_t index)
      : engine_(stream_key(seed, purpose, index)) {}

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  std::uint64_t bits() { return engine_(); }
  /// Uniform integer in [lo, hi].
  int uniform_int(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(engine_); }

  Vec normal_vec(Eigen::Index n) {
    Vec v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = normal();
    return v;
  }

  Xoshiro256pp& engine() { return engine_; }

 private:
  Xoshiro256pp engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace exbias
