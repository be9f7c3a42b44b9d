#include <doctest.h>

#include <cmath>
#include <vector>

#include "exbias/rng.hpp"
#include "exbias/stats.hpp"

using namespace exbias;

TEST_SUITE("stats") {
  TEST_CASE("moments of a small sample") {
    RunningStats s;
    for (double x : {1.0, 2.0, 4.0, 7.0}) s.add(x);
    CHECK(s.count() == 4);
    CHECK(s.mean() == doctest::Approx(3.5));
    CHECK(s.variance() == doctest::Approx(5.25));  // ddof = 0
    CHECK(s.std_error_of_mean() > 0);
  }

  TEST_CASE("merging shards equals one pass") {
    Rng rng(1);
    std::vector<double> xs(10007);
    for (auto& x : xs) x = 3.0 + 2.0 * rng.normal() + rng.uniform();
    RunningStats whole;
    for (double x : xs) whole.add(x);
    for (std::size_t shard : {1u, 7u, 1024u, 5000u}) {
      RunningStats merged;
      for (std::size_t i = 0; i < xs.size(); i += shard) {
        RunningStats part;
        for (std::size_t j = i; j < std::min(xs.size(), i + shard); ++j) part.add(xs[j]);
        merged.merge(part);
      }
      CHECK(merged.count() == whole.count());
      CHECK(merged.mean() == doctest::Approx(whole.mean()).epsilon(1e-12));
      CHECK(merged.variance() == doctest::Approx(whole.variance()).epsilon(1e-9));
      CHECK(merged.variance_std_error() == doctest::Approx(whole.variance_std_error()).epsilon(1e-9));
    }
    RunningStats empty;
    RunningStats copy = whole;
    copy.merge(empty);
    CHECK(copy.variance() == whole.variance());
  }

  TEST_CASE("variance estimator calibration") {
    // 1000 repetitions of 2000 normal draws with variance 0.3: the estimate
    // must land within 4 standard errors in at least 99% of them.
    const double v = 0.3;
    int inside = 0;
    for (int rep = 0; rep < 1000; ++rep) {
      Rng rng(stream_key(99, StreamPurpose::kAux, static_cast<std::uint64_t>(rep)));
      RunningStats s;
      for (int i = 0; i < 2000; ++i) s.add(std::sqrt(v) * rng.normal());
      inside += std::abs(s.variance() - v) <= 4 * s.variance_std_error();
    }
    CHECK(inside >= 990);
  }

  TEST_CASE("variance standard error of a normal sample") {
    Rng rng(5);
    RunningStats s;
    const int n = 200000;
    for (int i = 0; i < n; ++i) s.add(rng.normal());
    // For normal data sqrt((mu4 - sigma^4) / n) = sqrt(2 / n).
    CHECK(s.variance_std_error() == doctest::Approx(std::sqrt(2.0 / n)).epsilon(0.02));
  }

  TEST_CASE("spearman") {
    const std::vector<double> a{1, 2, 3, 4, 5}, b{10, 20, 25, 40, 100}, c{5, 4, 3, 2, 1};
    CHECK(spearman(a, b) == doctest::Approx(1.0));
    CHECK(spearman(a, c) == doctest::Approx(-1.0));
    const std::vector<double> ties{1, 1, 2, 3};
    CHECK(average_ranks(ties) == std::vector<double>{1.5, 1.5, 3, 4});
    // scipy.stats.spearmanr([1,2,3,4,5], [2,1,4,3,5]) = 0.8
    const std::vector<double> d{2, 1, 4, 3, 5};
    CHECK(spearman(a, d) == doctest::Approx(0.8));
  }

  TEST_CASE("stream keys separate purposes and indices") {
    CHECK(stream_key(1, StreamPurpose::kInit, 0) != stream_key(1, StreamPurpose::kSampler, 0));
    CHECK(stream_key(1, StreamPurpose::kInit, 0) != stream_key(1, StreamPurpose::kInit, 1));
    CHECK(stream_key(1, StreamPurpose::kInit, 0) != stream_key(2, StreamPurpose::kInit, 0));
    Rng a(1, StreamPurpose::kData, 3), b(1, StreamPurpose::kData, 3);
    for (int i = 0; i < 10; ++i) CHECK(a.bits() == b.bits());
  }
}
