#include <doctest.h>

#include <cmath>
#include <sstream>

#include "exbias/csv.hpp"
#include "exbias/schedule.hpp"

using namespace exbias;

TEST_SUITE("schedule") {
  TEST_CASE("linear endpoints at T=1000") {
    const NoiseSchedule s = make_linear_schedule(1000, 1e-4, 0.02);
    CHECK(s.steps() == 1000);
    CHECK(s.beta(1) == doctest::Approx(1e-4).epsilon(1e-15));
    CHECK(s.beta(1000) == doctest::Approx(0.02).epsilon(1e-15));
    CHECK(s.alpha_bar(1) == doctest::Approx(0.9999).epsilon(1e-15));
    CHECK(s.alpha_bar(0) == 1.0);
  }

  TEST_CASE("alpha_bar at T=1000 matches a 40-digit product") {
    // Independent high-precision product of (1 - beta_t).
    const NoiseSchedule s = make_linear_schedule(1000, 1e-4, 0.02);
    CHECK(s.alpha_bar(1000) == doctest::Approx(4.0358297653756833e-05).epsilon(1e-11));
  }

  TEST_CASE("two-step schedule by hand") {
    const NoiseSchedule s = make_linear_schedule(2, 0.1, 0.3);
    CHECK(s.alpha_bar(2) == doctest::Approx(0.63).epsilon(1e-14));
    CHECK(s.posterior_var(2) == doctest::Approx(0.1 / 0.37 * 0.3).epsilon(1e-14));
    CHECK(s.posterior_var(2) == doctest::Approx(0.08108).epsilon(1e-4));
    CHECK(s.posterior_var(1) == 0.0);
  }

  TEST_CASE("invalid endpoints are rejected") {
    CHECK_THROWS(make_linear_schedule(1, 1e-4, 0.02));
    CHECK_THROWS(make_linear_schedule(10, 0.0, 0.02));
    CHECK_THROWS(make_linear_schedule(10, 0.03, 0.02));
    CHECK_THROWS(make_linear_schedule(10, 1e-4, 1.0));
    CHECK_THROWS(NoiseSchedule({0.1, 1.5}));
  }

  TEST_CASE("default schedule scales with T and stays below one") {
    const NoiseSchedule s = default_linear_schedule(100);
    CHECK(s.beta(1) == doctest::Approx(1e-3));
    CHECK(s.beta(100) == doctest::Approx(0.2));
    const NoiseSchedule tiny = default_linear_schedule(20);
    CHECK(tiny.beta(20) == doctest::Approx(0.999));
  }

  TEST_CASE("schedule invariants") {
    const NoiseSchedule s = default_linear_schedule(1000);
    for (int t = 1; t <= s.steps(); ++t) {
      CHECK(s.alpha_bar(t) / s.alpha_bar(t - 1) == doctest::Approx(s.alpha(t)).epsilon(1e-12));
      CHECK(s.alpha_bar(t) < s.alpha_bar(t - 1));
      CHECK(s.posterior_var(t) <= s.beta(t));
      for (auto choice : {SamplingVariance::kLowerBound, SamplingVariance::kUpperBound}) {
        CHECK(s.sampling_var(t, choice) >= s.posterior_var(t));
        CHECK(s.sampling_var(t, choice) <= s.beta(t));
      }
    }
    CHECK_THROWS_AS(s.beta(0), std::out_of_range);
    CHECK_THROWS_AS(s.alpha_bar(1001), std::out_of_range);
  }

  TEST_CASE("respacing to the full length is the identity") {
    const NoiseSchedule s = default_linear_schedule(1000);
    const RespacedSchedule r = respace(s, 1000);
    for (int t = 1; t <= 1000; ++t) {
      CHECK(r.effective.alpha_bar(t) == s.alpha_bar(t));
      CHECK(r.effective.beta(t) == s.beta(t));
    }
  }

  TEST_CASE("respaced alpha_bar is an exact subsequence") {
    const NoiseSchedule s = default_linear_schedule(1000);
    const RespacedSchedule r = respace(s, 20);
    REQUIRE(r.grid_steps() == 20);
    CHECK(r.timesteps.back() == 1000);
    CHECK(r.timesteps.front() == 50);
    for (int i = 1; i <= 20; ++i) {
      CHECK(r.effective.alpha_bar(i) == s.alpha_bar(r.timesteps[i - 1]));
      CHECK(1.0 - r.effective.beta(i) ==
            doctest::Approx(s.alpha_bar(r.parent_timestep(i)) / s.alpha_bar(r.parent_timestep(i - 1))).epsilon(1e-14));
    }
    CHECK(r.time_fraction(20) == 1.0);
  }

  TEST_CASE("respacing a four-step schedule by hand") {
    const RespacedSchedule r = respace(NoiseSchedule({0.1, 0.1, 0.1, 0.1}), 2);
    CHECK(r.timesteps == std::vector<int>{2, 4});
    CHECK(r.effective.beta(2) == doctest::Approx(0.19).epsilon(1e-14));
    CHECK(r.effective.beta(1) == doctest::Approx(0.19).epsilon(1e-14));
  }

  TEST_CASE("respacing range errors") {
    const NoiseSchedule s = default_linear_schedule(100);
    CHECK_THROWS(respace(s, 101));
    CHECK_THROWS(respace(s, 1));
  }

  TEST_CASE("respacing preserves marginals") {
    const NoiseSchedule s = default_linear_schedule(1000);
    const RespacedSchedule r = respace(s, 37);
    const double x0 = 0.7, eps = -1.3;
    for (int i = 1; i <= r.grid_steps(); ++i) {
      const double a = r.effective.alpha_bar(i), b = s.alpha_bar(r.timesteps[i - 1]);
      CHECK(std::sqrt(a) * x0 + std::sqrt(1 - a) * eps == std::sqrt(b) * x0 + std::sqrt(1 - b) * eps);
    }
  }

  TEST_CASE("schedule CSV round trip") {
    const NoiseSchedule s = make_linear_schedule(5, 0.01, 0.2);
    std::stringstream buf;
    write_schedule_csv(buf, s);
    const CsvTable tab = read_csv(buf);
    REQUIRE(tab.rows.size() == 5);
    const auto ab = tab.column("alpha_bar");
    for (std::size_t i = 0; i < 5; ++i) CHECK(tab.number(i, ab) == s.alpha_bar(static_cast<int>(i) + 1));
  }
}
