#include <doctest.h>

#include <sstream>

#include "exbias/config.hpp"

using namespace exbias;

namespace {

RunConfig parse(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in, "test.ini");
}

std::string error_of(const std::string& text) {
  try {
    parse(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_SUITE("config") {
  TEST_CASE("defaults survive an empty file") {
    const RunConfig c = parse("");
    CHECK(c.schedule.steps == 1000);
    CHECK(c.schedule.grid_steps == 20);
    CHECK(c.denoiser.kind == "oracle");
    CHECK(c.denoiser.e == 0.1);
  }

  TEST_CASE("values are read per section") {
    const RunConfig c = parse(
        "[run]\nseed = 42\nn_chains = 5000\n"
        "[data]\nkind = mixture\ndim = 2\ncenters = -1,0 | 1,0.5\nsigma = 0.3\n"
        "[sampler]\nkind = heun\nscaling = linear\nk = 0.001\nb = 1.0\n"
        "[train]\nhidden = 32,16\n");
    CHECK(c.run.seed == 42);
    CHECK(c.run.n_chains == 5000);
    CHECK(c.data.centers.size() == 2);
    CHECK(c.data.centers[1][1] == 0.5);
    CHECK(c.sampler.kind == "heun");
    CHECK(c.sampler.k == 0.001);
    CHECK(c.train.hidden == std::vector<int>{32, 16});
  }

  TEST_CASE("canonical text round trips exactly") {
    RunConfig c;
    c.command = "sweep";
    c.denoiser.e = 0.1 + 1e-17;
    c.sweep.b_step = 0.1 / 3;
    c.data.mean = {0.1, -0.7};
    c.data.dim = 2;
    c.run.seed = 18446744073709551615ULL;
    const RunConfig back = parse(to_ini(c));
    CHECK(to_ini(back) == to_ini(c));
    CHECK(back.sweep.b_step == c.sweep.b_step);
    CHECK(back.run.seed == c.run.seed);
  }

  TEST_CASE("errors name the line or the field") {
    CHECK(error_of("[run]\nseed = 1\nseed = 2\n").find("test.ini:") != std::string::npos);
    CHECK(error_of("[run]\nsed = 1\n").find("[run] sed") != std::string::npos);
    CHECK(error_of("[nope]\nx = 1\n").find("[nope]") != std::string::npos);
    CHECK(error_of("[denoiser]\ne = lots\n").find("[denoiser] e") != std::string::npos);
    CHECK(error_of("[sampler]\neta = 2\n").find("eta") != std::string::npos);
    CHECK(error_of("[sampler]\nkind = rk4\n").find("[sampler] kind") != std::string::npos);
    CHECK(error_of("[denoiser]\nkind = mlp\n").find("weights") != std::string::npos);
    CHECK(error_of("[sweep]\nb_min = 1.1\nb_max = 1.0\n").find("[sweep]") != std::string::npos);
    CHECK(error_of("[run]\nseed = -3\n").find("[run] seed") != std::string::npos);
  }

  TEST_CASE("sweep grid") {
    SweepParams s;
    const auto g = s.grid();
    REQUIRE(g.size() == 11);
    CHECK(g.front() == 1.0);
    CHECK(g.back() == doctest::Approx(1.05));
    s.b_max = 1.0;
    CHECK(s.grid().size() == 1);
  }

  TEST_CASE("overrides") {
    RunConfig c;
    apply_override(c, "denoiser.e=0.25");
    apply_override(c, "schedule.grid_steps = 10");
    CHECK(c.denoiser.e == 0.25);
    CHECK(c.schedule.grid_steps == 10);
    CHECK_THROWS_AS(apply_override(c, "denoiser.bogus=1"), ConfigError);
    CHECK_THROWS_AS(apply_override(c, "nosuch.e=1"), ConfigError);
    CHECK_THROWS_AS(apply_override(c, "e=1"), ConfigError);
  }
}
