// exbias: command-line front end for the exposure-bias lab.
//
// Exit codes: 0 success, 1 a check failed or the run aborted, 2 usage or
// configuration error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "exbias/config.hpp"
#include "exbias/csv.hpp"
#include "exbias/experiments.hpp"
#include "exbias/svg.hpp"

namespace fs = std::filesystem;
using namespace exbias;

namespace {

constexpr int kOk = 0;
constexpr int kCheckFailed = 1;
constexpr int kUsage = 2;

struct Options {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  int threads = 1;
  std::string out_dir = ".";
  std::string input;  // invert only
};

RunConfig resolve(const Options& o, const std::string& command) {
  RunConfig c = o.config_path.empty() ? RunConfig{} : load_config(o.config_path);
  for (const auto& assignment : o.overrides) apply_override(c, assignment);
  if (o.seed) c.run.seed = *o.seed;
  c.command = command;
  c.validate();
  return c;
}

std::ofstream open_output(const Options& o, const std::string& name) {
  fs::create_directories(o.out_dir);
  const fs::path path = fs::path(o.out_dir) / name;
  std::ofstream out(path);
  if (!out) throw std::runtime_error(fmt::format("cannot write {}", path.string()));
  std::cout << "wrote " << path.string() << '\n';
  return out;
}

std::ofstream open_csv(const Options& o, const std::string& name, const RunConfig& c) {
  std::ofstream out = open_output(o, name);
  write_config_header(out, c);
  return out;
}

std::vector<double> grid_axis(const BiasReport& r) { return {r.t.begin(), r.t.end()}; }

int cmd_verify(const Options& o) {
  const RunConfig c = resolve(o, "verify-theory");
  const VerifyResult r = run_verify_theory(c, o.threads);
  auto out = open_csv(o, "verify_theory.csv", c);
  write_verify_csv(out, r);
  std::size_t failed = 0;
  for (const auto& row : r.rows) failed += row.pass ? 0 : 1;
  std::cout << fmt::format("{} checks, {} failed\n", r.rows.size(), failed);
  return failed == 0 ? kOk : kCheckFailed;
}

int cmd_bias(const Options& o) {
  const RunConfig c = resolve(o, "bias");
  const BiasResult r = run_bias(c, o.threads);
  {
    auto out = open_csv(o, "bias.csv", c);
    write_bias_csv(out, r.report);
  }
  if (r.oracle) {
    auto out = open_csv(o, "chain_oracle.csv", c);
    write_chain_oracle_csv(out, *r.oracle);
  }
  auto svg = open_output(o, "bias.svg");
  std::vector<Series> series{{"multi-step error", grid_axis(r.report), r.report.multi_err},
                             {"single-step error", grid_axis(r.report), r.report.single_err}};
  if (r.oracle) {
    std::vector<double> exact;
    for (const auto& p : r.oracle->residual) exact.push_back(p.extra_term);
    series.push_back({"exact multi-step error", grid_axis(r.report), exact});
  }
  write_line_plot(svg, "variance error", "t", series);
  std::cout << fmt::format("delta_1 = {:.6g}\n", r.report.delta[r.report.row(1)]);
  return kOk;
}

int cmd_norms(const Options& o) {
  const RunConfig c = resolve(o, "norms");
  const NormsResult r = run_norms(c, o.threads);
  {
    auto out = open_csv(o, "norms.csv", c);
    write_bias_csv(out, r.report);
  }
  {
    auto out = open_csv(o, "norm_ratio.csv", c);
    write_norm_ratio_csv(out, r.ratio);
  }
  auto svg = open_output(o, "norms.svg");
  write_line_plot(svg, "epsilon norm", "t",
                  {{"training", grid_axis(r.report), r.report.eps_norm_train},
                   {"sampling", grid_axis(r.report), r.report.eps_norm_sample}});
  std::cout << fmt::format("summed norm gap = {:.6g}\n", summed_norm_gap(r.report));
  if (r.fit) {
    const auto& s = r.fit->schedule;
    if (s.form == ScalingSchedule::Form::kUniform) std::cout << fmt::format("fitted lambda: uniform b = {:.6g}\n", s.b);
    else std::cout << fmt::format("fitted lambda: linear k = {:.6g}, b = {:.6g}\n", s.k, s.b);
  } else {
    std::cout << "fitted lambda: none (" << r.fit_error << ")\n";
  }
  return kOk;
}

int cmd_sweep(const Options& o) {
  const RunConfig c = resolve(o, "sweep");
  const SweepResult r = run_sweep(c, o.threads);
  {
    auto out = open_csv(o, "sweep.csv", c);
    write_sweep_csv(out, r);
  }
  std::vector<double> b, d, f;
  for (const auto& row : r.rows) {
    b.push_back(row.b);
    d.push_back(row.delta1);
    f.push_back(row.frechet);
  }
  auto svg = open_output(o, "sweep.svg");
  write_line_plot(svg, "uniform epsilon scaling sweep", "b", {{"delta_1", b, d}, {"Frechet distance", b, f}});
  std::cout << fmt::format("argmin delta_1: b = {}; argmin Frechet: b = {}; spearman = {:.4f}\n",
                           r.rows[r.argmin_delta].b, r.rows[r.argmin_frechet].b, r.spearman);
  return kOk;
}

int cmd_train(const Options& o) {
  const RunConfig c = resolve(o, "train");
  const TrainResult r = run_train(c);
  {
    auto out = open_output(o, "weights.txt");
    r.model.save(out);
  }
  {
    auto out = open_csv(o, "loss.csv", c);
    write_loss_csv(out, r);
  }
  std::vector<double> steps, loss;
  for (const auto& [s, l] : r.curve) {
    steps.push_back(s);
    loss.push_back(l);
  }
  auto svg = open_output(o, "loss.svg");
  write_line_plot(svg, "training loss", "step", {{"loss", steps, loss}});
  std::cout << fmt::format("initial loss {:.6g}, final loss {:.6g}\n", r.initial_loss, r.final_loss);
  return kOk;
}

int cmd_sample(const Options& o) {
  const RunConfig c = resolve(o, "sample");
  const auto records = run_sample(c, o.threads);
  auto out = open_csv(o, "chains.csv", c);
  write_chain_csv_header(out, records.empty() ? 0 : static_cast<int>(records.front().states.front().size()));
  for (const auto& r : records) write_chain_csv_rows(out, r);
  return kOk;
}

int cmd_schedule(const Options& o) {
  const RunConfig c = resolve(o, "");
  const NoiseSchedule parent = make_schedule(c.schedule);
  const RespacedSchedule grid = respace(parent, c.schedule.grid_steps);
  {
    auto out = open_csv(o, "schedule.csv", c);
    write_schedule_csv(out, parent);
  }
  auto out = open_csv(o, "grid.csv", c);
  write_schedule_csv(out, grid.effective);
  return kOk;
}

int cmd_invert(const Options& o) {
  const RunConfig c = resolve(o, "");
  std::ifstream in(o.input);
  if (!in) throw ConfigError(fmt::format("{}: cannot open", o.input));
  const NormRatioSeries g = read_norm_ratio_csv(in);
  const InversionResult r = invert_norm_ratio_detailed(g, {c.fit.t_min, c.fit.uniform_threshold});
  std::cout << fmt::format("a1 = {:.9g}, a2 = {:.9g}, a3 = {:.9g}\n", r.a1, r.a2, r.a3);
  if (r.schedule.form == ScalingSchedule::Form::kUniform) std::cout << fmt::format("uniform b = {:.9g}\n", r.schedule.b);
  else std::cout << fmt::format("linear k = {:.9g}, b = {:.9g}\n", r.schedule.k, r.schedule.b);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Exposure-bias lab for diffusion samplers on toy data"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config_path, "config file, or a CSV emitted by an earlier run");
    sub->add_option("--set", o.overrides, "override a config value: section.key=value")->allow_extra_args(false);
    sub->add_option("--seed", o.seed, "master seed (overrides [run] seed)");
    sub->add_option("--threads", o.threads, "worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--out", o.out_dir, "output directory");
  };

  struct Command {
    const char* name;
    const char* help;
    int (*run)(const Options&);
  };
  const Command commands[] = {
      {"verify-theory", "Monte Carlo checks of the closed-form sampling variances", cmd_verify},
      {"bias", "exposure bias and single/multi-step variance errors", cmd_bias},
      {"norms", "training vs sampling epsilon norms, ratio and fitted scaling", cmd_norms},
      {"sweep", "uniform epsilon-scaling sweep: delta_1 and Frechet distance per b", cmd_sweep},
      {"train", "train the MLP denoiser", cmd_train},
      {"sample", "dump full chain trajectories", cmd_sample},
      {"schedule", "write the parent and respaced schedules", cmd_schedule},
      {"invert", "fit a scaling schedule to a norm-ratio CSV", cmd_invert},
  };
  int (*selected)(const Options&) = nullptr;
  for (const auto& cmd : commands) {
    CLI::App* sub = app.add_subcommand(cmd.name, cmd.help);
    common(sub);
    if (std::string(cmd.name) == "invert") sub->add_option("--input", o.input, "norm-ratio CSV")->required();
    sub->callback([&selected, run = cmd.run] { selected = run; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    return selected(o);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kCheckFailed;
  }
}
