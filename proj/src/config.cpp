#include "exbias/config.hpp"

#include <cmath>
#include <fstream>
#include <charconv>
#include <optional>
#include <set>
#include <sstream>
#include <type_traits>

#include <boost/algorithm/string.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

namespace exbias {

namespace pt = boost::property_tree;

std::vector<double> SweepParams::grid() const {
  if (!(b_step > 0.0) || b_max < b_min) {
    throw ConfigError(fmt::format("[sweep] empty grid: b_min={} b_max={} b_step={}", b_min, b_max, b_step));
  }
  std::vector<double> out;
  const long n = std::lround(std::floor((b_max - b_min) / b_step + 1e-9));
  // Rounded to 12 decimals so 0.9 + 0.05 prints as 0.95.
  for (long i = 0; i <= n; ++i) out.push_back(std::round((b_min + static_cast<double>(i) * b_step) * 1e12) / 1e12);
  return out;
}

namespace {

std::string field(const std::string& section, const std::string& key) {
  return fmt::format("[{}] {}", section, key);
}

double to_double(const std::string& text, const std::string& where) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size() || !std::isfinite(v)) {
    throw ConfigError(fmt::format("{}: '{}' is not a finite number", where, text));
  }
  return v;
}

template <typename T>
T to_integer(const std::string& text, const std::string& where) {
  T v{};
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec == std::errc::result_out_of_range) throw ConfigError(fmt::format("{}: '{}' is out of range", where, text));
  if (ec != std::errc() || end != text.data() + text.size() || text.empty()) {
    throw ConfigError(fmt::format("{}: '{}' is not an integer", where, text));
  }
  return v;
}

std::vector<double> to_list(const std::string& text, const std::string& where) {
  std::vector<std::string> parts;
  boost::split(parts, text, boost::is_any_of(","));
  std::vector<double> out;
  for (auto& p : parts) out.push_back(to_double(boost::trim_copy(p), where));
  return out;
}

std::string join(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + fmt::format("{}", v[i]);
  return out;
}

// Binds every key of one section to a field, so parsing and writing share
// a single table.
class Section {
 public:
  Section(std::string name, const pt::ptree* tree) : name_(std::move(name)), tree_(tree) {}

  template <typename T>
  void num(const char* key, T& value) {
    keys_.insert(key);
    if (auto text = lookup(key)) {
      if constexpr (std::is_floating_point_v<T>) {
        value = to_double(*text, field(name_, key));
      } else {
        value = to_integer<T>(*text, field(name_, key));
      }
    }
    emit(key, fmt::format("{}", value));
  }

  void str(const char* key, std::string& value) {
    keys_.insert(key);
    if (auto text = lookup(key)) value = *text;
    emit(key, value);
  }

  void list(const char* key, std::vector<double>& value) {
    keys_.insert(key);
    if (auto text = lookup(key)) value = to_list(*text, field(name_, key));
    emit(key, join(value));
  }

  void int_list(const char* key, std::vector<int>& value) {
    keys_.insert(key);
    if (auto text = lookup(key)) {
      value.clear();
      for (double d : to_list(*text, field(name_, key))) {
        if (d != std::floor(d)) throw ConfigError(fmt::format("{}: '{}' is not an integer", field(name_, key), d));
        value.push_back(static_cast<int>(d));
      }
    }
    std::string out;
    for (std::size_t i = 0; i < value.size(); ++i) out += (i ? "," : "") + std::to_string(value[i]);
    emit(key, out);
  }

  // Points separated by '|', coordinates by ','.
  void points(const char* key, std::vector<std::vector<double>>& value) {
    keys_.insert(key);
    if (auto text = lookup(key)) {
      std::vector<std::string> parts;
      boost::split(parts, *text, boost::is_any_of("|"));
      value.clear();
      for (auto& p : parts) value.push_back(to_list(boost::trim_copy(p), field(name_, key)));
    }
    std::string out;
    for (std::size_t i = 0; i < value.size(); ++i) out += (i ? " | " : "") + join(value[i]);
    emit(key, out);
  }

  void reject_unknown() const {
    if (!tree_) return;
    for (const auto& [k, v] : *tree_) {
      if (!keys_.count(k)) throw ConfigError(fmt::format("{}: unknown key", field(name_, k)));
    }
  }

  std::string text() const { return "[" + name_ + "]\n" + body_; }

 private:
  std::optional<std::string> lookup(const char* key) const {
    if (!tree_) return std::nullopt;
    auto child = tree_->get_child_optional(pt::ptree::path_type(key, '\0'));
    if (!child) return std::nullopt;
    return boost::trim_copy(child->data());
  }
  void emit(const char* key, const std::string& value) { body_ += fmt::format("{} = {}\n", key, value); }

  std::string name_;
  const pt::ptree* tree_;
  std::set<std::string> keys_;
  std::string body_;
};

// Visits every section of the config. With `tree` set, values are read from
// it first; either way the canonical text is accumulated.
std::string visit(RunConfig& c, const pt::ptree* tree) {
  std::string out;
  std::set<std::string> known;
  auto section = [&](const char* name, auto&& bind) {
    known.insert(name);
    const pt::ptree* sub = nullptr;
    if (tree) {
      if (auto child = tree->get_child_optional(pt::ptree::path_type(name, '\0'))) sub = &*child;
    }
    Section s(name, sub);
    bind(s);
    s.reject_unknown();
    out += s.text() + "\n";
  };

  section("run", [&](Section& s) {
    s.str("command", c.command);
    s.num("seed", c.run.seed);
    s.num("n_chains", c.run.n_chains);
    s.num("n_per_step", c.run.n_per_step);
    s.num("n_samples", c.run.n_samples);
  });
  section("schedule", [&](Section& s) {
    s.num("steps", c.schedule.steps);
    s.num("beta_start", c.schedule.beta_start);
    s.num("beta_end", c.schedule.beta_end);
    s.num("grid_steps", c.schedule.grid_steps);
  });
  section("data", [&](Section& s) {
    s.str("kind", c.data.kind);
    s.num("dim", c.data.dim);
    s.list("mean", c.data.mean);
    s.list("var", c.data.var);
    s.points("centers", c.data.centers);
    s.num("sigma", c.data.sigma);
    s.num("noise", c.data.noise);
  });
  section("denoiser", [&](Section& s) {
    s.str("kind", c.denoiser.kind);
    s.str("profile", c.denoiser.profile);
    s.num("e", c.denoiser.e);
    s.str("weights", c.denoiser.weights);
  });
  section("sampler", [&](Section& s) {
    s.str("kind", c.sampler.kind);
    s.num("eta", c.sampler.eta);
    s.str("variance", c.sampler.variance);
    s.str("scaling", c.sampler.scaling);
    s.num("k", c.sampler.k);
    s.num("b", c.sampler.b);
  });
  section("sweep", [&](Section& s) {
    s.num("b_min", c.sweep.b_min);
    s.num("b_max", c.sweep.b_max);
    s.num("b_step", c.sweep.b_step);
  });
  section("fit", [&](Section& s) {
    s.num("t_min", c.fit.t_min);
    s.num("uniform_threshold", c.fit.uniform_threshold);
  });
  section("train", [&](Section& s) {
    s.num("steps", c.train.steps);
    s.num("batch", c.train.batch);
    s.num("learning_rate", c.train.learning_rate);
    s.num("final_learning_rate", c.train.final_learning_rate);
    s.int_list("hidden", c.train.hidden);
    s.num("log_every", c.train.log_every);
  });
  section("verify", [&](Section& s) {
    s.num("e_single", c.verify.e_single);
    s.num("e_two", c.verify.e_two);
    s.num("rel_tol", c.verify.rel_tol);
    s.num("two_step_rel_tol", c.verify.two_step_rel_tol);
    s.num("se_multiplier", c.verify.se_multiplier);
  });

  if (tree) {
    for (const auto& [name, sub] : *tree) {
      if (!known.count(name)) {
        if (sub.empty()) throw ConfigError(fmt::format("key '{}' outside any section", name));
        throw ConfigError(fmt::format("[{}]: unknown section", name));
      }
    }
  }
  return out;
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

bool one_of(const std::string& v, std::initializer_list<const char*> options) {
  for (const char* o : options)
    if (v == o) return true;
  return false;
}

}  // namespace

void RunConfig::validate() const {
  require(command.empty() || one_of(command, {"verify-theory", "sample", "bias", "norms", "sweep", "train"}),
          fmt::format("[run] command: unknown command '{}'", command));
  require(run.n_chains >= 1 && run.n_per_step >= 1 && run.n_samples >= 1, "[run] sample counts must be >= 1");
  require(schedule.steps >= 2, "[schedule] steps must be >= 2");
  require(schedule.grid_steps >= 2 && schedule.grid_steps <= schedule.steps,
          "[schedule] grid_steps must lie in [2, steps]");
  require(one_of(data.kind, {"gaussian", "mixture", "moons"}), fmt::format("[data] kind: unknown '{}'", data.kind));
  require(data.dim >= 1, "[data] dim must be >= 1");
  require(one_of(denoiser.kind, {"oracle", "analytic", "perturbed", "mlp"}),
          fmt::format("[denoiser] kind: unknown '{}'", denoiser.kind));
  require(one_of(denoiser.profile, {"constant", "proportional"}),
          fmt::format("[denoiser] profile: unknown '{}'", denoiser.profile));
  require(denoiser.e >= 0.0, "[denoiser] e must be >= 0");
  require(denoiser.kind != "mlp" || !denoiser.weights.empty(), "[denoiser] weights: required for kind = mlp");
  require(one_of(sampler.kind, {"ddpm", "ddim", "euler", "heun"}),
          fmt::format("[sampler] kind: unknown '{}'", sampler.kind));
  require(sampler.eta >= 0.0 && sampler.eta <= 1.0, "[sampler] eta must lie in [0, 1]");
  require(one_of(sampler.variance, {"lower", "upper"}), fmt::format("[sampler] variance: unknown '{}'", sampler.variance));
  require(one_of(sampler.scaling, {"none", "uniform", "linear"}),
          fmt::format("[sampler] scaling: unknown '{}'", sampler.scaling));
  require(fit.t_min >= 1, "[fit] t_min must be >= 1");
  require(train.steps >= 0 && train.batch >= 1 && train.log_every >= 1, "[train] steps/batch/log_every out of range");
  require(!train.hidden.empty(), "[train] hidden: at least one layer");
  for (int h : train.hidden) require(h >= 1, "[train] hidden: widths must be >= 1");
  require(verify.rel_tol >= 0 && verify.two_step_rel_tol >= 0 && verify.se_multiplier >= 0,
          "[verify] tolerances must be >= 0");
  sweep.grid();
}

namespace {

RunConfig read_config(std::istream& in, const std::string& source, bool check) {
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(fmt::format("{}:{}: {}", source, e.line(), e.message()));
  }
  RunConfig c;
  try {
    visit(c, &tree);
    if (check) c.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(fmt::format("{}: {}", source, e.what()));
  }
  return c;
}

}  // namespace

RunConfig parse_config(std::istream& in, const std::string& source) { return read_config(in, source, true); }

RunConfig load_config(const std::string& path) {
  std::ifstream file(path);
  if (!file) throw ConfigError(fmt::format("{}: cannot open", path));
  std::stringstream raw;
  raw << file.rdbuf();
  const std::string text = raw.str();

  // An emitted CSV starts with its config as "# " comment lines.
  if (boost::starts_with(text, "#")) {
    std::istringstream lines(text);
    std::string line, ini;
    while (std::getline(lines, line) && boost::starts_with(line, "#")) {
      ini += (line.size() > 2 ? line.substr(2) : std::string()) + "\n";
    }
    std::istringstream body(ini);
    return parse_config(body, path);
  }
  std::istringstream body(text);
  return parse_config(body, path);
}

void apply_override(RunConfig& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  const auto dot = assignment.find('.');
  if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
    throw ConfigError(fmt::format("override '{}' is not of the form section.key=value", assignment));
  }
  const std::string section = boost::trim_copy(assignment.substr(0, dot));
  const std::string key = boost::trim_copy(assignment.substr(dot + 1, eq - dot - 1));
  pt::ptree tree;
  std::istringstream current(to_ini(config));
  pt::read_ini(current, tree);
  if (!tree.get_child_optional(pt::ptree::path_type(section, '\0'))) {
    throw ConfigError(fmt::format("override '{}': unknown section [{}]", assignment, section));
  }
  tree.get_child(pt::ptree::path_type(section, '\0'))
      .put(pt::ptree::path_type(key, '\0'), boost::trim_copy(assignment.substr(eq + 1)));
  std::ostringstream updated;
  pt::write_ini(updated, tree);
  std::istringstream in(updated.str());
  config = read_config(in, "override", false);
}

std::string to_ini(const RunConfig& config) {
  RunConfig copy = config;
  std::string text = visit(copy, nullptr);
  while (!text.empty() && text.back() == '\n') text.pop_back();
  return text + "\n";
}

}  // namespace exbias
