#include "exbias/scaling.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "exbias/csv.hpp"

namespace exbias {

void ScalingSchedule::validate(int grid_steps) const {
  // Affine in t, so the endpoints bound the whole domain.
  const double lo = std::min(at(1), at(grid_steps));
  if (!(lo > 0.0) || !std::isfinite(at(1)) || !std::isfinite(at(grid_steps))) {
    throw std::invalid_argument(fmt::format("scaling schedule is not positive on 1..{} (k={}, b={})",
                                            grid_steps, k, b));
  }
}

double lambda_at(const ScalingSchedule& s, int t) { return s.at(t); }

double NormRatioSeries::at(int step) const {
  const auto it = std::find(t.begin(), t.end(), step);
  if (it == t.end()) throw std::out_of_range(fmt::format("no norm ratio at t={}", step));
  return ratio[static_cast<std::size_t>(it - t.begin())];
}

NormRatioSeries forward_accumulate(std::span<const double> lambdas) {
  const int T = static_cast<int>(lambdas.size());
  NormRatioSeries g;
  for (int t = 1; t <= T; ++t) {
    double acc = 0.0;
    for (int u = t + 1; u <= T; ++u) acc += (lambdas[u - 1] - 1.0) * (u - t);
    g.t.push_back(t);
    g.ratio.push_back(1.0 + acc);
    g.n_samples.push_back(0);
  }
  return g;
}

NormRatioSeries forward_accumulate(const ScalingSchedule& s, int grid_steps) {
  std::vector<double> lambdas(grid_steps);
  for (int u = 1; u <= grid_steps; ++u) lambdas[u - 1] = s.at(u);
  return forward_accumulate(lambdas);
}

// With P(m) = a1 m + a2 m^2 + a3 m^3, the backward second difference
// P(m) - 2P(m-1) + P(m-2) equals 2 a2 + a3 (6m - 6). Substituting
// m = T' - s + 1 for lambda_s gives lambda_s - 1 = 6 a3 (T' - s) + 2 a2.
InversionResult invert_norm_ratio_detailed(const NormRatioSeries& g, const InversionOptions& opts) {
  if (g.t.empty()) throw std::invalid_argument("empty norm ratio series");
  if (opts.t_min < 1) throw std::invalid_argument(fmt::format("t_min must be >= 1, got {}", opts.t_min));
  const int T = *std::max_element(g.t.begin(), g.t.end());
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (g.t[i] >= opts.t_min && g.t[i] <= T) rows.push_back(i);
  }
  if (rows.size() < 4) {
    throw std::invalid_argument(
        fmt::format("norm ratio inversion needs at least 4 points in [{}, {}], got {}", opts.t_min, T, rows.size()));
  }

  Eigen::MatrixXd X(static_cast<Eigen::Index>(rows.size()), 3);
  Eigen::VectorXd y(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const double m = static_cast<double>(T - g.t[rows[r]]);
    const auto ri = static_cast<Eigen::Index>(r);
    X(ri, 0) = m;
    X(ri, 1) = m * m;
    X(ri, 2) = m * m * m;
    y[ri] = g.ratio[rows[r]] - 1.0;
  }
  const Eigen::Vector3d a = X.colPivHouseholderQr().solve(y);

  InversionResult out;
  out.a1 = a[0];
  out.a2 = a[1];
  out.a3 = a[2];
  const double k = -6.0 * a[2];
  const double b = 1.0 + 2.0 * a[1] + 6.0 * a[2] * T;
  if (std::abs(k) * T < opts.uniform_threshold) {
    // Collapse to the mean lambda over the grid.
    out.schedule = ScalingSchedule::uniform(b + k * (T + 1) / 2.0);
  } else {
    out.schedule = ScalingSchedule::linear(k, b);
  }
  if (!(std::min(out.schedule.at(1), out.schedule.at(T)) > 0.0)) {
    throw std::domain_error(fmt::format("fitted scaling schedule is not positive (k={}, b={})",
                                        out.schedule.k, out.schedule.b));
  }
  return out;
}

ScalingSchedule invert_norm_ratio(const NormRatioSeries& g, int t_min) {
  InversionOptions opts;
  opts.t_min = t_min;
  return invert_norm_ratio_detailed(g, opts).schedule;
}

void write_norm_ratio_csv(std::ostream& out, const NormRatioSeries& g) {
  out << "t,ratio,n_samples\n";
  for (std::size_t i = 0; i < g.size(); ++i) {
    out << fmt::format("{},{:.17g},{}\n", g.t[i], g.ratio[i], g.n_samples[i]);
  }
}

NormRatioSeries read_norm_ratio_csv(std::istream& in) {
  const CsvTable table = read_csv(in);
  const auto ct = table.column("t");
  const auto cr = table.column("ratio");
  const auto cn = table.column("n_samples");
  NormRatioSeries g;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    g.t.push_back(static_cast<int>(table.number(r, ct)));
    g.ratio.push_back(table.number(r, cr));
    g.n_samples.push_back(static_cast<long long>(table.number(r, cn)));
  }
  return g;
}

}  // namespace exbias
