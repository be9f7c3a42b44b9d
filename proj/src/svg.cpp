#include "exbias/svg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>

#include <fmt/format.h>

namespace exbias {

namespace {

constexpr double kWidth = 640, kHeight = 400;
constexpr double kLeft = 70, kRight = 20, kTop = 40, kBottom = 50;
constexpr const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

void write_line_plot(std::ostream& out, const std::string& title, const std::string& x_label,
                     const std::vector<Series>& series) {
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size()) throw std::invalid_argument("series '" + s.name + "' has mismatched x/y");
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.y[i]) || !std::isfinite(s.x[i])) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  }
  if (!(x0 <= x1)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x0 == x1) x0 -= 0.5, x1 += 0.5;
  if (y0 == y1) y0 -= 0.5, y1 += 0.5;
  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  auto px = [&](double x) { return kLeft + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return kTop + (1.0 - (y - y0) / (y1 - y0)) * ph; };

  out << fmt::format(R"(<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" font-family="sans-serif" font-size="12">)",
                     kWidth, kHeight)
      << '\n';
  out << fmt::format(R"(<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="black"/>)", kLeft, kTop, pw, ph)
      << '\n';
  out << fmt::format(R"(<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>)", kWidth / 2, escape(title))
      << '\n';
  out << fmt::format(R"(<text x="{}" y="{}" text-anchor="middle">{}</text>)", kLeft + pw / 2, kHeight - 12,
                     escape(x_label))
      << '\n';
  out << fmt::format(R"(<text x="{}" y="{}" text-anchor="middle">{:.4g}</text>)", kLeft, kTop + ph + 16, x0) << '\n';
  out << fmt::format(R"(<text x="{}" y="{}" text-anchor="middle">{:.4g}</text>)", kLeft + pw, kTop + ph + 16, x1)
      << '\n';
  out << fmt::format(R"(<text x="{}" y="{}" text-anchor="end">{:.4g}</text>)", kLeft - 4, kTop + ph, y0) << '\n';
  out << fmt::format(R"(<text x="{}" y="{}" text-anchor="end">{:.4g}</text>)", kLeft - 4, kTop + 10, y1) << '\n';

  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* color = kColors[k % std::size(kColors)];
    std::string points;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.y[i]) || !std::isfinite(s.x[i])) continue;
      points += fmt::format("{:.2f},{:.2f} ", px(s.x[i]), py(s.y[i]));
    }
    out << fmt::format(R"(<polyline fill="none" stroke="{}" stroke-width="1.5" points="{}"/>)", color, points) << '\n';
    const double ly = kTop + 14 + 16 * static_cast<double>(k);
    out << fmt::format(R"(<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="{}" stroke-width="2"/>)", kLeft + 10, ly - 4,
                       kLeft + 30, ly - 4, color)
        << '\n';
    out << fmt::format(R"(<text x="{}" y="{}">{}</text>)", kLeft + 36, ly, escape(s.name)) << '\n';
  }
  out << "</svg>\n";
}

}  // namespace exbias
