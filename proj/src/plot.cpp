#include "tabql/plot.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>

namespace tabql {

namespace {

constexpr double kWidth = 800.0;
constexpr double kHeight = 480.0;
constexpr double kMargin = 60.0;
constexpr const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

CurveStats curve_stats(const std::vector<CurveRow>& rows) {
  std::map<std::uint64_t, std::vector<const CurveRow*>> by_seed;
  for (const auto& r : rows) by_seed[r.seed].push_back(&r);
  CurveStats stats;
  stats.n_seeds = by_seed.size();
  if (by_seed.empty()) return stats;

  std::size_t n = std::numeric_limits<std::size_t>::max();
  for (const auto& [seed, seq] : by_seed) n = std::min(n, seq.size());
  stats.mean.assign(n, 0.0);
  stats.stddev.assign(n, 0.0);
  const double k = static_cast<double>(by_seed.size());
  for (std::size_t i = 0; i < n; ++i) {
    double sum = 0.0;
    for (const auto& [seed, seq] : by_seed) sum += seq[i]->episode_return;
    const double mean = sum / k;
    double var = 0.0;
    for (const auto& [seed, seq] : by_seed) {
      const double d = seq[i]->episode_return - mean;
      var += d * d;
    }
    stats.mean[i] = mean;
    stats.stddev[i] = std::sqrt(var / k);
  }

  double switch_sum = 0.0;
  std::size_t switched = 0;
  for (const auto& [seed, seq] : by_seed) {
    for (std::size_t i = 0; i < seq.size(); ++i) {
      if (seq[i]->phase == "icl") {
        switch_sum += static_cast<double>(i);
        ++switched;
        break;
      }
    }
  }
  if (switched > 0) stats.switch_episode = switch_sum / static_cast<double>(switched);
  return stats;
}

std::string render_svg(const std::vector<PlotSeries>& series, const std::string& title) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  std::size_t n_max = 1;
  for (const auto& s : series) {
    n_max = std::max(n_max, s.stats.mean.size());
    for (std::size_t i = 0; i < s.stats.mean.size(); ++i) {
      lo = std::min(lo, s.stats.mean[i] - s.stats.stddev[i]);
      hi = std::max(hi, s.stats.mean[i] + s.stats.stddev[i]);
    }
  }
  if (!std::isfinite(lo)) {
    lo = 0.0;
    hi = 1.0;
  }
  if (hi - lo < 1e-12) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double plot_w = kWidth - 2 * kMargin;
  const double plot_h = kHeight - 2 * kMargin;
  const double x_den = n_max > 1 ? static_cast<double>(n_max - 1) : 1.0;
  auto px = [&](double i) { return kMargin + plot_w * i / x_den; };
  auto py = [&](double v) { return kMargin + plot_h * (hi - v) / (hi - lo); };

  std::ostringstream svg;
  svg.precision(6);
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<rect x=\"" << kMargin << "\" y=\"" << kMargin << "\" width=\"" << plot_w << "\" height=\""
      << plot_h << "\" fill=\"none\" stroke=\"#444\"/>\n";
  if (!title.empty()) {
    svg << "<text x=\"" << kWidth / 2 << "\" y=\"" << kMargin / 2
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">" << escape(title)
        << "</text>\n";
  }
  svg << "<text x=\"" << kMargin << "\" y=\"" << kHeight - kMargin / 3
      << "\" font-family=\"sans-serif\" font-size=\"12\">episode (0.." << n_max - 1 << ")</text>\n";
  svg << "<text x=\"4\" y=\"" << kMargin - 6 << "\" font-family=\"sans-serif\" font-size=\"12\">" << hi
      << "</text>\n";
  svg << "<text x=\"4\" y=\"" << kHeight - kMargin << "\" font-family=\"sans-serif\" font-size=\"12\">"
      << lo << "</text>\n";

  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* color = kColors[k % std::size(kColors)];
    const std::size_t n = s.stats.mean.size();
    if (n == 0) continue;
    svg << "<g class=\"series\" data-label=\"" << escape(s.label) << "\">\n";
    svg << "<polygon class=\"band\" fill=\"" << color << "\" fill-opacity=\"0.2\" stroke=\"none\" points=\"";
    for (std::size_t i = 0; i < n; ++i) {
      svg << px(static_cast<double>(i)) << ',' << py(s.stats.mean[i] + s.stats.stddev[i]) << ' ';
    }
    for (std::size_t i = n; i-- > 0;) {
      svg << px(static_cast<double>(i)) << ',' << py(s.stats.mean[i] - s.stats.stddev[i]) << ' ';
    }
    svg << "\"/>\n";
    svg << "<polyline class=\"mean\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < n; ++i) {
      svg << px(static_cast<double>(i)) << ',' << py(s.stats.mean[i]) << ' ';
    }
    svg << "\"/>\n";
    if (s.stats.switch_episode) {
      const double x = px(*s.stats.switch_episode);
      svg << "<line class=\"switch\" x1=\"" << x << "\" y1=\"" << kMargin << "\" x2=\"" << x << "\" y2=\""
          << kMargin + plot_h << "\" stroke=\"" << color << "\" stroke-dasharray=\"6,4\"/>\n";
    }
    svg << "<text x=\"" << kWidth - kMargin - 150 << "\" y=\"" << kMargin + 18 + 16 * static_cast<double>(k)
        << "\" fill=\"" << color << "\" font-family=\"sans-serif\" font-size=\"12\">" << escape(s.label)
        << " (n=" << s.stats.n_seeds << ")</text>\n";
    svg << "</g>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

void emit_plot(const std::vector<std::string>& inputs, const std::string& output_path) {
  if (inputs.empty()) throw std::invalid_argument("plot: no input files");
  std::vector<PlotSeries> series;
  for (const auto& path : inputs) {
    series.push_back({std::filesystem::path(path).stem().string(), curve_stats(read_curve_file(path))});
  }
  std::ofstream out(output_path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + output_path);
  out << render_svg(series);
  if (!out) throw std::runtime_error("write failed: " + output_path);
}

}  // namespace tabql
