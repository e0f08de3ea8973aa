#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tabql/csv.hpp"

namespace tabql {

/// Per-episode statistics across seeds. Seeds are aligned by episode
/// position and truncated to the shortest seed.
struct CurveStats {
  std::vector<double> mean;
  std::vector<double> stddev;  // population standard deviation
  std::size_t n_seeds = 0;
  /// Mean episode position of the first "icl" episode over seeds that switched.
  std::optional<double> switch_episode;
};

CurveStats curve_stats(const std::vector<CurveRow>& rows);

struct PlotSeries {
  std::string label;
  CurveStats stats;
};

/// Mean line with a shaded mean +/- std band per series; a dashed vertical
/// marker at each series' switching episode.
std::string render_svg(const std::vector<PlotSeries>& series, const std::string& title = "");

/// Reads each curve CSV (labelled by file stem) and writes one SVG.
void emit_plot(const std::vector<std::string>& inputs, const std::string& output_path);

}  // namespace tabql
