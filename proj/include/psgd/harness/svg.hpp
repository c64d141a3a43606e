#pragma once

// Minimal SVG line charts with shaded bands, log-scaled x axis.

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "psgd/harness/experiment.hpp"

namespace psgd::harness {

struct PlotSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> lower;  // optional band; empty or same length as y
  std::vector<double> upper;
};

struct PlotSpec {
  std::string title;
  std::string x_label = "n";
  std::string y_label;
  bool log_y = false;
  std::optional<double> reference;  // dashed horizontal line
  int width = 640;
  int height = 420;
};

std::string render_svg(const PlotSpec& spec, const std::vector<PlotSeries>& series);

/// Coverage, NMSE and sqrt(n)||R_n|| panels for every (dim, regime) cell,
/// bands at +/- 1.96 SE. Pure function of the aggregates. Returns
/// (file name, svg text) pairs.
std::vector<std::pair<std::string, std::string>> aggregate_plots(const std::vector<AggregateRow>& rows,
                                                                 double coverage_level = 0.95);

/// sqrt(n)|R_n| against n for every (alpha, beta) cell.
std::string saturator_plot(const std::vector<SaturatorRow>& rows);

}  // namespace psgd::harness
