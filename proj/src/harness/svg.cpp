#include "psgd/harness/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <tuple>

namespace psgd::harness {

namespace {

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

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

struct Axis {
  double lo, hi;
  bool log;
  double map(double v, double a, double b) const {
    const double t = log ? (std::log10(v) - std::log10(lo)) / (std::log10(hi) - std::log10(lo)) : (v - lo) / (hi - lo);
    return a + t * (b - a);
  }
  std::vector<double> ticks() const {
    std::vector<double> out;
    if (log) {
      for (int e = static_cast<int>(std::floor(std::log10(lo))); e <= static_cast<int>(std::ceil(std::log10(hi))); ++e) {
        const double v = std::pow(10.0, e);
        if (v >= lo * (1 - 1e-9) && v <= hi * (1 + 1e-9)) out.push_back(v);
      }
      if (out.size() < 2) out = {lo, hi};
    } else {
      const double span = hi - lo;
      const double raw = span / 5.0;
      const double mag = std::pow(10.0, std::floor(std::log10(raw)));
      double step = mag;
      for (double m : {1.0, 2.0, 5.0, 10.0})
        if (raw <= m * mag) {
          step = m * mag;
          break;
        }
      for (double v = std::ceil(lo / step) * step; v <= hi + 1e-12 * span; v += step) out.push_back(v);
    }
    return out;
  }
};

Axis make_axis(std::vector<double> values, bool log, std::optional<double> extra) {
  if (extra) values.push_back(*extra);
  std::vector<double> usable;
  for (double v : values)
    if (std::isfinite(v) && (!log || v > 0.0)) usable.push_back(v);
  if (usable.empty()) return {log ? 0.1 : 0.0, 1.0, log};
  double lo = *std::min_element(usable.begin(), usable.end());
  double hi = *std::max_element(usable.begin(), usable.end());
  if (log) {
    if (hi <= lo) hi = lo * 10.0;
    lo /= 1.15;
    hi *= 1.15;
  } else {
    if (hi <= lo) hi = lo + 1.0;
    const double pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;
  }
  return {lo, hi, log};
}

}  // namespace

std::string render_svg(const PlotSpec& spec, const std::vector<PlotSeries>& series) {
  const double left = 70, right = 170, top = 40, bottom = 55;
  const double w = spec.width, h = spec.height;
  const double x0 = left, x1 = w - right, y0 = h - bottom, y1 = top;

  std::vector<double> xs, ys;
  for (const auto& s : series) {
    xs.insert(xs.end(), s.x.begin(), s.x.end());
    ys.insert(ys.end(), s.y.begin(), s.y.end());
    ys.insert(ys.end(), s.lower.begin(), s.lower.end());
    ys.insert(ys.end(), s.upper.begin(), s.upper.end());
  }
  const Axis ax = make_axis(xs, true, std::nullopt);
  const Axis ay = make_axis(ys, spec.log_y, spec.reference);

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << spec.width << "\" height=\"" << spec.height
    << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << num((x0 + x1) / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">"
    << escape(spec.title) << "</text>\n";
  o << "<rect x=\"" << num(x0) << "\" y=\"" << num(y1) << "\" width=\"" << num(x1 - x0) << "\" height=\""
    << num(y0 - y1) << "\" fill=\"none\" stroke=\"#444\"/>\n";
  for (double t : ax.ticks()) {
    const double px = ax.map(t, x0, x1);
    o << "<line x1=\"" << num(px) << "\" y1=\"" << num(y0) << "\" x2=\"" << num(px) << "\" y2=\"" << num(y0 + 5)
      << "\" stroke=\"#444\"/><text x=\"" << num(px) << "\" y=\"" << num(y0 + 18) << "\" text-anchor=\"middle\">"
      << tick_label(t) << "</text>\n";
  }
  for (double t : ay.ticks()) {
    const double py = ay.map(t, y0, y1);
    o << "<line x1=\"" << num(x0 - 5) << "\" y1=\"" << num(py) << "\" x2=\"" << num(x0) << "\" y2=\"" << num(py)
      << "\" stroke=\"#444\"/><text x=\"" << num(x0 - 8) << "\" y=\"" << num(py + 4) << "\" text-anchor=\"end\">"
      << tick_label(t) << "</text>\n";
  }
  o << "<text x=\"" << num((x0 + x1) / 2) << "\" y=\"" << num(h - 12) << "\" text-anchor=\"middle\">"
    << escape(spec.x_label) << "</text>\n";
  o << "<text transform=\"translate(16," << num((y0 + y1) / 2) << ") rotate(-90)\" text-anchor=\"middle\">"
    << escape(spec.y_label) << "</text>\n";
  if (spec.reference) {
    const double py = ay.map(*spec.reference, y0, y1);
    o << "<line x1=\"" << num(x0) << "\" y1=\"" << num(py) << "\" x2=\"" << num(x1) << "\" y2=\"" << num(py)
      << "\" stroke=\"#888\" stroke-dasharray=\"5,4\"/>\n";
  }

  auto ok = [&](double x, double y) { return std::isfinite(x) && std::isfinite(y) && x > 0 && (!ay.log || y > 0); };
  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    const char* colour = kPalette[si % (sizeof kPalette / sizeof *kPalette)];
    if (s.lower.size() == s.y.size() && s.upper.size() == s.y.size() && !s.y.empty()) {
      std::ostringstream pts;
      for (std::size_t i = 0; i < s.x.size(); ++i)
        if (ok(s.x[i], s.upper[i])) pts << num(ax.map(s.x[i], x0, x1)) << "," << num(ay.map(s.upper[i], y0, y1)) << " ";
      for (std::size_t i = s.x.size(); i-- > 0;) {
        const double lo = ay.log ? std::max(s.lower[i], ay.lo) : s.lower[i];
        if (ok(s.x[i], lo)) pts << num(ax.map(s.x[i], x0, x1)) << "," << num(ay.map(lo, y0, y1)) << " ";
      }
      o << "<polygon points=\"" << pts.str() << "\" fill=\"" << colour << "\" fill-opacity=\"0.18\" stroke=\"none\"/>\n";
    }
    std::ostringstream line;
    for (std::size_t i = 0; i < s.x.size(); ++i)
      if (ok(s.x[i], s.y[i])) line << num(ax.map(s.x[i], x0, x1)) << "," << num(ay.map(s.y[i], y0, y1)) << " ";
    o << "<polyline points=\"" << line.str() << "\" fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.8\"/>\n";
    const double ly = y1 + 14 + 18.0 * static_cast<double>(si);
    o << "<line x1=\"" << num(x1 + 12) << "\" y1=\"" << num(ly) << "\" x2=\"" << num(x1 + 32) << "\" y2=\""
      << num(ly) << "\" stroke=\"" << colour << "\" stroke-width=\"2\"/><text x=\"" << num(x1 + 38) << "\" y=\""
      << num(ly + 4) << "\">" << escape(s.label) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

std::vector<std::pair<std::string, std::string>> aggregate_plots(const std::vector<AggregateRow>& rows,
                                                                 double coverage_level) {
  using Cell = std::pair<std::size_t, std::string>;
  std::map<Cell, std::map<std::string, std::vector<const AggregateRow*>>> cells;
  for (const auto& r : rows) cells[{r.dim, r.regime}][r.method].push_back(&r);

  struct Metric {
    const char* key;
    const char* label;
    Stat AggregateRow::*field;
    bool log_y;
  };
  const Metric metrics[] = {{"coverage", "coverage", &AggregateRow::coverage, false},
                            {"nmse", "NMSE", &AggregateRow::nmse, true},
                            {"sqrt_n_rn", "sqrt(n) ||R_n||", &AggregateRow::sqrt_n_rn, true}};

  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& [cell, methods] : cells) {
    for (const auto& m : metrics) {
      std::vector<PlotSeries> series;
      for (const auto& [method, pts] : methods) {
        PlotSeries s;
        s.label = method;
        for (const auto* p : pts) {
          const Stat& st = p->*m.field;
          s.x.push_back(static_cast<double>(p->n));
          s.y.push_back(st.mean);
          s.lower.push_back(st.mean - 1.96 * st.se);
          s.upper.push_back(st.mean + 1.96 * st.se);
        }
        series.push_back(std::move(s));
      }
      PlotSpec spec;
      spec.title = std::string(m.label) + " (d = " + std::to_string(cell.first) + ", " + cell.second + ")";
      spec.y_label = m.label;
      spec.log_y = m.log_y;
      if (std::string(m.key) == "coverage") spec.reference = coverage_level;
      if (std::string(m.key) == "nmse") spec.reference = 1.0;
      out.emplace_back(std::string(m.key) + "_d" + std::to_string(cell.first) + "_" + cell.second + ".svg",
                       render_svg(spec, series));
    }
  }
  return out;
}

std::string saturator_plot(const std::vector<SaturatorRow>& rows) {
  std::map<std::pair<double, double>, PlotSeries> by_cell;
  for (const auto& r : rows) {
    auto& s = by_cell[{r.alpha, r.beta}];
    if (s.label.empty()) s.label = "alpha " + tick_label(r.alpha) + ", beta " + tick_label(r.beta);
    s.x.push_back(static_cast<double>(r.split.n));
    s.y.push_back(std::abs(r.split.scaled()));
  }
  std::vector<PlotSeries> series;
  for (auto& [k, s] : by_cell) series.push_back(std::move(s));
  PlotSpec spec;
  spec.title = "saturating construction";
  spec.y_label = "sqrt(n) |R_n|";
  spec.log_y = true;
  return render_svg(spec, series);
}

}  // namespace psgd::harness
