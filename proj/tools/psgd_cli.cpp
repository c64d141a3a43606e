// Command-line front end: runs the experiments and fits slopes on their output.

#include <cmath>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "psgd/harness/config.hpp"
#include "psgd/harness/experiment.hpp"
#include "psgd/harness/output.hpp"
#include "psgd/harness/slopes.hpp"
#include "psgd/kernels.hpp"

namespace h = psgd::harness;

namespace {

struct GlobalOptions {
  std::string config;
  std::string out;
  unsigned workers = 0;
  bool full_scale = false;
  std::optional<std::uint64_t> seed;
  std::string kernels = "auto";
  bool no_plots = false;
  bool quiet = false;
};

int run_kind(h::ExperimentKind kind, const GlobalOptions& g, const std::string& data,
             std::optional<std::uint64_t> replications, std::optional<std::uint64_t> n_max) {
  h::ExperimentSpec spec = h::default_spec(kind, g.full_scale);
  spec.output_dir = std::string("out/") + std::string(h::to_string(kind));
  if (!g.config.empty()) h::apply_config(spec, h::KeyValueConfig::load(g.config));
  if (!g.out.empty()) spec.output_dir = g.out;
  if (g.workers) spec.workers = g.workers;
  if (g.seed) spec.base_seed = *g.seed;
  if (g.no_plots) spec.write_plots = false;
  if (!data.empty()) spec.data_path = data;
  if (replications) spec.replications = *replications;
  if (n_max) {
    if (kind == h::ExperimentKind::Saturate) {
      spec.saturator.n_max = *n_max;
    } else {
      const std::uint64_t lo = std::min(spec.n_grid.front(), *n_max);
      spec.n_grid = psgd::log_grid(lo, *n_max, 10);
    }
  }

  const h::ExperimentResult res = h::run_experiment(spec);
  const auto files = h::write_outputs(res);
  if (!g.quiet) {
    std::cout << h::summary_text(res);
    std::cout << "wrote " << files.size() << " files to " << res.spec.output_dir.string() << " in "
              << res.elapsed_seconds << " s\n";
  }
  if (res.failed) {
    std::cerr << "experiment failed: " << res.failure << "\n";
    return 2;
  }
  return 0;
}

int run_slopes(const std::string& input, const std::string& range_name, const std::string& column_name) {
  const h::FitRange range = h::parse_fit_range(range_name);
  const h::CsvTable table = h::read_csv(input);
  const int n_col = table.column("n");
  if (n_col < 0) throw std::invalid_argument(input + ": no 'n' column");
  int y_col = -1;
  std::string y_name = column_name;
  if (y_name.empty()) {
    for (const char* c : {"sqrt_n_rn_mean", "sqrt_n_rn", "sqrt_n_Rn"})
      if (table.column(c) >= 0) {
        y_name = c;
        break;
      }
  }
  y_col = table.column(y_name);
  if (y_col < 0) throw std::invalid_argument(input + ": no column '" + y_name + "'");
  std::vector<int> key_cols;
  std::vector<std::string> key_names;
  for (const char* c : {"method", "dim", "regime", "alpha", "beta"})
    if (table.column(c) >= 0) {
      key_cols.push_back(table.column(c));
      key_names.push_back(c);
    }

  // Average |y| over replications within each (group, n).
  std::map<std::string, std::map<double, std::pair<double, std::size_t>>> groups;
  for (const auto& row : table.rows) {
    std::string key;
    for (std::size_t i = 0; i < key_cols.size(); ++i) key += (i ? "," : "") + row[key_cols[i]];
    const double n = h::parse_double(row[n_col], "n");
    const double y = std::abs(h::parse_double(row[y_col], y_name));
    auto& cell = groups[key][n];
    cell.first += y;
    cell.second += 1;
  }
  for (std::size_t i = 0; i < key_names.size(); ++i) std::cout << key_names[i] << ",";
  std::cout << "column,range,slope,intercept,r2,points\n";
  for (const auto& [key, series] : groups) {
    std::vector<std::pair<double, double>> pts;
    for (const auto& [n, acc] : series) pts.emplace_back(n, acc.first / static_cast<double>(acc.second));
    const h::SlopeFit fit = h::fit_loglog_slope(pts, range);
    std::cout << key << (key.empty() ? "" : ",") << y_name << "," << range_name << "," << h::format_number(fit.slope)
              << "," << h::format_number(fit.intercept) << "," << h::format_number(fit.r2) << "," << fit.points
              << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Preconditioned averaged SGD: experiments and diagnostics"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalOptions g;
  app.add_option("--config", g.config, "key = value experiment configuration file")->check(CLI::ExistingFile);
  app.add_option("--out", g.out, "output directory");
  app.add_option("--workers", g.workers, "worker threads (default 1)")->check(CLI::PositiveNumber);
  app.add_flag("--full-scale,--paper-scale", g.full_scale, "use the full-size grid");
  app.add_option("--seed", g.seed, "base seed");
  app.add_option("--kernels", g.kernels, "kernel table: auto, scalar or avx2")
      ->check(CLI::IsMember({"auto", "scalar", "avx2"}));
  app.add_flag("--no-plots", g.no_plots, "skip SVG output");
  app.add_flag("--quiet", g.quiet, "suppress the summary table");

  std::optional<std::uint64_t> reps, n_max;
  std::string data;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--replications", reps, "override the replication count");
    sub->add_option("--n-max", n_max, "override the largest sample size");
  };
  auto* synth = app.add_subcommand("synth", "synthetic linear regression (coverage, NMSE, remainder)");
  add_common(synth);
  auto* logistic = app.add_subcommand("logistic", "logistic regression on a tabular dataset");
  logistic->add_option("--data", data, "CSV with a header row and a diagnosis column")
      ->required()
      ->check(CLI::ExistingFile);
  add_common(logistic);
  auto* threshold = app.add_subcommand("threshold", "SA-RMSProp against constant-gain EMA variants");
  add_common(threshold);
  auto* saturate = app.add_subcommand("saturate", "deterministic saturating construction sweep");
  saturate->add_option("--n-max", n_max, "largest n of the sweep grid");
  std::string slopes_input, slopes_range = "full", slopes_column;
  auto* slopes = app.add_subcommand("slopes", "log-log slope fits over an output CSV");
  slopes->add_option("--input", slopes_input, "rows, aggregate or saturator CSV")->required()->check(CLI::ExistingFile);
  slopes->add_option("--range", slopes_range, "full or second_half")->check(CLI::IsMember({"full", "second_half"}));
  slopes->add_option("--column", slopes_column, "y column (default: the scaled remainder)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (!psgd::kernels::select(g.kernels)) {
      std::cerr << "kernel table '" << g.kernels << "' is not available on this machine\n";
      return 1;
    }
    if (*synth) return run_kind(h::ExperimentKind::Synth, g, "", reps, n_max);
    if (*logistic) return run_kind(h::ExperimentKind::Logistic, g, data, reps, n_max);
    if (*threshold) return run_kind(h::ExperimentKind::Threshold, g, "", reps, n_max);
    if (*saturate) return run_kind(h::ExperimentKind::Saturate, g, "", std::nullopt, n_max);
    if (*slopes) return run_slopes(slopes_input, slopes_range, slopes_column);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
