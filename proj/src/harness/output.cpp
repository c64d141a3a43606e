#include "psgd/harness/output.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "psgd/harness/seeding.hpp"
#include "psgd/harness/svg.hpp"
#include "psgd/kernels.hpp"
#include "psgd/rng.hpp"

#ifndef PSGD_GIT_DESCRIBE
#define PSGD_GIT_DESCRIBE "unknown"
#endif

namespace psgd::harness {

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

namespace {

std::string opt_number(const std::optional<double>& v) { return v ? format_number(*v) : "NA"; }

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace

std::string rows_csv(const std::vector<ExperimentRow>& rows) {
  std::string out = std::string(kRowsHeader) + "\n";
  for (const auto& r : rows) {
    out += r.method + "," + std::to_string(r.dim) + "," + r.regime + "," + std::to_string(r.n) + "," +
           std::to_string(r.replication) + "," + format_number(r.coverage) + "," + format_number(r.nmse) + "," +
           format_number(r.sqrt_n_rn) + "," + format_number(r.identity_gap) + "\n";
  }
  return out;
}

std::string aggregate_csv(const std::vector<AggregateRow>& rows) {
  std::string out =
      "method,dim,regime,n,count,coverage_mean,coverage_se,nmse_mean,nmse_se,sqrt_n_rn_mean,sqrt_n_rn_se,"
      "identity_gap_mean,identity_gap_se\n";
  for (const auto& r : rows) {
    out += r.method + "," + std::to_string(r.dim) + "," + r.regime + "," + std::to_string(r.n) + "," +
           std::to_string(r.count);
    for (const Stat* s : {&r.coverage, &r.nmse, &r.sqrt_n_rn, &r.identity_gap})
      out += "," + format_number(s->mean) + "," + format_number(s->se);
    out += "\n";
  }
  return out;
}

std::string stabilization_csv(const std::vector<StabilizationRow>& rows) {
  std::string out =
      "method,dim,regime,replication,mt_increment_slope,terminal_drift_norm,clipped_steps,clipped_after_100\n";
  for (const auto& r : rows)
    out += r.method + "," + std::to_string(r.dim) + "," + r.regime + "," + std::to_string(r.replication) + "," +
           opt_number(r.mt_increment_slope) + "," + format_number(r.terminal_drift_norm) + "," +
           std::to_string(r.clipped_steps) + "," + std::to_string(r.clipped_after_100) + "\n";
  return out;
}

std::string summary_csv(const std::vector<GroupSummary>& rows) {
  std::string out =
      "method,dim,regime,replications,aborted,terminal_n,coverage,nmse,sqrt_n_rn,slope_full,slope_second_half,"
      "mt_increment_slope,max_identity_gap,clipped_fraction_after_100\n";
  for (const auto& g : rows) {
    auto slope = [](const std::optional<SlopeFit>& f) { return f ? format_number(f->slope) : std::string("NA"); };
    out += g.method + "," + std::to_string(g.dim) + "," + g.regime + "," + std::to_string(g.replications) + "," +
           std::to_string(g.aborted) + "," + std::to_string(g.terminal_n) + "," + format_number(g.coverage) + "," +
           format_number(g.nmse) + "," + format_number(g.sqrt_n_rn) + "," + slope(g.slope_full) + "," +
           slope(g.slope_second_half) + "," + opt_number(g.mt_increment_slope) + "," +
           format_number(g.max_identity_gap) + "," + format_number(g.clipped_fraction_after_100) + "\n";
  }
  return out;
}

std::string saturator_csv(const std::vector<SaturatorRow>& rows) {
  std::string out = "alpha,beta,n,sqrt_n_Rn,Bn,Sn,Dn\n";
  for (const auto& r : rows)
    out += format_number(r.alpha) + "," + format_number(r.beta) + "," + std::to_string(r.split.n) + "," +
           format_number(r.split.scaled()) + "," + format_number(r.split.b) + "," + format_number(r.split.s) + "," +
           format_number(r.split.d) + "\n";
  return out;
}

std::string saturator_slopes_csv(const std::vector<SaturatorSlope>& rows) {
  std::string out = "alpha,beta,predicted_slope,fitted_slope,r2,side_ratio,hypotheses_ok\n";
  for (const auto& r : rows)
    out += format_number(r.alpha) + "," + format_number(r.beta) + "," + format_number(r.predicted) + "," +
           format_number(r.fit.slope) + "," + format_number(r.fit.r2) + "," + format_number(r.side_ratio) + "," +
           (r.hypotheses_ok ? "true" : "false") + "\n";
  return out;
}

std::string metadata_json(const ExperimentResult& res) {
  nlohmann::ordered_json j;
  j["experiment"] = std::string(to_string(res.spec.kind));
  j["git_describe"] = PSGD_GIT_DESCRIBE;
  j["kernels"] = kernels::active().name;
  j["generator"] = {{"name", CounterRng::kName}, {"version", CounterRng::kVersion}};
  j["seed_scheme"] = seed_scheme_description();
  j["base_seed"] = res.spec.base_seed;
  nlohmann::ordered_json cfg = nlohmann::ordered_json::object();
  const KeyValueConfig spec_cfg = spec_to_config(res.spec);
  for (const auto& [k, v] : spec_cfg.values()) cfg[k] = v;
  j["config"] = cfg;
  nlohmann::ordered_json problems = nlohmann::ordered_json::object();
  for (const auto& [k, v] : res.problem_info) problems[k] = v;
  j["problems"] = problems;
  nlohmann::ordered_json seeds = nlohmann::ordered_json::array();
  for (const auto& job : res.jobs)
    seeds.push_back({{"method", job.method},
                     {"dim", job.dim},
                     {"regime", job.regime},
                     {"replication", job.replication},
                     {"seed", job.seed}});
  j["seeds"] = seeds;
  j["replications_total"] = res.jobs.size();
  j["replications_aborted"] = res.aborted;
  j["abort_log"] = res.abort_log;
  j["failed"] = res.failed;
  if (res.failed) j["failure"] = res.failure;
  j["elapsed_seconds"] = res.elapsed_seconds;
  return j.dump(2) + "\n";
}

std::string summary_text(const ExperimentResult& res) {
  std::ostringstream out;
  out << std::fixed;
  if (res.spec.kind == ExperimentKind::Saturate) {
    out << "alpha  beta   predicted  fitted   (|B|+|S|)/D  hypotheses\n";
    for (const auto& s : res.saturator_slopes)
      out << std::setprecision(2) << std::setw(5) << s.alpha << "  " << std::setw(5) << s.beta << "  "
          << std::setprecision(3) << std::setw(9) << s.predicted << "  " << std::setw(7) << s.fit.slope << "  "
          << std::setw(11) << s.side_ratio << "  " << (s.hypotheses_ok ? "ok" : "BREACH") << "\n";
    return out.str();
  }
  out << "method             dim regime          n        coverage  nmse    sqrt_n_rn  slope(full)  "
         "slope(2nd half)  Mt-slope\n";
  for (const auto& g : res.summary) {
    auto slope = [](const std::optional<SlopeFit>& f) {
      std::ostringstream s;
      s << std::fixed << std::setprecision(3);
      if (f) s << f->slope; else s << "NA";
      return s.str();
    };
    std::ostringstream mt;
    mt << std::fixed << std::setprecision(3);
    if (g.mt_increment_slope) mt << *g.mt_increment_slope; else mt << "NA";
    out << std::left << std::setw(18) << g.method << " " << std::right << std::setw(3) << g.dim << " " << std::left
        << std::setw(15) << g.regime << " " << std::right << std::setw(8) << g.terminal_n << "  "
        << std::setprecision(3) << std::setw(8) << g.coverage << "  " << std::setw(6) << g.nmse << "  "
        << std::setw(9) << g.sqrt_n_rn << "  " << std::setw(11) << slope(g.slope_full) << "  " << std::setw(15)
        << slope(g.slope_second_half) << "  " << std::setw(8) << mt.str() << "\n";
  }
  out << "replications: " << res.jobs.size() << " run, " << res.aborted << " aborted\n";
  for (const auto& line : res.abort_log) out << "  aborted: " << line << "\n";
  if (res.failed) out << "FAILED: " << res.failure << "\n";
  return out.str();
}

std::vector<std::filesystem::path> write_outputs(const ExperimentResult& res) {
  const auto& dir = res.spec.output_dir;
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  auto put = [&](const std::filesystem::path& p, const std::string& text) {
    write_file(p, text);
    written.push_back(p);
  };
  if (res.spec.kind == ExperimentKind::Saturate) {
    put(dir / "saturator.csv", saturator_csv(res.saturator));
    put(dir / "saturator_slopes.csv", saturator_slopes_csv(res.saturator_slopes));
    if (res.spec.write_plots) put(dir / "saturator.svg", saturator_plot(res.saturator));
  } else {
    put(dir / "rows.csv", rows_csv(res.rows));
    put(dir / "aggregate.csv", aggregate_csv(res.aggregates));
    put(dir / "stabilization.csv", stabilization_csv(res.stabilization));
    put(dir / "summary.csv", summary_csv(res.summary));
    if (res.spec.write_plots) {
      const auto plot_dir = dir / "plots";
      std::filesystem::create_directories(plot_dir);
      for (const auto& [name, svg] : aggregate_plots(res.aggregates, res.spec.coverage_level))
        put(plot_dir / name, svg);
    }
  }
  put(dir / "summary.txt", summary_text(res));
  put(dir / "metadata.json", metadata_json(res));
  return written;
}

int CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return static_cast<int>(i);
  return -1;
}

CsvTable parse_csv_table(const std::string& text) {
  CsvTable t;
  std::istringstream in(text);
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (;;) {
      const auto comma = line.find(',', start);
      fields.push_back(line.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (first) {
      t.header = std::move(fields);
      first = false;
    } else {
      if (fields.size() != t.header.size())
        throw std::invalid_argument("csv row has " + std::to_string(fields.size()) + " fields, header has " +
                                    std::to_string(t.header.size()));
      t.rows.push_back(std::move(fields));
    }
  }
  if (first) throw std::invalid_argument("csv: empty input");
  return t;
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_csv_table(ss.str());
}

}  // namespace psgd::harness
