#include "psgd/harness/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <tuple>

#include "psgd/decomposition.hpp"
#include "psgd/harness/seeding.hpp"
#include "psgd/inference.hpp"

namespace psgd::harness {

std::string_view to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::Synth: return "synth";
    case ExperimentKind::Logistic: return "logistic";
    case ExperimentKind::Threshold: return "threshold";
    case ExperimentKind::Saturate: return "saturate";
  }
  return "unknown";
}

ExperimentKind parse_experiment_kind(std::string_view s) {
  if (s == "synth") return ExperimentKind::Synth;
  if (s == "logistic") return ExperimentKind::Logistic;
  if (s == "threshold") return ExperimentKind::Threshold;
  if (s == "saturate") return ExperimentKind::Saturate;
  throw std::invalid_argument("unknown experiment: " + std::string(s));
}

PreconditionerSpec parse_method(std::string_view token, const MethodDefaults& defaults) {
  PreconditionerSpec p;
  p.input = defaults.input;
  p.epsilon = defaults.epsilon;
  p.ridge_before_map = defaults.ridge_before_map;
  p.schedule = defaults.schedule;
  p.driver_clip = defaults.driver_clip;
  constexpr std::string_view ema = "ema_rmsprop_";
  if (token.substr(0, ema.size()) == ema) {
    p.rule = Rule::EmaRmsprop;
    p.schedule = GainSchedule::constant(parse_double(token.substr(ema.size()), "ema_rmsprop gain"));
  } else {
    p.rule = parse_rule(token);
  }
  if (p.rule == Rule::SaOns && p.input == InputMode::Gradient)
    throw std::invalid_argument("sa_ons needs Hessian-estimate input");
  p.validate();
  return p;
}

void ExperimentSpec::validate() const {
  if (kind == ExperimentKind::Saturate) {
    if (saturator.alphas.empty() || saturator.betas.empty())
      throw std::invalid_argument("saturate: alphas and betas must be non-empty");
    if (saturator.n_min < 2 || saturator.n_max < saturator.n_min || saturator.per_decade <= 0)
      throw std::invalid_argument("saturate: bad n grid");
    return;
  }
  if (methods.empty()) throw std::invalid_argument("experiment: no methods");
  if (methods.size() > kMaxMethods) throw std::invalid_argument("experiment: too many methods");
  if (regimes.empty() || regimes.size() > kMaxRegimes) throw std::invalid_argument("experiment: bad regime list");
  if (kind == ExperimentKind::Logistic) {
    if (regimes.size() != 1 || regimes.front() != Regime::Logistic)
      throw std::invalid_argument("logistic experiment uses the logistic regime only");
    if (data_path.empty()) throw std::invalid_argument("logistic experiment needs a dataset path");
  } else {
    if (dims.empty() || dims.size() > kMaxDims) throw std::invalid_argument("experiment: bad dims list");
    for (Regime r : regimes)
      if (r == Regime::Logistic) throw std::invalid_argument("logistic regime needs the logistic experiment");
  }
  if (replications == 0 || replications > kMaxReplications)
    throw std::invalid_argument("experiment: replications out of range");
  if (n_grid.empty() || !std::is_sorted(n_grid.begin(), n_grid.end()) || n_grid.front() == 0)
    throw std::invalid_argument("experiment: bad checkpoint grid");
  if (workers == 0) throw std::invalid_argument("experiment: workers must be positive");
  steps.validate();
  for (const auto& m : methods) m.validate();
  std::set<std::string> labels;
  for (const auto& m : methods)
    if (!labels.insert(m.label()).second) throw std::invalid_argument("experiment: duplicate method " + m.label());
}

namespace {

std::vector<PreconditionerSpec> methods_from(const std::vector<std::string>& tokens, const MethodDefaults& d) {
  std::vector<PreconditionerSpec> out;
  for (const auto& t : tokens) out.push_back(parse_method(t, d));
  return out;
}

const std::vector<std::string> kFourMethods{"identity", "sa_adagrad", "sa_rmsprop", "sa_ons"};

std::string format_double(double v) {
  std::ostringstream ss;
  ss.precision(17);
  ss << v;
  return ss.str();
}

template <typename T, typename F>
std::string join(const std::vector<T>& xs, F&& f) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? "," : "") + f(xs[i]);
  return out;
}

}  // namespace

ExperimentSpec default_spec(ExperimentKind kind, bool full_scale) {
  ExperimentSpec s;
  s.kind = kind;
  switch (kind) {
    case ExperimentKind::Synth:
      s.dims = full_scale ? std::vector<std::size_t>{5, 20, 50} : std::vector<std::size_t>{5};
      s.regimes = {Regime::GeneralSandwich, Regime::InfoEquality};
      s.method_defaults = MethodDefaults{InputMode::Hessian, 0.5, true, GainSchedule::sa_shifted(), std::nullopt};
      s.methods = methods_from(kFourMethods, s.method_defaults);
      s.n_grid = log_grid(5000, full_scale ? 5000000 : 500000, 10);
      s.replications = 50;
      s.steps = StepSchedule{0.2, 0.7};
      s.clip_norm = 500.0;
      break;
    case ExperimentKind::Threshold:
      s.dims = {5};
      s.regimes = {Regime::InfoEquality};
      s.method_defaults = MethodDefaults{InputMode::Hessian, 1.0, true, GainSchedule::sa_shifted(), std::nullopt};
      s.methods = methods_from({"sa_rmsprop", "ema_rmsprop_0.5", "ema_rmsprop_0.999"}, s.method_defaults);
      s.n_grid = log_grid(5000, full_scale ? 5000000 : 1000000, 10);
      s.replications = full_scale ? 100 : 50;
      s.steps = StepSchedule{2.0, 0.7};
      s.clip_norm = 500.0;
      break;
    case ExperimentKind::Logistic:
      s.dims = {};
      s.regimes = {Regime::Logistic};
      s.method_defaults = MethodDefaults{InputMode::Hessian, 0.1, false, GainSchedule::sa_shifted(), std::nullopt};
      s.methods = methods_from(kFourMethods, s.method_defaults);
      s.n_grid = log_grid(1000, full_scale ? 200000 : 100000, 10);
      s.replications = 100;
      // H spans [0.10, 0.43] here; eta0 = 1 puts eta0 * spec(H) where 0.2 puts the Toeplitz design.
      s.steps = StepSchedule{1.0, 0.7};
      s.clip_norm = 500.0;
      s.ridge = 0.1;
      break;
    case ExperimentKind::Saturate:
      s.dims = {};
      s.regimes = {};
      s.replications = 1;
      break;
  }
  return s;
}

void apply_config(ExperimentSpec& s, const KeyValueConfig& cfg) {
  static const std::set<std::string> known{
      "experiment", "dims", "regimes", "methods", "n_min", "n_max", "points_per_decade", "replications", "seed",
      "output_dir", "eta0", "alpha", "clip_norm", "input", "epsilon", "ridge_before_map", "gain", "gain_c",
      "driver_clip", "noise_target_ratio", "data", "ridge", "workers", "plots", "coverage_level",
      "probe_dense_until", "probe_growth", "saturator_alphas", "saturator_betas", "saturator_m0", "saturator_c_m",
      "saturator_c_delta", "saturator_eta0", "saturator_n_min", "saturator_n_max", "saturator_per_decade"};
  cfg.require_known(known);

  if (cfg.has("experiment") && parse_experiment_kind(cfg.get_string("experiment")) != s.kind)
    throw std::invalid_argument("config experiment '" + cfg.get_string("experiment") +
                                "' does not match the subcommand '" + std::string(to_string(s.kind)) + "'");
  if (cfg.has("dims")) {
    s.dims.clear();
    for (const auto& t : cfg.get_list("dims")) s.dims.push_back(parse_u64(t, "dims"));
  }
  if (cfg.has("regimes")) {
    s.regimes.clear();
    for (const auto& t : cfg.get_list("regimes")) s.regimes.push_back(parse_regime(t));
  }
  if (cfg.has("n_min") || cfg.has("n_max") || cfg.has("points_per_decade")) {
    const std::uint64_t lo = cfg.has("n_min") ? cfg.get_u64("n_min") : s.n_grid.front();
    const std::uint64_t hi = cfg.has("n_max") ? cfg.get_u64("n_max") : s.n_max();
    const int per = cfg.has("points_per_decade") ? static_cast<int>(cfg.get_u64("points_per_decade")) : 10;
    s.n_grid = log_grid(lo, hi, per);
  }
  if (cfg.has("replications")) s.replications = cfg.get_u64("replications");
  if (cfg.has("seed")) s.base_seed = cfg.get_u64("seed");
  if (cfg.has("output_dir")) s.output_dir = cfg.get_string("output_dir");
  if (cfg.has("eta0")) s.steps.eta0 = cfg.get_double("eta0");
  if (cfg.has("alpha")) s.steps.alpha = cfg.get_double("alpha");
  if (cfg.has("clip_norm")) {
    const auto v = cfg.get_string("clip_norm");
    s.clip_norm = (v == "none") ? std::nullopt : std::optional<double>(parse_double(v, "clip_norm"));
  }
  bool methods_dirty = false;
  auto& md = s.method_defaults;
  if (cfg.has("input")) md.input = parse_input_mode(cfg.get_string("input")), methods_dirty = true;
  if (cfg.has("epsilon")) md.epsilon = cfg.get_double("epsilon"), methods_dirty = true;
  if (cfg.has("ridge_before_map")) md.ridge_before_map = cfg.get_bool("ridge_before_map"), methods_dirty = true;
  if (cfg.has("gain")) {
    const auto g = cfg.get_string("gain");
    if (g == "sa_over_t") md.schedule = GainSchedule::sa_over_t(md.schedule.c);
    else if (g == "sa_shifted") md.schedule = GainSchedule::sa_shifted(md.schedule.c);
    else throw std::invalid_argument("gain must be sa_over_t or sa_shifted");
    methods_dirty = true;
  }
  if (cfg.has("gain_c")) md.schedule.c = cfg.get_double("gain_c"), methods_dirty = true;
  if (cfg.has("driver_clip")) {
    const auto v = cfg.get_string("driver_clip");
    if (v == "none") {
      md.driver_clip.reset();
    } else {
      const auto parts = split_list(v);
      if (parts.size() != 2) throw std::invalid_argument("driver_clip must be 'lo,hi' or none");
      md.driver_clip = DriverClip{parse_double(parts[0], "driver_clip"), parse_double(parts[1], "driver_clip")};
    }
    methods_dirty = true;
  }
  if (cfg.has("methods")) {
    s.methods = methods_from(cfg.get_list("methods"), md);
  } else if (methods_dirty) {
    std::vector<std::string> tokens;
    for (const auto& m : s.methods) tokens.push_back(m.label());
    s.methods = methods_from(tokens, md);
  }
  if (cfg.has("noise_target_ratio")) s.noise_target_ratio = cfg.get_double("noise_target_ratio");
  if (cfg.has("data")) s.data_path = cfg.get_string("data");
  if (cfg.has("ridge")) s.ridge = cfg.get_double("ridge");
  if (cfg.has("workers")) s.workers = static_cast<unsigned>(cfg.get_u64("workers"));
  if (cfg.has("plots")) s.write_plots = cfg.get_bool("plots");
  if (cfg.has("coverage_level")) s.coverage_level = cfg.get_double("coverage_level");
  if (cfg.has("probe_dense_until")) s.probe_dense_until = cfg.get_u64("probe_dense_until");
  if (cfg.has("probe_growth")) s.probe_growth = cfg.get_double("probe_growth");

  auto& sat = s.saturator;
  auto doubles = [&](const std::string& key) {
    std::vector<double> out;
    for (const auto& t : cfg.get_list(key)) out.push_back(parse_double(t, key));
    return out;
  };
  if (cfg.has("saturator_alphas")) sat.alphas = doubles("saturator_alphas");
  if (cfg.has("saturator_betas")) sat.betas = doubles("saturator_betas");
  if (cfg.has("saturator_m0")) sat.m0 = cfg.get_double("saturator_m0");
  if (cfg.has("saturator_c_m")) sat.c_m = cfg.get_double("saturator_c_m");
  if (cfg.has("saturator_c_delta")) sat.c_delta = cfg.get_double("saturator_c_delta");
  if (cfg.has("saturator_eta0")) sat.eta0 = cfg.get_double("saturator_eta0");
  if (cfg.has("saturator_n_min")) sat.n_min = cfg.get_u64("saturator_n_min");
  if (cfg.has("saturator_n_max")) sat.n_max = cfg.get_u64("saturator_n_max");
  if (cfg.has("saturator_per_decade")) sat.per_decade = static_cast<int>(cfg.get_u64("saturator_per_decade"));
}

KeyValueConfig spec_to_config(const ExperimentSpec& s) {
  KeyValueConfig c;
  c.set("experiment", std::string(to_string(s.kind)));
  c.set("seed", std::to_string(s.base_seed));
  c.set("output_dir", s.output_dir.string());
  if (s.kind == ExperimentKind::Saturate) {
    const auto& sat = s.saturator;
    c.set("saturator_alphas", join(sat.alphas, format_double));
    c.set("saturator_betas", join(sat.betas, format_double));
    c.set("saturator_m0", format_double(sat.m0));
    c.set("saturator_c_m", format_double(sat.c_m));
    c.set("saturator_c_delta", format_double(sat.c_delta));
    c.set("saturator_eta0", format_double(sat.eta0));
    c.set("saturator_n_min", std::to_string(sat.n_min));
    c.set("saturator_n_max", std::to_string(sat.n_max));
    c.set("saturator_per_decade", std::to_string(sat.per_decade));
    return c;
  }
  c.set("dims", join(s.dims, [](std::size_t d) { return std::to_string(d); }));
  c.set("regimes", join(s.regimes, [](Regime r) { return std::string(to_string(r)); }));
  c.set("methods", join(s.methods, [](const PreconditionerSpec& m) { return m.label(); }));
  c.set("n_grid", join(s.n_grid, [](std::uint64_t n) { return std::to_string(n); }));
  c.set("replications", std::to_string(s.replications));
  c.set("eta0", format_double(s.steps.eta0));
  c.set("alpha", format_double(s.steps.alpha));
  c.set("clip_norm", s.clip_norm ? format_double(*s.clip_norm) : "none");
  const auto& md = s.method_defaults;
  c.set("input", std::string(to_string(md.input)));
  c.set("epsilon", format_double(md.epsilon));
  c.set("ridge_before_map", md.ridge_before_map ? "true" : "false");
  c.set("gain", md.schedule.kind == GainKind::SaOverT ? "sa_over_t" : "sa_shifted");
  c.set("gain_c", format_double(md.schedule.c));
  c.set("driver_clip",
        md.driver_clip ? format_double(md.driver_clip->lower) + "," + format_double(md.driver_clip->upper) : "none");
  c.set("noise_target_ratio", format_double(s.noise_target_ratio));
  if (s.kind == ExperimentKind::Logistic) {
    c.set("data", s.data_path.string());
    c.set("ridge", format_double(s.ridge));
  }
  c.set("workers", std::to_string(s.workers));
  c.set("coverage_level", format_double(s.coverage_level));
  c.set("probe_dense_until", std::to_string(s.probe_dense_until));
  c.set("probe_growth", format_double(s.probe_growth));
  return c;
}

ProblemPtr build_problem(const ExperimentSpec& spec, std::size_t dim, Regime regime) {
  if (regime == Regime::Logistic) {
    const DatasetTable table = ingest_csv(spec.data_path);
    return make_logistic_problem(table, spec.ridge);
  }
  LinearProblemOptions opts;
  opts.regime = regime;
  opts.target_ratio = spec.noise_target_ratio;
  return make_linear_problem(dim, opts);
}

void parallel_for(std::size_t count, unsigned workers, const std::function<void(std::size_t)>& body) {
  if (count == 0) return;
  const unsigned n_threads = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(count)));
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::atomic<bool> stop{false};
  auto worker = [&] {
    for (;;) {
      if (stop.load(std::memory_order_relaxed)) return;
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        stop = true;
      }
    }
  };
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(n_threads);
    for (unsigned w = 0; w < n_threads; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (first_error) std::rethrow_exception(first_error);
}

std::vector<AggregateRow> aggregate_rows(const std::vector<ExperimentRow>& rows) {
  using Key = std::tuple<std::string, std::size_t, std::string, std::uint64_t>;
  std::map<Key, std::vector<const ExperimentRow*>> groups;
  for (const auto& r : rows) groups[Key{r.method, r.dim, r.regime, r.n}].push_back(&r);
  std::vector<AggregateRow> out;
  out.reserve(groups.size());
  for (const auto& [key, members] : groups) {
    AggregateRow a;
    std::tie(a.method, a.dim, a.regime, a.n) = key;
    a.count = members.size();
    auto stat = [&](double ExperimentRow::*field) {
      Vector v;
      v.reserve(members.size());
      for (const auto* m : members) v.push_back(m->*field);
      const RemainderStats s = mean_and_se(v);
      return Stat{s.mean, s.std_error};
    };
    a.coverage = stat(&ExperimentRow::coverage);
    a.nmse = stat(&ExperimentRow::nmse);
    a.sqrt_n_rn = stat(&ExperimentRow::sqrt_n_rn);
    a.identity_gap = stat(&ExperimentRow::identity_gap);
    out.push_back(std::move(a));
  }
  return out;
}

namespace {

struct JobOutput {
  bool aborted = false;
  std::string abort_reason;
  std::vector<ExperimentRow> rows;
  StabilizationRow stab;
  std::optional<TrajectoryRecord> record;
};

std::optional<double> increment_slope(const std::vector<ProbeRow>& probes, double lo, double hi) {
  std::vector<std::pair<double, double>> pts;
  pts.reserve(probes.size());
  for (const auto& p : probes)
    if (p.increment > 0.0) pts.emplace_back(static_cast<double>(p.t), p.increment);
  if (pts.size() < 3) return std::nullopt;
  try {
    return fit_binned_loglog(pts, lo, hi).slope;
  } catch (const std::invalid_argument&) {
    return std::nullopt;
  }
}

void run_saturator(const ExperimentSpec& spec, ExperimentResult& res) {
  const auto& sw = spec.saturator;
  const auto grid = log_grid(sw.n_min, sw.n_max, sw.per_decade);
  struct Cell {
    double alpha, beta;
  };
  std::vector<Cell> cells;
  for (double a : sw.alphas)
    for (double b : sw.betas) cells.push_back({a, b});
  std::vector<std::vector<SaturatorRow>> rows(cells.size());
  std::vector<SaturatorSlope> slopes(cells.size());
  parallel_for(cells.size(), spec.workers, [&](std::size_t i) {
    SaturatingSequences seq{cells[i].alpha, cells[i].beta, sw.m0, sw.c_m, sw.c_delta, sw.eta0};
    const auto splits = eval_remainder_grid(seq, grid);
    std::vector<std::pair<double, double>> pts;
    for (const auto& s : splits) {
      rows[i].push_back(SaturatorRow{seq.alpha, seq.beta, s});
      pts.emplace_back(static_cast<double>(s.n), std::abs(s.scaled()));
    }
    SaturatorSlope& out = slopes[i];
    out.alpha = seq.alpha;
    out.beta = seq.beta;
    out.predicted = (seq.alpha + 1.0) / 2.0 - seq.beta;
    out.fit = fit_loglog_slope(pts, FitRange::Full);
    const auto& last = splits.back();
    out.side_ratio = (std::abs(last.b) + std::abs(last.s)) / last.d;
    out.hypotheses_ok = verify_hypotheses(seq, sw.n_max).ok();
  });
  for (auto& r : rows) res.saturator.insert(res.saturator.end(), r.begin(), r.end());
  res.saturator_slopes = std::move(slopes);
}

}  // namespace

ExperimentResult run_experiment(const ExperimentSpec& spec_in) {
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentResult res;
  res.spec = spec_in;
  ExperimentSpec& spec = res.spec;
  spec.validate();

  if (spec.kind == ExperimentKind::Saturate) {
    run_saturator(spec, res);
    res.elapsed_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
  }

  // Problems, one per (dim, regime) cell.
  std::vector<std::vector<ProblemPtr>> problems;
  std::vector<std::vector<SandwichOracle>> oracles;
  if (spec.kind == ExperimentKind::Logistic) {
    ProblemPtr p = build_problem(spec, 0, Regime::Logistic);
    spec.dims = {p->dim()};
    problems = {{p}};
  } else {
    for (std::size_t d : spec.dims) {
      problems.emplace_back();
      for (Regime r : spec.regimes) problems.back().push_back(build_problem(spec, d, r));
    }
  }
  for (std::size_t di = 0; di < problems.size(); ++di) {
    oracles.emplace_back();
    for (std::size_t ri = 0; ri < problems[di].size(); ++ri) {
      const auto& p = *problems[di][ri];
      oracles.back().push_back(make_sandwich_oracle(p.hessian(), p.noise_cov()));
      const std::string prefix = "d" + std::to_string(p.dim()) + "." + std::string(to_string(p.regime())) + ".";
      for (const auto& [k, v] : p.describe()) res.problem_info.emplace_back(prefix + k, v);
    }
  }

  for (std::size_t mi = 0; mi < spec.methods.size(); ++mi)
    for (std::size_t di = 0; di < spec.dims.size(); ++di)
      for (std::size_t ri = 0; ri < spec.regimes.size(); ++ri)
        for (std::uint64_t rep = 0; rep < spec.replications; ++rep) {
          JobInfo j;
          j.method_index = mi;
          j.dim_index = di;
          j.regime_index = ri;
          j.replication = rep;
          j.seed = seed_for(spec.base_seed, mi, di, ri, rep);
          j.method = spec.methods[mi].label();
          j.dim = spec.dims[di];
          j.regime = std::string(to_string(spec.regimes[ri]));
          res.jobs.push_back(std::move(j));
        }

  const std::uint64_t n_max = spec.n_max();
  const double stab_lo = std::max(2.0, spec.stabilization_window_low * static_cast<double>(n_max));
  std::vector<JobOutput> outputs(res.jobs.size());

  parallel_for(res.jobs.size(), spec.workers, [&](std::size_t i) {
    const JobInfo& job = res.jobs[i];
    const ProblemPtr& problem = problems[job.dim_index][job.regime_index];
    const SandwichOracle& oracle = oracles[job.dim_index][job.regime_index];

    RunConfig cfg;
    cfg.problem = problem;
    cfg.preconditioner = spec.methods[job.method_index];
    cfg.steps = spec.steps;
    cfg.n_max = n_max;
    cfg.checkpoints = spec.n_grid;
    cfg.clip_norm = spec.clip_norm;
    cfg.seed = job.seed;
    cfg.record_probes = spec.record_probes;
    cfg.probe_dense_until = spec.probe_dense_until;
    cfg.probe_growth = spec.probe_growth;
    TrajectoryRecord rec = run_trajectory(cfg);

    JobOutput& out = outputs[i];
    if (rec.aborted) {
      out.aborted = true;
      out.abort_reason = rec.abort_reason;
      return;
    }
    const Matrix& h_inv = problem->hessian_inverse();
    for (const auto& cp : rec.checkpoints) {
      const DecompositionTerms terms = compute_terms(rec, h_inv, cp.n);
      ExperimentRow row;
      row.method = job.method;
      row.dim = job.dim;
      row.regime = job.regime;
      row.n = cp.n;
      row.replication = job.replication;
      row.coverage = coverage_of_error(cp.average_error, oracle, cp.n, spec.coverage_level);
      row.nmse = nmse_of_error(cp.average_error, oracle, cp.n);
      row.sqrt_n_rn = terms.scaled_remainder();
      row.identity_gap = terms.relative_gap;
      out.rows.push_back(std::move(row));
    }
    out.stab.method = job.method;
    out.stab.dim = job.dim;
    out.stab.regime = job.regime;
    out.stab.replication = job.replication;
    out.stab.mt_increment_slope = increment_slope(rec.probes, stab_lo, static_cast<double>(n_max));
    out.stab.terminal_drift_norm = op_norm(rec.checkpoints.back().drift);
    out.stab.clipped_steps = rec.clipped_steps;
    out.stab.clipped_after_100 = rec.clipped_after_100;
    if (spec.keep_records) out.record = std::move(rec);
  });

  for (std::size_t i = 0; i < outputs.size(); ++i) {
    auto& o = outputs[i];
    const JobInfo& job = res.jobs[i];
    if (o.aborted) {
      ++res.aborted;
      res.abort_log.push_back(job.method + " d=" + std::to_string(job.dim) + " " + job.regime +
                              " rep=" + std::to_string(job.replication) + ": " + o.abort_reason);
    } else {
      res.rows.insert(res.rows.end(), o.rows.begin(), o.rows.end());
      res.stabilization.push_back(o.stab);
    }
    if (spec.keep_records) {
      res.records.push_back(o.record ? std::move(*o.record) : TrajectoryRecord{});
      if (o.aborted) {
        res.records.back().aborted = true;
        res.records.back().abort_reason = o.abort_reason;
      }
    }
  }
  std::sort(res.rows.begin(), res.rows.end(), [](const ExperimentRow& a, const ExperimentRow& b) {
    return std::tie(a.method, a.dim, a.regime, a.n, a.replication) <
           std::tie(b.method, b.dim, b.regime, b.n, b.replication);
  });
  res.aggregates = aggregate_rows(res.rows);

  const double abort_fraction = static_cast<double>(res.aborted) / static_cast<double>(res.jobs.size());
  if (abort_fraction > spec.max_abort_fraction) {
    res.failed = true;
    res.failure = std::to_string(res.aborted) + " of " + std::to_string(res.jobs.size()) +
                  " replications aborted (limit " + format_double(100.0 * spec.max_abort_fraction) + "%)";
  }

  // Per-group summaries, in method-list order.
  for (const auto& m : spec.methods)
    for (std::size_t di = 0; di < spec.dims.size(); ++di)
      for (Regime r : spec.regimes) {
        GroupSummary g;
        g.method = m.label();
        g.dim = spec.dims[di];
        g.regime = std::string(to_string(r));
        std::vector<std::pair<double, double>> series;
        for (const auto& a : res.aggregates) {
          if (a.method != g.method || a.dim != g.dim || a.regime != g.regime) continue;
          series.emplace_back(static_cast<double>(a.n), a.sqrt_n_rn.mean);
          g.terminal_n = a.n;
          g.coverage = a.coverage.mean;
          g.nmse = a.nmse.mean;
          g.sqrt_n_rn = a.sqrt_n_rn.mean;
          g.replications = a.count;
        }
        for (const auto& row : res.rows)
          if (row.method == g.method && row.dim == g.dim && row.regime == g.regime)
            g.max_identity_gap = std::max(g.max_identity_gap, row.identity_gap);
        for (std::size_t i = 0; i < res.jobs.size(); ++i)
          if (outputs[i].aborted && res.jobs[i].method == g.method && res.jobs[i].dim == g.dim &&
              res.jobs[i].regime == g.regime)
            ++g.aborted;
        try {
          g.slope_full = fit_loglog_slope(series, FitRange::Full);
          g.slope_second_half = fit_loglog_slope(series, FitRange::SecondHalf);
        } catch (const std::invalid_argument&) {
        }
        double slope_sum = 0.0, clipped = 0.0, steps_after = 0.0;
        std::size_t slope_count = 0;
        for (const auto& s : res.stabilization) {
          if (s.method != g.method || s.dim != g.dim || s.regime != g.regime) continue;
          if (s.mt_increment_slope) slope_sum += *s.mt_increment_slope, ++slope_count;
          clipped += static_cast<double>(s.clipped_after_100);
          steps_after += static_cast<double>(n_max > 100 ? n_max - 100 : 0);
        }
        if (slope_count) g.mt_increment_slope = slope_sum / static_cast<double>(slope_count);
        g.clipped_fraction_after_100 = steps_after > 0.0 ? clipped / steps_after : 0.0;
        res.summary.push_back(std::move(g));
      }

  res.elapsed_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

}  // namespace psgd::harness
