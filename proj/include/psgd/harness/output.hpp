#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "psgd/harness/experiment.hpp"

namespace psgd::harness {

inline constexpr const char* kRowsHeader = "method,dim,regime,n,replication,coverage,nmse,sqrt_n_rn,identity_gap";

std::string rows_csv(const std::vector<ExperimentRow>& rows);
std::string aggregate_csv(const std::vector<AggregateRow>& rows);
std::string stabilization_csv(const std::vector<StabilizationRow>& rows);
std::string summary_csv(const std::vector<GroupSummary>& rows);
std::string saturator_csv(const std::vector<SaturatorRow>& rows);
std::string saturator_slopes_csv(const std::vector<SaturatorSlope>& rows);
std::string metadata_json(const ExperimentResult& result);

/// Human-readable digest of the summary table (one line per group).
std::string summary_text(const ExperimentResult& result);

/// Writes every output of `result` into result.spec.output_dir; returns the paths written.
std::vector<std::filesystem::path> write_outputs(const ExperimentResult& result);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Column index by name, or -1.
  int column(const std::string& name) const;
};

/// Plain comma-separated reader (no quoting), as written by this library.
CsvTable read_csv(const std::filesystem::path& path);
CsvTable parse_csv_table(const std::string& text);

/// Shortest round-trip formatting used by every writer.
std::string format_number(double v);

}  // namespace psgd::harness
