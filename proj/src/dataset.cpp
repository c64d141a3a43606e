#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "psgd/problems.hpp"

namespace psgd {
namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

// Splits one CSV record; double quotes group commas, "" is a literal quote.
std::vector<std::string> split_record(std::string_view line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last && std::isfinite(out);
}

double parse_label(const std::string& raw, std::size_t line_no) {
  const std::string s = lower(raw);
  if (s == "1" || s == "1.0" || s == "m" || s == "malignant") return 1.0;
  if (s == "0" || s == "0.0" || s == "b" || s == "benign") return 0.0;
  throw std::invalid_argument("ingest_csv: line " + std::to_string(line_no) + ": non-binary label '" + raw + "'");
}

}  // namespace

DatasetTable parse_csv(std::string_view text, const IngestSchema& schema) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;

  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    header = split_record(line);
    break;
  }
  if (header.empty()) throw std::invalid_argument("ingest_csv: empty file");

  auto column_index = [&](const std::string& name) -> std::size_t {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw std::invalid_argument("ingest_csv: missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t label_idx = column_index(schema.label_column);
  std::vector<std::size_t> feature_idx;
  if (schema.feature_columns.empty()) {
    for (std::size_t j = 0; j < header.size(); ++j)
      if (j != label_idx) feature_idx.push_back(j);
  } else {
    for (const auto& name : schema.feature_columns) feature_idx.push_back(column_index(name));
  }
  if (feature_idx.empty()) throw std::invalid_argument("ingest_csv: no feature columns");

  std::vector<Vector> raw;
  std::vector<double> labels;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto fields = split_record(line);
    if (fields.size() != header.size())
      throw std::invalid_argument("ingest_csv: line " + std::to_string(line_no) + ": expected " +
                                  std::to_string(header.size()) + " fields, got " +
                                  std::to_string(fields.size()));
    Vector row(feature_idx.size());
    for (std::size_t j = 0; j < feature_idx.size(); ++j) {
      if (!parse_double(fields[feature_idx[j]], row[j]))
        throw std::invalid_argument("ingest_csv: line " + std::to_string(line_no) + ": malformed value '" +
                                    fields[feature_idx[j]] + "' in column '" + header[feature_idx[j]] + "'");
    }
    labels.push_back(parse_label(fields[label_idx], line_no));
    raw.push_back(std::move(row));
  }
  if (raw.empty()) throw std::invalid_argument("ingest_csv: no data rows");

  const std::size_t n = raw.size();
  const std::size_t p = feature_idx.size();
  if (schema.standardize) {
    for (std::size_t j = 0; j < p; ++j) {
      double mean = 0.0;
      for (const auto& r : raw) mean += r[j];
      mean /= static_cast<double>(n);
      double var = 0.0;
      for (const auto& r : raw) var += (r[j] - mean) * (r[j] - mean);
      var /= static_cast<double>(n);
      if (!(var > 0.0))
        throw std::invalid_argument("ingest_csv: zero variance in column '" + header[feature_idx[j]] + "'");
      const double sd = std::sqrt(var);
      for (auto& r : raw) r[j] = (r[j] - mean) / sd;
    }
  }

  DatasetTable table;
  if (schema.add_intercept) table.feature_names.emplace_back("intercept");
  for (std::size_t j : feature_idx) table.feature_names.push_back(header[j]);
  table.labels = std::move(labels);
  table.features.reserve(n);
  for (auto& r : raw) {
    if (schema.add_intercept) r.insert(r.begin(), 1.0);
    table.features.push_back(std::move(r));
  }
  return table;
}

DatasetTable ingest_csv(const std::filesystem::path& path, const IngestSchema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("ingest_csv: cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_csv(ss.str(), schema);
}

}  // namespace psgd
