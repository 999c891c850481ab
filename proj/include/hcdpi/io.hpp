#pragma once

// File formats: wide count CSVs, interval and simulation reports (CSV or
// JSON, numbers to 6 significant digits), and flat key = value configs.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "hcdpi/error.hpp"
#include "hcdpi/model.hpp"
#include "hcdpi/simulation.hpp"

namespace hcdpi {

enum class OutputFormat { Csv, Json };

inline OutputFormat parse_format(std::string_view s) {
  if (s == "csv") return OutputFormat::Csv;
  if (s == "json") return OutputFormat::Json;
  fail(ErrorCode::InvalidArgument, "unknown output format '" + std::string(s) + "' (valid: csv, json)");
}

/// Format inferred from a file extension; CSV unless it ends in ".json".
inline OutputFormat format_for_path(const std::string& path) {
  return path.size() >= 5 && path.compare(path.size() - 5, 5, ".json") == 0 ? OutputFormat::Json : OutputFormat::Csv;
}

inline std::string format_number(double v) {
  if (std::isnan(v)) return "NA";
  if (std::isinf(v)) return v > 0 ? "Inf" : "-Inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  std::string s(buf);
  if (s == "-0") s = "0";
  return s;
}

/// Value rounded to 6 significant digits, or null when not finite.
inline nlohmann::json json_number(double v) {
  if (!std::isfinite(v)) return nullptr;
  return std::stod(format_number(v));
}

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::string unquote(std::string s) {
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

struct CountTable {
  std::vector<std::string> studies;
  HistoricalDataset data;
};

/// Reads `study,<cat_1>,...,<cat_C>` with one integer row per study.
/// min_rows is 2 for historical data and 1 for a concurrent control.
inline CountTable parse_counts_csv(std::istream& in, std::size_t min_rows = 2, const std::string& source = "input") {
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    if (trim(line).empty()) continue;
    header = split(line, ',');
    break;
  }
  if (header.empty()) fail(ErrorCode::ParseError, source + ": missing header row");
  if (header.size() < 2) fail(ErrorCode::ParseError, source + ": header needs a study column and categories");
  std::vector<std::string> labels;
  for (std::size_t c = 1; c < header.size(); ++c) labels.push_back(unquote(header[c]));

  CountTable table;
  std::vector<std::vector<count_t>> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split(line, ',');
    if (cells.size() != header.size()) {
      fail(ErrorCode::ParseError, source + ": line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                                      " fields, expected " + std::to_string(header.size()));
    }
    table.studies.push_back(unquote(cells[0]));
    std::vector<count_t> row;
    for (std::size_t c = 1; c < cells.size(); ++c) {
      const std::string& cell = cells[c];
      std::size_t used = 0;
      long long v = 0;
      try {
        v = std::stoll(cell, &used);
      } catch (...) {
        used = 0;
      }
      if (cell.empty() || used != cell.size()) {
        fail(ErrorCode::ParseError, source + ": line " + std::to_string(line_no) + ", column '" + labels[c - 1] +
                                        "': '" + cell + "' is not an integer");
      }
      if (v < 0) {
        fail(ErrorCode::ValidationError, source + ": line " + std::to_string(line_no) + ", column '" + labels[c - 1] +
                                             "': negative count " + cell);
      }
      row.push_back(v);
    }
    rows.push_back(std::move(row));
  }
  if (labels.size() < 2) fail(ErrorCode::ValidationError, source + ": need at least 2 categories (C<2)");
  if (rows.size() < min_rows) {
    fail(ErrorCode::ValidationError, source + ": need at least " + std::to_string(min_rows) + " studies (K=" +
                                         std::to_string(rows.size()) + ")");
  }
  for (std::size_t k = 0; k < rows.size(); ++k) {
    count_t n = 0;
    for (auto v : rows[k]) n += v;
    if (n < 1) fail(ErrorCode::ValidationError, source + ": study '" + table.studies[k] + "' has zero units");
  }
  table.data = HistoricalDataset::from_rows(rows, labels);
  return table;
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open '" + path + "' for reading");
  return in;
}

inline CountTable parse_counts_csv(const std::string& path, std::size_t min_rows = 2) {
  auto in = open_input(path);
  return parse_counts_csv(in, min_rows, path);
}

inline void write_counts_csv(std::ostream& out, const HistoricalDataset& data, const std::string& study_prefix = "study") {
  out << "study";
  for (const auto& l : data.labels()) out << ',' << l;
  out << '\n';
  for (std::size_t k = 0; k < data.clusters(); ++k) {
    out << study_prefix << (k + 1);
    for (std::size_t c = 0; c < data.categories(); ++c) out << ',' << data.count(k, c);
    out << '\n';
  }
}

/// Writes text produced by fn to path ("-" is stdout).
template <typename Fn>
void write_output(const std::string& path, Fn&& fn, std::ostream& standard_out = std::cout) {
  if (path == "-") {
    fn(standard_out);
    standard_out.flush();
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::IoError, "cannot open '" + path + "' for writing");
  fn(out);
  out.flush();
  if (!out) fail(ErrorCode::IoError, "write to '" + path + "' failed");
}

// ---- intervals -------------------------------------------------------

inline constexpr std::string_view kIntervalColumns = "method,category,L,U,y_hat,sep,multiplier_L,multiplier_U";

struct IntervalRow {
  std::string method;
  std::string category;
  double lower = 0, upper = 0, y_hat = 0, sep = 0, multiplier_lower = 0, multiplier_upper = 0;
};

inline std::string category_label(const PredictionIntervalSet& set, std::size_t c) {
  return c < set.labels.size() ? set.labels[c] : "cat" + std::to_string(c + 1);
}

struct Verdict {
  std::string method;
  bool contains = false;
};

inline void write_intervals_csv(std::ostream& out, const std::vector<PredictionIntervalSet>& sets) {
  out << kIntervalColumns << '\n';
  for (const auto& s : sets) {
    for (std::size_t c = 0; c < s.categories(); ++c) {
      out << s.method << ',' << category_label(s, c) << ',' << format_number(s.lower[c]) << ','
          << format_number(s.upper[c]) << ',' << format_number(s.y_hat[c]) << ',' << format_number(s.sep[c]) << ','
          << format_number(s.multiplier_lower[c]) << ',' << format_number(s.multiplier_upper[c]) << '\n';
    }
  }
}

inline nlohmann::json intervals_json(const std::vector<PredictionIntervalSet>& sets,
                                     const std::vector<Verdict>& verdicts = {}) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& s : sets) {
    for (std::size_t c = 0; c < s.categories(); ++c) {
      rows.push_back({{"method", s.method},
                      {"category", category_label(s, c)},
                      {"L", json_number(s.lower[c])},
                      {"U", json_number(s.upper[c])},
                      {"y_hat", json_number(s.y_hat[c])},
                      {"sep", json_number(s.sep[c])},
                      {"multiplier_L", json_number(s.multiplier_lower[c])},
                      {"multiplier_U", json_number(s.multiplier_upper[c])}});
    }
  }
  nlohmann::json doc = {{"intervals", rows}};
  if (!sets.empty()) {
    doc["alpha"] = json_number(sets.front().alpha);
    doc["m"] = sets.front().m;
  }
  if (!verdicts.empty()) {
    nlohmann::json v = nlohmann::json::array();
    for (const auto& x : verdicts) v.push_back({{"method", x.method}, {"contains", x.contains}});
    doc["verdicts"] = v;
  }
  return doc;
}

inline void emit_intervals(const std::vector<PredictionIntervalSet>& sets, OutputFormat format, const std::string& path,
                           const std::vector<Verdict>& verdicts = {}, std::ostream& standard_out = std::cout) {
  write_output(path, [&](std::ostream& out) {
    if (format == OutputFormat::Csv)
      write_intervals_csv(out, sets);
    else
      out << intervals_json(sets, verdicts).dump(2) << '\n';
  }, standard_out);
}

inline double parse_number(const std::string& s) {
  if (s == "NA" || s.empty()) return std::numeric_limits<double>::quiet_NaN();
  if (s == "Inf") return std::numeric_limits<double>::infinity();
  if (s == "-Inf") return -std::numeric_limits<double>::infinity();
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(s, &used);
  } catch (...) {
    used = 0;
  }
  if (used != s.size()) fail(ErrorCode::ParseError, "'" + s + "' is not a number");
  return v;
}

inline std::vector<IntervalRow> parse_intervals_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || trim(line) != kIntervalColumns) fail(ErrorCode::ParseError, "unexpected interval header");
  std::vector<IntervalRow> rows;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 8) fail(ErrorCode::ParseError, "interval row needs 8 fields");
    rows.push_back({f[0], f[1], parse_number(f[2]), parse_number(f[3]), parse_number(f[4]), parse_number(f[5]),
                    parse_number(f[6]), parse_number(f[7])});
  }
  return rows;
}

// ---- simulation reports ---------------------------------------------

inline constexpr std::string_view kSimulationColumns =
    "scenario_id,C,K,n,m,phi,method,coverage,mc_error,category,p_below_L,p_above_U,min_expected_count";

inline void write_simulation_csv(std::ostream& out, const std::vector<SimulationReport>& reports) {
  out << kSimulationColumns << '\n';
  for (const auto& r : reports) {
    const auto& s = r.scenario;
    for (const auto& t : r.methods) {
      for (std::size_t c = 0; c < s.pi_true.size(); ++c) {
        out << s.id << ',' << s.pi_true.size() << ',' << s.K << ',' << s.n << ',' << s.m << ',' << format_number(s.phi)
            << ',' << t.method << ',' << format_number(t.coverage()) << ',' << format_number(t.mc_error()) << ','
            << (c + 1) << ',' << format_number(t.p_below(c)) << ',' << format_number(t.p_above(c)) << ','
            << format_number(r.min_expected_count) << '\n';
      }
    }
  }
}

inline nlohmann::json simulation_json(const std::vector<SimulationReport>& reports) {
  nlohmann::json rows = nlohmann::json::array();
  nlohmann::json scenarios = nlohmann::json::array();
  for (const auto& r : reports) {
    const auto& s = r.scenario;
    scenarios.push_back({{"scenario_id", s.id},
                         {"iterations", r.iterations},
                         {"failed_iterations", r.failed_iterations},
                         {"exceeded_failure_cap", r.exceeded_failure_cap},
                         {"sparse", s.sparse}});
    for (const auto& t : r.methods) {
      for (std::size_t c = 0; c < s.pi_true.size(); ++c) {
        rows.push_back({{"scenario_id", s.id},
                        {"C", s.pi_true.size()},
                        {"K", s.K},
                        {"n", s.n},
                        {"m", s.m},
                        {"phi", json_number(s.phi)},
                        {"method", t.method},
                        {"coverage", json_number(t.coverage())},
                        {"mc_error", json_number(t.mc_error())},
                        {"category", c + 1},
                        {"p_below_L", json_number(t.p_below(c))},
                        {"p_above_U", json_number(t.p_above(c))},
                        {"min_expected_count", json_number(r.min_expected_count)}});
      }
    }
  }
  return {{"rows", rows}, {"scenarios", scenarios}};
}

inline void emit_report(const std::vector<SimulationReport>& reports, OutputFormat format, const std::string& path,
                        std::ostream& standard_out = std::cout) {
  write_output(path, [&](std::ostream& out) {
    if (format == OutputFormat::Csv)
      write_simulation_csv(out, reports);
    else
      out << simulation_json(reports).dump(2) << '\n';
  }, standard_out);
}

inline void write_tail_balance_csv(std::ostream& out, const std::vector<TailBalanceRow>& rows,
                                   const std::string& scenario_id) {
  out << "scenario_id,method,category,p_ge_L,p_le_U,reference\n";
  for (const auto& r : rows) {
    out << scenario_id << ',' << r.method << ',' << (r.category + 1) << ',' << format_number(r.p_at_least_lower) << ','
        << format_number(r.p_at_most_upper) << ',' << format_number(r.reference) << '\n';
  }
}

// ---- key = value configuration -------------------------------------

/// Parses `key = value` lines; '#' starts a comment. Later keys override
/// earlier ones.
inline std::map<std::string, std::string> parse_key_values(std::istream& in, const std::string& source = "config") {
  std::map<std::string, std::string> kv;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      fail(ErrorCode::ParseError, source + ": line " + std::to_string(line_no) + " is not 'key = value'");
    const auto key = trim(std::string_view(line).substr(0, eq));
    if (key.empty()) fail(ErrorCode::ParseError, source + ": line " + std::to_string(line_no) + " has an empty key");
    kv[key] = trim(std::string_view(line).substr(eq + 1));
  }
  return kv;
}

}  // namespace hcdpi
