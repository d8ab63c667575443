#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "vfl/harness/results.hpp"

namespace vfl::harness {

struct Stat {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation; 0 for a single run
  std::size_t n = 0;
};

Stat summarize(const std::vector<double>& values);

// Sweep axes understood by the aggregator and the CLI.
const std::vector<std::string>& sweep_axes();
bool is_numeric_axis(const std::string& axis);

// Text form of the row's coordinate along `axis` ("1:10" for lambda).
std::string axis_value(const ResultRow& row, const std::string& axis);

struct Aggregate {
  std::string series;  // run name
  std::string value;   // coordinate along the axis
  double x = 0.0;      // plot position
  Stat f1, accuracy, mean_perturbation;
  Stat surrogate_train_acc, surrogate_test_acc;
  Stat defense_precision, defense_recall;
};

// Groups completed "final" rows by (series, axis value). Series keep their
// first-seen order; numeric axes are sorted by value.
std::vector<Aggregate> aggregate(const std::vector<ResultRow>& rows, const std::string& axis);

void write_aggregate_csv(const std::filesystem::path& path, const std::string& axis,
                         const std::vector<Aggregate>& table);

// Line chart of mean F1 (with std whiskers) against the axis, one line per series.
void write_line_chart(const std::filesystem::path& path, const std::string& axis,
                      const std::vector<Aggregate>& table);
// Horizontal bars of mean F1 per method.
void write_bar_chart(const std::filesystem::path& path, const std::vector<Aggregate>& table);

struct ReportOptions {
  std::string axis;  // empty: no sweep table
  bool plots = true;
};

// results.csv (every row), summary.csv (one line per method),
// surrogate.csv when surrogate rows exist, and sweep_<axis>.csv plus SVG
// charts. Throws ValidationError for an empty row set.
std::vector<std::filesystem::path> emit_report(const std::vector<ResultRow>& rows,
                                               const std::filesystem::path& dir,
                                               const ReportOptions& options);

}  // namespace vfl::harness
