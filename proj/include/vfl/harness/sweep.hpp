#pragma once

#include <string>
#include <vector>

#include "vfl/harness/report.hpp"
#include "vfl/harness/runner.hpp"

namespace vfl::harness {

// Sets one coordinate: any spec key, "lambda" ("<lambda_gan>:<lambda_r>")
// or "method" ("attack[+dae]").
ExperimentSpec apply_axis(const ExperimentSpec& base, const std::string& axis, const std::string& value);

struct SweepPoint {
  std::string series;
  std::string value;
  ExperimentSpec spec;
};

// Grid points of base.sweep_axis for every entry of base.sweep_series (a
// method such as "pgan+dae", or ';'-separated key=value overrides). Each
// point's name is the base name joined with the series label.
std::vector<SweepPoint> expand_sweep(const ExperimentSpec& base);

struct SweepOutcome {
  std::vector<RunOutcome> runs;
  std::vector<Aggregate> table;
  bool all_completed = true;
};

// Every point for every seed, then the aggregated table, written to
// <output_dir>/sweep_<axis>.csv.
SweepOutcome run_sweep(const ExperimentSpec& base, RunContext& context);

}  // namespace vfl::harness
