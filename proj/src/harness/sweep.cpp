#include "vfl/harness/sweep.hpp"

#include "vfl/core/error.hpp"

namespace vfl::harness {
namespace {

void apply_method(Config& c, const std::string& method) {
  const auto plus = method.find('+');
  c.set("attack", trim(method.substr(0, plus)));
  c.set("defense", plus == std::string::npos ? "none" : trim(method.substr(plus + 1)));
}

}  // namespace

ExperimentSpec apply_axis(const ExperimentSpec& base, const std::string& axis, const std::string& value) {
  Config c = spec_to_config(base);
  if (axis == "lambda") {
    const auto parts = split(value, ':');
    if (parts.size() != 2) throw ConfigError("lambda grid values look like <lambda_gan>:<lambda_r>, got " + value);
    c.set("pgan.lambda_gan", trim(parts[0]));
    c.set("pgan.lambda_r", trim(parts[1]));
  } else if (axis == "method") {
    apply_method(c, value);
  } else {
    if (!c.has(axis)) throw ConfigError("unknown sweep axis '" + axis + "'");
    c.set(axis, value);
  }
  return spec_from_config(c);
}

std::vector<SweepPoint> expand_sweep(const ExperimentSpec& base) {
  if (base.sweep_axis.empty()) throw ConfigError("sweep.axis is not set");
  if (base.sweep_grid.empty()) throw ConfigError("sweep.grid is empty");
  std::vector<std::string> series = base.sweep_series;
  if (series.empty()) series.push_back("");
  std::vector<SweepPoint> points;
  for (const auto& label : series) {
    Config c = spec_to_config(base);
    if (label.find('=') != std::string::npos) {
      for (const auto& a : split(label, ';'))
        if (!trim(a).empty()) c.assign(trim(a));
    } else if (!label.empty()) {
      apply_method(c, label);
    }
    if (!label.empty()) c.set("name", base.name.empty() ? label : base.name + ":" + label);
    const ExperimentSpec variant = spec_from_config(c);
    for (const auto& value : base.sweep_grid)
      points.push_back({label, value, apply_axis(variant, base.sweep_axis, value)});
  }
  return points;
}

SweepOutcome run_sweep(const ExperimentSpec& base, RunContext& context) {
  SweepOutcome out;
  std::vector<ResultRow> finals;
  for (const auto& point : expand_sweep(base))
    for (auto seed : point.spec.run_seeds()) {
      RunOutcome run = run_experiment(point.spec, seed, context);
      out.all_completed = out.all_completed && run.completed;
      for (const auto& r : run.rows)
        if (r.kind == "final") finals.push_back(r);
      out.runs.push_back(std::move(run));
    }
  out.table = aggregate(finals, base.sweep_axis);
  const auto dir = std::filesystem::path(base.output_dir);
  std::filesystem::create_directories(dir);
  write_aggregate_csv(dir / ("sweep_" + base.sweep_axis + ".csv"), base.sweep_axis, out.table);
  return out;
}

}  // namespace vfl::harness
