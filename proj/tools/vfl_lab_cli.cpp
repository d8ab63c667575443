#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <map>

#include "vfl/core/error.hpp"
#include "vfl/data/ingest.hpp"
#include "vfl/harness/report.hpp"
#include "vfl/harness/sweep.hpp"

namespace fs = std::filesystem;
using namespace vfl;
using namespace vfl::harness;

namespace {

// Shared by `run` and `sweep`: --config, repeated --set, and one flag per key.
struct SpecFlags {
  std::string config_file;
  std::vector<std::string> assignments;
  std::map<std::string, std::string> flags;
  bool fresh = false;
  bool rebuild = false;
  bool quiet = false;

  void attach(CLI::App& app) {
    app.add_option("-c,--config", config_file, "key = value experiment file")->check(CLI::ExistingFile);
    app.add_option("--set", assignments, "override, key=value (repeatable)");
    app.add_flag("--fresh", fresh, "rerun runs that already completed");
    app.add_flag("--rebuild", rebuild, "retrain cached warm-up, surrogate and generator checkpoints");
    app.add_flag("-q,--quiet", quiet, "no progress output");
    for (const auto& key : spec_keys())
      app.add_option("--" + key, flags[key], "experiment key " + key)->group("Experiment keys");
  }

  ExperimentSpec spec() const {
    Config c;
    if (!config_file.empty()) c = Config::load(config_file);
    for (const auto& a : assignments) c.assign(a);
    for (const auto& [k, v] : flags)
      if (!v.empty()) c.set(k, v);
    return spec_from_config(c);
  }

  RunContext context() const {
    RunContext ctx;
    ctx.resume = !fresh;
    ctx.reuse_artifacts = !rebuild;
    ctx.verbose = !quiet;
    return ctx;
  }
};

void print_final(const RunOutcome& run) {
  for (const auto& r : run.rows)
    if (r.kind == "final")
      std::cout << r.run_id << "  " << r.method << "  seed " << r.seed << "  f1 " << r.f1 << "  accuracy "
                << r.accuracy << "  " << r.status << "\n";
}

int cmd_run(const SpecFlags& flags) {
  const ExperimentSpec spec = flags.spec();
  RunContext ctx = flags.context();
  bool ok = true;
  std::vector<ResultRow> rows;
  for (auto seed : spec.run_seeds()) {
    RunOutcome run = run_experiment(spec, seed, ctx);
    ok = ok && run.completed;
    print_final(run);
    rows.insert(rows.end(), run.rows.begin(), run.rows.end());
  }
  emit_report(rows, fs::path(spec.output_dir) / "report", {});
  return ok ? 0 : 1;
}

int cmd_sweep(const SpecFlags& flags) {
  const ExperimentSpec spec = flags.spec();
  RunContext ctx = flags.context();
  SweepOutcome out = run_sweep(spec, ctx);
  std::vector<ResultRow> rows;
  for (const auto& run : out.runs) {
    print_final(run);
    rows.insert(rows.end(), run.rows.begin(), run.rows.end());
  }
  std::ofstream(fs::path(spec.output_dir) / "sweep_axis.txt") << spec.sweep_axis << "\n";
  ReportOptions options;
  options.axis = spec.sweep_axis;
  emit_report(rows, fs::path(spec.output_dir) / "report", options);
  for (const auto& a : out.table)
    std::cout << spec.sweep_axis << "=" << a.value << "  " << (a.series.empty() ? "" : a.series + "  ") << "f1 "
              << a.f1.mean << " +- " << a.f1.std << "  (n=" << a.f1.n << ")\n";
  return out.all_completed ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Vertical federated learning attack and defense laboratory"};
  app.require_subcommand(1);

  SpecFlags run_flags, sweep_flags;
  auto* run = app.add_subcommand("run", "run one experiment for each configured seed");
  run_flags.attach(*run);
  auto* sweep = app.add_subcommand("sweep", "run every grid point of sweep.axis and aggregate");
  sweep_flags.attach(*sweep);

  auto* report = app.add_subcommand("report", "summary CSVs and charts from completed runs");
  std::string input, output, axis;
  bool no_plots = false;
  report->add_option("-i,--input", input, "output_dir of earlier runs")->required();
  report->add_option("-o,--output", output, "destination (default <input>/report)");
  report->add_option("--axis", axis, "sweep axis to aggregate (default: recorded by sweep)");
  report->add_flag("--no-plots", no_plots, "CSV only");

  auto* datasets = app.add_subcommand("datasets", "dataset cache management");
  datasets->require_subcommand(1);
  auto* fetch = datasets->add_subcommand("fetch", "download and verify datasets into the cache");
  std::vector<std::string> names;
  std::string cache_dir, base_url, from_dir;
  fetch->add_option("names", names, "mnist, cifar10, cifar100")->required();
  fetch->add_option("--cache-dir", cache_dir, "cache root (default $VFL_LAB_CACHE_DIR or ~/.cache/vfl_lab)");
  fetch->add_option("--base-url", base_url, "mirror root URL");
  fetch->add_option("--from-dir", from_dir, "import already downloaded files from a directory")
      ->check(CLI::ExistingDirectory);

  auto* keys = app.add_subcommand("keys", "list experiment keys with their defaults");

  CLI11_PARSE(app, argc, argv);
  try {
    if (run->parsed()) return cmd_run(run_flags);
    if (sweep->parsed()) return cmd_sweep(sweep_flags);
    if (report->parsed()) {
      ReportOptions options;
      options.plots = !no_plots;
      options.axis = axis;
      if (axis.empty())
        if (std::ifstream in(fs::path(input) / "sweep_axis.txt"); in) in >> options.axis;
      const auto rows = collect_results(input);
      for (const auto& p : emit_report(rows, output.empty() ? fs::path(input) / "report" : fs::path(output), options))
        std::cout << p.string() << "\n";
      return 0;
    }
    if (fetch->parsed()) {
      const fs::path root = cache_dir.empty() ? data::default_cache_dir() : fs::path(cache_dir);
      for (const auto& name : names) {
        data::FetchOptions options;
        options.base_url = base_url;
        if (!from_dir.empty()) options.from_dir = fs::path(from_dir);
        data::fetch_dataset(name, root, options);
        std::cout << name << " installed in " << (root / name).string() << "\n";
      }
      return 0;
    }
    if (keys->parsed()) {
      const Config defaults = spec_to_config(ExperimentSpec{});
      for (const auto& [k, v] : defaults.values()) std::cout << k << " = " << v << "\n";
      return 0;
    }
  } catch (const vfl::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
