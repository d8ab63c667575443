#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "vfl/data/dataset.hpp"
#include "vfl/harness/experiment.hpp"
#include "vfl/harness/results.hpp"
#include "vfl/protocol/trainer.hpp"

namespace vfl::harness {

// In-process caches shared by the runs of one invocation.
struct RunContext {
  std::map<std::string, std::shared_ptr<const data::Dataset>> datasets;
  std::map<std::string, std::shared_ptr<const protocol::VflData>> splits;
  bool resume = true;           // reuse completed run files
  bool reuse_artifacts = true;  // reuse warm-up, surrogate and generator checkpoints
  bool verbose = true;          // progress lines on stderr
};

struct RunOutcome {
  std::string run_id;
  std::vector<ResultRow> rows;  // per-epoch rows, then one "final" row
  bool completed = false;
  bool resumed = false;
  std::string error;
};

// <output_dir>/runs/<run_id>.csv once complete; rows are appended to
// <run_id>.partial.csv while the run is in progress.
std::filesystem::path run_file(const ExperimentSpec& spec, const std::string& run_id, bool partial);
std::filesystem::path checkpoint_root(const ExperimentSpec& spec);
std::filesystem::path resolve_cache_dir(const ExperimentSpec& spec);

// Full pipeline for one seed. Failures are caught and reported in the
// outcome; rows produced before the failure are kept.
RunOutcome run_experiment(const ExperimentSpec& spec, std::uint64_t seed, RunContext& context);

// Model builders for a spec's architecture profile.
nn::Sequential build_bottom(const ExperimentSpec& spec, const data::Geometry& local, Rng& rng);
nn::Sequential build_top(const ExperimentSpec& spec, std::size_t input_dim, std::size_t classes, Rng& rng);

// Partition implied by participants / adversary_feature_height.
protocol::SplitSpec split_for(const ExperimentSpec& spec, const data::Geometry& geometry);

}  // namespace vfl::harness
