#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vfl/attack/pgan.hpp"
#include "vfl/data/sources.hpp"
#include "vfl/defense/dae.hpp"
#include "vfl/harness/config.hpp"
#include "vfl/surrogate/surrogate.hpp"

namespace vfl::harness {

enum class AttackKind { kNone, kPgan, kLra, kVillain };
enum class DefenseKind { kNone, kDae };

std::string to_string(AttackKind kind);
std::string to_string(DefenseKind kind);
AttackKind parse_attack(const std::string& text);
DefenseKind parse_defense(const std::string& text);

struct ArchitectureProfile {
  std::string bottom = "fcnn3";  // fcnn3 | resnet18
  std::string top = "fcnn3";     // fcnn3 | fcnn4
  std::size_t hidden = 256;
  std::size_t embedding_dim = 64;
  std::size_t resnet_width = 16;
};

// Architecture table defaults per dataset.
ArchitectureProfile default_profile(const std::string& dataset);

struct ExperimentSpec {
  std::string name;
  std::string dataset = "mnist";
  ArchitectureProfile profile;
  std::size_t participants = 2;
  std::size_t adversary = 0;           // index of the malicious participant
  std::size_t adversary_height = 0;    // 0 = equal bands
  std::size_t epochs = 50;
  std::size_t batch_size = 128;
  double bottom_lr = 0.01;
  double top_lr = 0.01;
  double momentum = 0.9;
  std::size_t max_train = 0;
  std::size_t max_test = 0;
  data::SyntheticOptions synthetic;
  std::size_t snapshot_epoch = 5;
  bool freeze_adversary = false;
  std::string stop_after = "none";  // none | surrogate

  AttackKind attack = AttackKind::kNone;
  double poison_fraction = 0.2;
  std::size_t known_labels = 160;
  surrogate::FixMatchOptions fixmatch;
  attack::PganOptions pgan;
  double pgan_scale = 1.0;  // tanh bound, as a fraction of the widest channel range
  float villain_beta = 0.4f;
  double villain_mask_fraction = 0.5;

  DefenseKind defense = DefenseKind::kNone;
  defense::DaeOptions dae;

  std::uint64_t seed = 1;
  std::size_t repetitions = 3;
  std::vector<std::uint64_t> seeds;  // overrides seed/repetitions when set

  std::string sweep_axis;
  std::vector<std::string> sweep_grid;
  std::vector<std::string> sweep_series;

  std::string output_dir = "results";
  std::string cache_dir;       // empty = environment default
  std::string checkpoint_dir;  // empty = <output_dir>/checkpoints
  bool allow_download = false;
  bool anomaly_log = true;

  std::vector<std::uint64_t> run_seeds() const;
  std::string method() const;  // e.g. "pgan+dae", "none"
};

// Recognised configuration keys.
const std::vector<std::string>& spec_keys();

// Dataset-dependent defaults are applied first, then `config`. Unknown keys
// and invalid combinations raise ConfigError.
ExperimentSpec spec_from_config(const Config& config);

// Canonical key-value form (round-trips through spec_from_config).
Config spec_to_config(const ExperimentSpec& spec);

// Hash over every key that influences results (not seeds, sweep settings or
// paths). 16 hex characters.
std::string spec_hash(const ExperimentSpec& spec);

// Hash of the settings that determine the clean warm-up to the snapshot.
std::string warmup_hash(const ExperimentSpec& spec);
// Hash of the settings that determine the surrogate and generator checkpoints.
std::string attack_stage_hash(const ExperimentSpec& spec);

std::string run_id(const ExperimentSpec& spec, std::uint64_t seed);

}  // namespace vfl::harness
