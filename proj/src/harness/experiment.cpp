#include "vfl/harness/experiment.hpp"

#include <charconv>
#include <functional>
#include <set>
#include <sstream>

#include "vfl/core/error.hpp"
#include "vfl/data/sources.hpp"

namespace vfl::harness {
namespace {

// Which cached artifact a key invalidates.
enum class Scope {
  kWarmup,  // clean training up to the snapshot
  kStage,   // surrogate and generator
  kRun,     // the rest of the pipeline
  kMeta,    // never affects results
};

struct Field {
  std::string key;
  Scope scope;
  std::function<std::string(const ExperimentSpec&)> get;
  std::function<void(ExperimentSpec&, const std::string&)> set;
};

template <class T>
std::string num(T v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + items[i];
  return out;
}

std::size_t to_size(const std::string& v, const std::string& key) {
  const long long x = parse_int(v, key);
  if (x < 0) throw ConfigError(key + " must be non-negative");
  return std::size_t(x);
}

#define SIZE_FIELD(k, scope, member) \
  Field{k, scope, [](const ExperimentSpec& s) { return num(s.member); }, \
        [](ExperimentSpec& s, const std::string& v) { s.member = to_size(v, k); }}
#define DOUBLE_FIELD(k, scope, member) \
  Field{k, scope, [](const ExperimentSpec& s) { return num(s.member); }, \
        [](ExperimentSpec& s, const std::string& v) { s.member = decltype(s.member)(parse_double(v, k)); }}
#define BOOL_FIELD(k, scope, member) \
  Field{k, scope, [](const ExperimentSpec& s) { return std::string(s.member ? "true" : "false"); }, \
        [](ExperimentSpec& s, const std::string& v) { s.member = parse_bool(v, k); }}
#define STRING_FIELD(k, scope, member) \
  Field{k, scope, [](const ExperimentSpec& s) { return s.member; }, \
        [](ExperimentSpec& s, const std::string& v) { s.member = v; }}
#define LIST_FIELD(k, scope, member) \
  Field{k, scope, [](const ExperimentSpec& s) { return join(s.member); }, \
        [](ExperimentSpec& s, const std::string& v) { \
          s.member.clear(); \
          for (const auto& item : split(v, ',')) if (!trim(item).empty()) s.member.push_back(trim(item)); \
        }}

const std::vector<Field>& fields() {
  using S = Scope;
  static const std::vector<Field> table = {
      STRING_FIELD("name", S::kMeta, name),
      Field{"dataset", S::kWarmup, [](const ExperimentSpec& s) { return s.dataset; },
            [](ExperimentSpec& s, const std::string& v) {
              if (v != "mnist" && v != "cifar10" && v != "cifar100" && v != "synthetic")
                throw ConfigError("unknown dataset '" + v + "'");
              s.dataset = v;
            }},
      Field{"bottom", S::kWarmup, [](const ExperimentSpec& s) { return s.profile.bottom; },
            [](ExperimentSpec& s, const std::string& v) {
              if (v != "fcnn3" && v != "resnet18") throw ConfigError("unknown bottom model '" + v + "'");
              s.profile.bottom = v;
            }},
      Field{"top", S::kWarmup, [](const ExperimentSpec& s) { return s.profile.top; },
            [](ExperimentSpec& s, const std::string& v) {
              if (v != "fcnn3" && v != "fcnn4") throw ConfigError("unknown top model '" + v + "'");
              s.profile.top = v;
            }},
      SIZE_FIELD("hidden", S::kWarmup, profile.hidden),
      SIZE_FIELD("embedding_dim", S::kWarmup, profile.embedding_dim),
      SIZE_FIELD("resnet_width", S::kWarmup, profile.resnet_width),
      SIZE_FIELD("participants", S::kWarmup, participants),
      SIZE_FIELD("adversary", S::kWarmup, adversary),
      SIZE_FIELD("adversary_feature_height", S::kWarmup, adversary_height),
      SIZE_FIELD("epochs", S::kRun, epochs),
      SIZE_FIELD("batch_size", S::kWarmup, batch_size),
      DOUBLE_FIELD("bottom_lr", S::kWarmup, bottom_lr),
      DOUBLE_FIELD("top_lr", S::kWarmup, top_lr),
      DOUBLE_FIELD("momentum", S::kWarmup, momentum),
      SIZE_FIELD("max_train", S::kWarmup, max_train),
      SIZE_FIELD("max_test", S::kWarmup, max_test),
      SIZE_FIELD("synthetic.n_train", S::kWarmup, synthetic.n_train),
      SIZE_FIELD("synthetic.n_test", S::kWarmup, synthetic.n_test),
      SIZE_FIELD("synthetic.dims", S::kWarmup, synthetic.dims),
      SIZE_FIELD("synthetic.classes", S::kWarmup, synthetic.classes),
      DOUBLE_FIELD("synthetic.separation", S::kWarmup, synthetic.separation),
      SIZE_FIELD("synthetic.seed", S::kWarmup, synthetic.seed),
      SIZE_FIELD("snapshot_epoch", S::kWarmup, snapshot_epoch),
      BOOL_FIELD("freeze_adversary", S::kRun, freeze_adversary),
      Field{"stop_after", S::kRun, [](const ExperimentSpec& s) { return s.stop_after; },
            [](ExperimentSpec& s, const std::string& v) {
              if (v != "none" && v != "surrogate") throw ConfigError("stop_after must be none or surrogate");
              s.stop_after = v;
            }},

      Field{"attack", S::kStage, [](const ExperimentSpec& s) { return to_string(s.attack); },
            [](ExperimentSpec& s, const std::string& v) { s.attack = parse_attack(v); }},
      DOUBLE_FIELD("poison_fraction", S::kRun, poison_fraction),
      SIZE_FIELD("known_labels", S::kStage, known_labels),
      DOUBLE_FIELD("fixmatch.tau", S::kStage, fixmatch.tau),
      SIZE_FIELD("fixmatch.mu", S::kStage, fixmatch.mu),
      SIZE_FIELD("fixmatch.batch", S::kStage, fixmatch.batch),
      DOUBLE_FIELD("fixmatch.lambda_u", S::kStage, fixmatch.lambda_u),
      SIZE_FIELD("fixmatch.steps", S::kStage, fixmatch.steps),
      DOUBLE_FIELD("fixmatch.lr", S::kStage, fixmatch.sgd.lr),
      DOUBLE_FIELD("fixmatch.momentum", S::kStage, fixmatch.sgd.momentum),
      DOUBLE_FIELD("fixmatch.weight_decay", S::kStage, fixmatch.sgd.weight_decay),
      DOUBLE_FIELD("pgan.lambda_gan", S::kStage, pgan.lambda_gan),
      DOUBLE_FIELD("pgan.lambda_r", S::kStage, pgan.lambda_r),
      Field{"pgan.target", S::kStage,
            [](const ExperimentSpec& s) {
              return s.pgan.target.policy == attack::TargetPolicy::kUntargeted
                         ? std::string("untargeted")
                         : num(s.pgan.target.target_class);
            },
            [](ExperimentSpec& s, const std::string& v) {
              if (v == "untargeted") {
                s.pgan.target = {};
              } else {
                s.pgan.target.policy = attack::TargetPolicy::kFixedClass;
                s.pgan.target.target_class = attack::Label(to_size(v, "pgan.target"));
              }
            }},
      SIZE_FIELD("pgan.noise_dim", S::kStage, pgan.noise_dim),
      SIZE_FIELD("pgan.steps", S::kStage, pgan.steps),
      SIZE_FIELD("pgan.batch", S::kStage, pgan.batch),
      SIZE_FIELD("pgan.d_steps", S::kStage, pgan.d_steps),
      SIZE_FIELD("pgan.width", S::kStage, pgan.width),
      DOUBLE_FIELD("pgan.lr", S::kStage, pgan.generator_adam.lr),
      DOUBLE_FIELD("pgan.d_lr", S::kStage, pgan.discriminator_adam.lr),
      DOUBLE_FIELD("pgan.scale", S::kStage, pgan_scale),
      DOUBLE_FIELD("villain.beta", S::kRun, villain_beta),
      DOUBLE_FIELD("villain.mask_fraction", S::kRun, villain_mask_fraction),

      Field{"defense", S::kRun, [](const ExperimentSpec& s) { return to_string(s.defense); },
            [](ExperimentSpec& s, const std::string& v) { s.defense = parse_defense(v); }},
      DOUBLE_FIELD("dae.k", S::kRun, dae.k),
      Field{"dae.rule", S::kRun,
            [](const ExperimentSpec& s) {
              return std::string(s.dae.rule == defense::ThresholdRule::kMedianMad ? "median_mad" : "percentile");
            },
            [](ExperimentSpec& s, const std::string& v) {
              if (v == "median_mad") s.dae.rule = defense::ThresholdRule::kMedianMad;
              else if (v == "percentile") s.dae.rule = defense::ThresholdRule::kPercentile;
              else throw ConfigError("dae.rule must be median_mad or percentile");
            }},
      DOUBLE_FIELD("dae.percentile", S::kRun, dae.percentile),
      DOUBLE_FIELD("dae.mad_floor", S::kRun, dae.mad_floor),
      BOOL_FIELD("dae.per_class", S::kRun, dae.per_class),
      BOOL_FIELD("dae.standardize", S::kRun, dae.standardize),
      SIZE_FIELD("dae.calibration_epoch", S::kRun, dae.calibration_epoch),
      SIZE_FIELD("dae.recalibrate_every", S::kRun, dae.recalibrate_every),
      SIZE_FIELD("dae.epochs", S::kRun, dae.epochs),
      SIZE_FIELD("dae.batch", S::kRun, dae.batch),
      DOUBLE_FIELD("dae.lr", S::kRun, dae.adam.lr),
      DOUBLE_FIELD("dae.noise", S::kRun, dae.noise_sigma),
      SIZE_FIELD("dae.hidden1", S::kRun, dae.hidden1),
      SIZE_FIELD("dae.hidden2", S::kRun, dae.hidden2),
      SIZE_FIELD("dae.bottleneck", S::kRun, dae.bottleneck),

      SIZE_FIELD("seed", S::kMeta, seed),
      SIZE_FIELD("repetitions", S::kMeta, repetitions),
      Field{"seeds", S::kMeta,
            [](const ExperimentSpec& s) {
              std::vector<std::string> items;
              for (auto v : s.seeds) items.push_back(num(v));
              return join(items);
            },
            [](ExperimentSpec& s, const std::string& v) {
              s.seeds.clear();
              for (const auto& item : split(v, ','))
                if (!trim(item).empty()) s.seeds.push_back(to_size(trim(item), "seeds"));
            }},
      STRING_FIELD("sweep.axis", S::kMeta, sweep_axis),
      LIST_FIELD("sweep.grid", S::kMeta, sweep_grid),
      LIST_FIELD("sweep.series", S::kMeta, sweep_series),
      STRING_FIELD("output_dir", S::kMeta, output_dir),
      STRING_FIELD("cache_dir", S::kMeta, cache_dir),
      STRING_FIELD("checkpoint_dir", S::kMeta, checkpoint_dir),
      BOOL_FIELD("allow_download", S::kMeta, allow_download),
      BOOL_FIELD("anomaly_log", S::kMeta, anomaly_log),
  };
  return table;
}

std::string hash_of(const ExperimentSpec& spec, const std::set<Scope>& scopes) {
  std::ostringstream canon;
  for (const auto& f : fields())
    if (scopes.count(f.scope)) canon << f.key << '=' << f.get(spec) << '\n';
  const std::string text = canon.str();
  return data::sha256_hex(std::vector<std::uint8_t>(text.begin(), text.end())).substr(0, 16);
}

void validate(const ExperimentSpec& s) {
  if (s.participants < 2) throw ConfigError("participants must be at least 2");
  if (s.adversary >= s.participants) throw ConfigError("adversary index out of range");
  if (s.adversary_height && (s.participants != 2 || s.adversary != 0))
    throw ConfigError("adversary_feature_height needs 2 participants with the adversary first");
  if (s.epochs == 0 || s.batch_size == 0) throw ConfigError("epochs and batch_size must be positive");
  if (s.poison_fraction < 0 || s.poison_fraction > 1) throw ConfigError("poison_fraction must be in [0, 1]");
  if (s.attack == AttackKind::kPgan && s.known_labels == 0)
    throw ConfigError("the P-GAN surrogate needs known_labels > 0");
  if (s.stop_after == "surrogate" && s.known_labels == 0)
    throw ConfigError("stop_after=surrogate needs known_labels > 0");
  if (s.defense == DefenseKind::kDae && s.dae.calibration_epoch <= s.snapshot_epoch)
    throw ConfigError("dae.calibration_epoch must come after snapshot_epoch");
  if (s.villain_mask_fraction < 0 || s.villain_mask_fraction > 1)
    throw ConfigError("villain.mask_fraction must be in [0, 1]");
}

}  // namespace

std::string to_string(AttackKind kind) {
  switch (kind) {
    case AttackKind::kPgan: return "pgan";
    case AttackKind::kLra: return "lra";
    case AttackKind::kVillain: return "villain";
    default: return "none";
  }
}

std::string to_string(DefenseKind kind) { return kind == DefenseKind::kDae ? "dae" : "none"; }

AttackKind parse_attack(const std::string& text) {
  if (text == "none") return AttackKind::kNone;
  if (text == "pgan") return AttackKind::kPgan;
  if (text == "lra") return AttackKind::kLra;
  if (text == "villain") return AttackKind::kVillain;
  throw ConfigError("unknown attack '" + text + "'");
}

DefenseKind parse_defense(const std::string& text) {
  if (text == "none") return DefenseKind::kNone;
  if (text == "dae") return DefenseKind::kDae;
  throw ConfigError("unknown defense '" + text + "'");
}

ArchitectureProfile default_profile(const std::string& dataset) {
  ArchitectureProfile p;
  if (dataset == "cifar10" || dataset == "cifar100") p.bottom = "resnet18";
  if (dataset == "cifar100") p.top = "fcnn4";
  return p;
}

std::vector<std::uint64_t> ExperimentSpec::run_seeds() const {
  if (!seeds.empty()) return seeds;
  std::vector<std::uint64_t> out;
  for (std::size_t r = 0; r < std::max<std::size_t>(1, repetitions); ++r) out.push_back(seed + r);
  return out;
}

std::string ExperimentSpec::method() const {
  std::string m = to_string(attack);
  if (defense == DefenseKind::kDae) m += "+dae";
  return m;
}

const std::vector<std::string>& spec_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& f : fields()) k.push_back(f.key);
    return k;
  }();
  return keys;
}

ExperimentSpec spec_from_config(const Config& config) {
  const std::set<std::string> known(spec_keys().begin(), spec_keys().end());
  if (auto unknown = config.unknown_keys(known); !unknown.empty())
    throw ConfigError("unknown configuration key '" + unknown.front() + "'");
  ExperimentSpec spec;
  spec.dataset = config.get("dataset", "mnist");
  spec.profile = default_profile(spec.dataset);
  if (spec.dataset == "cifar10" || spec.dataset == "cifar100") spec.epochs = 100;
  for (const auto& f : fields())
    if (auto v = config.find(f.key)) f.set(spec, *v);
  validate(spec);
  return spec;
}

Config spec_to_config(const ExperimentSpec& spec) {
  Config c;
  for (const auto& f : fields()) c.set(f.key, f.get(spec));
  return c;
}

std::string spec_hash(const ExperimentSpec& spec) {
  return hash_of(spec, {Scope::kWarmup, Scope::kStage, Scope::kRun});
}

std::string warmup_hash(const ExperimentSpec& spec) { return hash_of(spec, {Scope::kWarmup}); }

std::string attack_stage_hash(const ExperimentSpec& spec) {
  return hash_of(spec, {Scope::kWarmup, Scope::kStage});
}

std::string run_id(const ExperimentSpec& spec, std::uint64_t seed) {
  return spec_hash(spec) + "-s" + std::to_string(seed);
}

}  // namespace vfl::harness
