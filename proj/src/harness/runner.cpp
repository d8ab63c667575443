#include "vfl/harness/runner.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <iostream>
#include <optional>

#include "vfl/attack/generator.hpp"
#include "vfl/attack/pgan.hpp"
#include "vfl/attack/poison.hpp"
#include "vfl/baselines/lra.hpp"
#include "vfl/baselines/villain.hpp"
#include "vfl/core/error.hpp"
#include "vfl/data/augment.hpp"
#include "vfl/data/ingest.hpp"
#include "vfl/defense/dae.hpp"
#include "vfl/nn/models.hpp"
#include "vfl/protocol/checkpoint.hpp"
#include "vfl/surrogate/surrogate.hpp"

namespace vfl::harness {
namespace fs = std::filesystem;
using protocol::EpochRecord;

namespace {

std::string num(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

void note(const RunContext& ctx, const std::string& run_id, const std::string& msg) {
  if (ctx.verbose) std::cerr << "[" << run_id << "] " << msg << std::endl;
}

std::string dataset_key(const ExperimentSpec& s) {
  std::string key = s.dataset + "/" + std::to_string(s.max_train) + "/" + std::to_string(s.max_test);
  if (s.dataset == "synthetic")
    key += "/" + std::to_string(s.synthetic.n_train) + "/" + std::to_string(s.synthetic.n_test) + "/" +
           std::to_string(s.synthetic.dims) + "/" + std::to_string(s.synthetic.classes) + "/" +
           num(s.synthetic.separation) + "/" + std::to_string(s.synthetic.seed);
  return key;
}

std::shared_ptr<const data::Dataset> load_dataset(const ExperimentSpec& spec, RunContext& ctx) {
  const std::string key = dataset_key(spec);
  if (auto it = ctx.datasets.find(key); it != ctx.datasets.end()) return it->second;
  data::IngestOptions options;
  options.allow_download = spec.allow_download;
  options.synthetic = spec.synthetic;
  options.max_train = spec.max_train;
  options.max_test = spec.max_test;
  auto ds = std::make_shared<const data::Dataset>(
      data::ingest_dataset(spec.dataset, resolve_cache_dir(spec), options));
  ctx.datasets[key] = ds;
  return ds;
}

std::shared_ptr<const protocol::VflData> load_split(const ExperimentSpec& spec, const data::Dataset& ds,
                                                   const std::vector<protocol::FeaturePartition>& parts,
                                                   RunContext& ctx) {
  std::string key = dataset_key(spec);
  for (const auto& p : parts) key += "|" + std::to_string(p.begin) + ":" + std::to_string(p.end);
  if (auto it = ctx.splits.find(key); it != ctx.splits.end()) return it->second;
  auto split = std::make_shared<const protocol::VflData>(protocol::split_dataset(ds, parts));
  ctx.splits[key] = split;
  return split;
}

protocol::VflSystem build_system(const ExperimentSpec& spec, const data::Dataset& ds,
                                 const std::vector<protocol::FeaturePartition>& parts,
                                 const protocol::VflData& data, std::uint64_t seed) {
  std::vector<protocol::Participant> participants;
  std::vector<std::size_t> dims;
  const nn::SgdOptions bottom_sgd{float(spec.bottom_lr), float(spec.momentum), 0.0f};
  for (std::size_t i = 0; i < parts.size(); ++i) {
    Rng rng(derive_seed(seed, "bottom", i));
    const auto role = i == spec.adversary ? protocol::Role::kMalicious : protocol::Role::kHonest;
    participants.emplace_back(parts[i], build_bottom(spec, parts[i].local_geometry(), rng), role, bottom_sgd);
    participants.back().set_training_features(data.train[i]);
    dims.push_back(participants.back().embedding_dim());
  }
  std::size_t total = 0;
  for (auto d : dims) total += d;
  Rng rng(derive_seed(seed, "top"));
  protocol::Server server(build_top(spec, total, ds.num_classes, rng), dims, data.train_labels,
                          nn::SgdOptions{float(spec.top_lr), float(spec.momentum), 0.0f});
  return protocol::VflSystem(std::move(participants), std::move(server));
}

void save_history(const fs::path& path, const std::vector<EpochRecord>& history) {
  fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    out << "epoch,train_loss,rows_dropped,f1,accuracy\n";
    for (const auto& r : history)
      out << r.epoch << ',' << num(r.train_loss) << ',' << r.rows_dropped << ',' << num(r.test.f1) << ','
          << num(r.test.accuracy) << '\n';
    if (!out) throw DataError("cannot write " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::vector<EpochRecord> load_history(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  std::vector<EpochRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto c = parse_csv_line(line);
    if (c.size() != 5) throw DataError("malformed history line in " + path.string());
    EpochRecord r;
    r.epoch = std::size_t(parse_int(c[0], "epoch"));
    r.train_loss = parse_double(c[1], "train_loss");
    r.rows_dropped = std::size_t(parse_int(c[2], "rows_dropped"));
    r.test.f1 = parse_double(c[3], "f1");
    r.test.accuracy = parse_double(c[4], "accuracy");
    out.push_back(r);
  }
  return out;
}

bool has_checkpoints(const fs::path& dir, const std::string& id, std::size_t epoch, std::size_t count) {
  for (std::size_t p = 0; p < count; ++p)
    if (!fs::exists(protocol::checkpoint_path(dir, {id, epoch, p}))) return false;
  return true;
}

void save_layers(const fs::path& dir, const std::string& id, std::size_t epoch,
                 const std::vector<nn::Layer*>& layers) {
  for (std::size_t p = 0; p < layers.size(); ++p) {
    const protocol::CheckpointKey key{id, epoch, p};
    protocol::write_checkpoint(protocol::checkpoint_path(dir, key), protocol::capture(key, *layers[p], nullptr));
  }
}

void load_layers(const fs::path& dir, const std::string& id, std::size_t epoch,
                 const std::vector<nn::Layer*>& layers) {
  for (std::size_t p = 0; p < layers.size(); ++p)
    protocol::restore(protocol::read_checkpoint(protocol::checkpoint_path(dir, {id, epoch, p})), *layers[p],
                      nullptr);
}

// Everything the adversary prepares at the snapshot.
struct Stage {
  std::optional<double> surrogate_train_acc, surrogate_test_acc;
  std::optional<protocol::AttackHooks> hooks;
  std::vector<std::uint8_t> poisoned;  // per training sample
  std::size_t poisoned_rows = 0;
  double mean_perturbation = 0.0;
};

// Counters for the defense's screening in one epoch.
struct ScreenCounts {
  std::size_t filtered = 0, true_positive = 0, poisoned = 0;
};

ResultRow base_row(const ExperimentSpec& spec, const std::string& id, std::uint64_t seed) {
  ResultRow r;
  r.run_id = id;
  r.spec_hash = spec_hash(spec);
  r.name = spec.name;
  r.seed = seed;
  r.dataset = spec.dataset;
  r.method = spec.method();
  r.attack = to_string(spec.attack);
  r.defense = to_string(spec.defense);
  r.poison_fraction = spec.attack == AttackKind::kNone ? 0.0 : spec.poison_fraction;
  r.known_labels = spec.known_labels;
  r.adversary_height = spec.adversary_height;
  r.lambda_gan = spec.pgan.lambda_gan;
  r.lambda_r = spec.pgan.lambda_r;
  r.dae_k = spec.dae.k;
  return r;
}

class Pipeline {
 public:
  Pipeline(const ExperimentSpec& spec, std::uint64_t seed, RunContext& ctx, RunOutcome& outcome)
      : spec_(spec), seed_(seed), ctx_(ctx), out_(outcome), id_(outcome.run_id) {}

  void run() {
    ds_ = load_dataset(spec_, ctx_);
    parts_ = protocol::partition_features(ds_->geometry, spec_.participants, split_for(spec_, ds_->geometry));
    data_ = load_split(spec_, *ds_, parts_, ctx_);
    writer_.emplace(run_file(spec_, id_, true));

    protocol::VflSystem system = build_system(spec_, *ds_, parts_, *data_, seed_);
    const std::size_t warm_end = std::min(spec_.epochs, spec_.snapshot_epoch);
    warmup(system, warm_end);

    Stage stage;
    if (warm_end == spec_.snapshot_epoch && (spec_.attack != AttackKind::kNone || spec_.stop_after == "surrogate"))
      stage = prepare_attack(system);

    if (spec_.stop_after == "surrogate" || warm_end == spec_.epochs) {
      finish(stage, last_);
      return;
    }

    std::optional<defense::DaeDefense> dae;
    std::ofstream anomalies;
    std::map<std::size_t, ScreenCounts> counts;
    if (spec_.defense == DefenseKind::kDae) {
      dae.emplace(spec_.dae, derive_seed(seed_, "dae"));
      if (spec_.anomaly_log) {
        const fs::path path = fs::path(spec_.output_dir) / "anomalies" / (id_ + ".csv");
        fs::create_directories(path.parent_path());
        anomalies.open(path, std::ios::trunc);
        anomalies << "run_id,epoch,sample_index,class,rmse,threshold,filtered\n";
      }
      const auto* poisoned = &stage.poisoned;
      dae->set_log([&, poisoned](const defense::AnomalyRecord& a) {
        auto& c = counts[a.epoch];
        const bool bad = !poisoned->empty() && (*poisoned)[a.sample_index];
        c.poisoned += bad;
        c.filtered += a.filtered;
        c.true_positive += bad && a.filtered;
        if (anomalies.is_open())
          anomalies << id_ << ',' << a.epoch << ',' << a.sample_index << ',' << a.label << ',' << num(a.rmse)
                    << ',' << num(a.threshold) << ',' << (a.filtered ? 1 : 0) << '\n';
      });
    }

    protocol::TrainingConfig config;
    config.epochs = spec_.epochs;
    config.batch_size = spec_.batch_size;
    config.seed = seed_;
    config.attack = stage.hooks;
    config.defense = dae ? &*dae : nullptr;
    config.freeze_adversary_bottom = spec_.freeze_adversary;
    std::optional<ScreenCounts> last_counts;
    protocol::train_vfl(system, *data_, config, warm_end + 1,
                        [&](const EpochRecord& r, protocol::VflSystem&) {
                          ResultRow row = epoch_row(r);
                          row.poisoned_rows = stage.poisoned_rows;
                          row.mean_perturbation = stage.mean_perturbation;
                          if (dae) {
                            const ScreenCounts c = counts[r.epoch];
                            set_defense_stats(row, c);
                            last_counts = c;
                          }
                          emit(row);
                          last_ = r;
                        });
    if (anomalies.is_open() && !anomalies) throw DataError("failed writing the anomaly log");
    ResultRow final = final_row(stage, last_);
    if (dae) set_defense_stats(final, last_counts.value_or(ScreenCounts{}));
    emit(final);
  }

 private:
  static void set_defense_stats(ResultRow& row, const ScreenCounts& c) {
    row.has_defense_stats = true;
    row.defense_precision = c.filtered ? double(c.true_positive) / double(c.filtered) : 0.0;
    row.defense_recall = c.poisoned ? double(c.true_positive) / double(c.poisoned) : 0.0;
  }

  ResultRow epoch_row(const EpochRecord& r) const {
    ResultRow row = base_row(spec_, id_, seed_);
    row.kind = "epoch";
    row.epoch = r.epoch;
    row.train_loss = r.train_loss;
    row.f1 = r.test.f1;
    row.accuracy = r.test.accuracy;
    row.rows_dropped = r.rows_dropped;
    return row;
  }

  ResultRow final_row(const Stage& stage, const EpochRecord& last) const {
    ResultRow row = epoch_row(last);
    row.kind = "final";
    row.poisoned_rows = stage.poisoned_rows;
    row.mean_perturbation = stage.mean_perturbation;
    if (stage.surrogate_train_acc) {
      row.has_surrogate = true;
      row.surrogate_train_acc = *stage.surrogate_train_acc;
      row.surrogate_test_acc = *stage.surrogate_test_acc;
    }
    return row;
  }

  void finish(const Stage& stage, const EpochRecord& last) { emit(final_row(stage, last)); }

  void emit(const ResultRow& row) {
    writer_->append(row);
    out_.rows.push_back(row);
  }

  void warmup(protocol::VflSystem& system, std::size_t warm_end) {
    const fs::path dir = checkpoint_root(spec_);
    const std::string wid = "warmup-" + warmup_hash(spec_) + "-s" + std::to_string(seed_);
    const fs::path history = dir / wid / ("history_" + std::to_string(warm_end) + ".csv");
    const bool cached = ctx_.reuse_artifacts && fs::exists(history) &&
                        protocol::has_system_checkpoint(dir, wid, warm_end, system);
    std::vector<EpochRecord> records;
    if (cached) {
      note(ctx_, id_, "reusing warm-up " + wid);
      records = load_history(history);
    } else {
      protocol::TrainingConfig config;
      config.epochs = warm_end;
      config.batch_size = spec_.batch_size;
      config.seed = seed_;
      protocol::train_vfl(system, *data_, config, 1, [&](const EpochRecord& r, protocol::VflSystem&) {
        note(ctx_, id_, "warm-up epoch " + std::to_string(r.epoch) + " loss " + num(r.train_loss) +
                            " f1 " + num(r.test.f1));
        records.push_back(r);
      });
      protocol::save_system(dir, wid, warm_end, system);
      save_history(history, records);
    }
    // Always continue from the stored state so fresh and resumed runs agree.
    protocol::load_system(dir, wid, warm_end, system);
    for (const auto& r : records) {
      emit(epoch_row(r));
      last_ = r;
    }
  }

  Stage prepare_attack(protocol::VflSystem& system) {
    Stage stage;
    protocol::Participant& adversary = system.participant(spec_.adversary);
    const Tensor& local = data_->train[spec_.adversary];
    const data::Geometry geometry = parts_[spec_.adversary].local_geometry();
    const std::size_t n = local.rows();
    const fs::path dir = checkpoint_root(spec_);
    const std::string sid = attack_stage_hash(spec_) + "-s" + std::to_string(seed_);

    const bool needs_labels = spec_.attack == AttackKind::kPgan || spec_.attack == AttackKind::kLra ||
                              spec_.stop_after == "surrogate";
    surrogate::LabeledIndices known;
    if (needs_labels) known = surrogate::reveal_known_labels(system.server().train_labels(), spec_.known_labels, seed_);

    std::optional<surrogate::SurrogateModel> target;
    if (spec_.attack == AttackKind::kPgan || spec_.stop_after == "surrogate") {
      const Tensor probe = gather_rows(local, std::vector<std::size_t>{0});
      target.emplace(surrogate::init_surrogate(adversary.bottom(), probe, ds_->num_classes, seed_,
                                               adversary.embedding_dim()));
      const std::string id = "surrogate-" + sid;
      const std::vector<nn::Layer*> layers{&target->backbone(), &target->head()};
      if (ctx_.reuse_artifacts && has_checkpoints(dir, id, spec_.snapshot_epoch, layers.size())) {
        note(ctx_, id_, "reusing surrogate " + id);
        load_layers(dir, id, spec_.snapshot_epoch, layers);
      } else {
        const auto t0 = std::chrono::steady_clock::now();
        const data::Augmenter augmenter(geometry, ds_->range, data::default_augment_options(spec_.dataset));
        surrogate::train_surrogate(*target, local, known, augmenter, spec_.fixmatch, seed_);
        save_layers(dir, id, spec_.snapshot_epoch, layers);
        note(ctx_, id_, "surrogate trained in " +
                            num(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()) + " s");
      }
      stage.surrogate_train_acc = surrogate::surrogate_accuracy(*target, local, data_->train_labels);
      stage.surrogate_test_acc =
          surrogate::surrogate_accuracy(*target, data_->test[spec_.adversary], data_->test_labels);
      note(ctx_, id_, "surrogate accuracy train " + num(*stage.surrogate_train_acc) + " test " +
                          num(*stage.surrogate_test_acc));
    }
    if (spec_.stop_after == "surrogate" || spec_.attack == AttackKind::kNone) return stage;

    std::vector<std::size_t> victims = attack::select_poison_set(n, spec_.poison_fraction, seed_);
    stage.poisoned.assign(n, 0);
    protocol::AttackHooks hooks;
    hooks.start_epoch = spec_.snapshot_epoch + 1;

    if (spec_.attack == AttackKind::kPgan) {
      float span = 0.0f;
      for (std::size_t c = 0; c < ds_->range.lo.size(); ++c) span = std::max(span, ds_->range.hi[c] - ds_->range.lo[c]);
      Rng grng(derive_seed(seed_, "generator"));
      attack::PerturbationGenerator generator(geometry, spec_.pgan.noise_dim, float(spec_.pgan_scale) * span, grng,
                                              spec_.pgan.width);
      nn::Sequential discriminator = attack::make_discriminator(geometry, grng, spec_.pgan.width);
      const std::string id = "pgan-" + sid;
      const std::vector<nn::Layer*> layers{&generator.encoder(), &generator.decoder(), &discriminator};
      if (ctx_.reuse_artifacts && has_checkpoints(dir, id, spec_.snapshot_epoch, layers.size())) {
        note(ctx_, id_, "reusing generator " + id);
        load_layers(dir, id, spec_.snapshot_epoch, layers);
      } else {
        const auto t0 = std::chrono::steady_clock::now();
        attack::train_pgan(generator, discriminator, *target, local, ds_->range, spec_.pgan, seed_);
        save_layers(dir, id, spec_.snapshot_epoch, layers);
        note(ctx_, id_, "generator trained in " +
                            num(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()) + " s");
      }
      auto table = std::make_shared<const attack::PoisonTable>(
          attack::build_pgan_table(generator, local, victims, ds_->range, seed_));
      stage.mean_perturbation = attack::mean_perturbation(*table, local);
      hooks.features = attack::replace_rows(table);
    } else if (spec_.attack == AttackKind::kLra) {
      baselines::LraResult lra = baselines::lra_poison_set(local, known.indices, known.labels, victims, seed_);
      auto table = std::make_shared<const attack::PoisonTable>(std::move(lra.table));
      victims = table->indices();
      stage.mean_perturbation = attack::mean_perturbation(*table, local);
      hooks.features = attack::replace_rows(table);
    } else {
      baselines::VillainTrigger trigger{float(spec_.villain_beta),
                                        baselines::leading_mask(adversary.embedding_dim(), spec_.villain_mask_fraction)};
      double total = 0.0;
      for (float e : trigger.epsilon()) total += std::fabs(e);
      stage.mean_perturbation = total / double(adversary.embedding_dim());
      auto member = std::make_shared<std::vector<std::uint8_t>>(n, 0);
      for (auto v : victims) (*member)[v] = 1;
      hooks.embeddings = baselines::villain_transform(trigger, member);
    }
    for (auto v : victims) stage.poisoned[v] = 1;
    stage.poisoned_rows = victims.size();
    stage.hooks = std::move(hooks);
    note(ctx_, id_, to_string(spec_.attack) + " poisons " + std::to_string(victims.size()) + " rows, mean |r| " +
                        num(stage.mean_perturbation));
    return stage;
  }

  const ExperimentSpec& spec_;
  std::uint64_t seed_;
  RunContext& ctx_;
  RunOutcome& out_;
  std::string id_;
  std::shared_ptr<const data::Dataset> ds_;
  std::vector<protocol::FeaturePartition> parts_;
  std::shared_ptr<const protocol::VflData> data_;
  std::optional<ResultWriter> writer_;
  EpochRecord last_;
};

}  // namespace

fs::path run_file(const ExperimentSpec& spec, const std::string& id, bool partial) {
  return fs::path(spec.output_dir) / "runs" / (id + (partial ? ".partial.csv" : ".csv"));
}

fs::path checkpoint_root(const ExperimentSpec& spec) {
  return spec.checkpoint_dir.empty() ? fs::path(spec.output_dir) / "checkpoints" : fs::path(spec.checkpoint_dir);
}

fs::path resolve_cache_dir(const ExperimentSpec& spec) {
  return spec.cache_dir.empty() ? data::default_cache_dir() : fs::path(spec.cache_dir);
}

nn::Sequential build_bottom(const ExperimentSpec& spec, const data::Geometry& local, Rng& rng) {
  if (spec.profile.bottom == "resnet18") {
    if (!local.is_image()) throw ConfigError("resnet18 bottom models need image data");
    return nn::make_resnet18(local.channels, spec.profile.resnet_width, spec.profile.embedding_dim, rng);
  }
  return nn::make_fcnn(local.features(), spec.profile.hidden, spec.profile.embedding_dim, 3, rng);
}

nn::Sequential build_top(const ExperimentSpec& spec, std::size_t input_dim, std::size_t classes, Rng& rng) {
  return nn::make_fcnn(input_dim, spec.profile.hidden, classes, spec.profile.top == "fcnn4" ? 4 : 3, rng);
}

protocol::SplitSpec split_for(const ExperimentSpec& spec, const data::Geometry& geometry) {
  if (spec.adversary_height) return protocol::adversary_band(geometry, spec.adversary_height);
  return protocol::equal_split(geometry, spec.participants);
}

RunOutcome run_experiment(const ExperimentSpec& spec, std::uint64_t seed, RunContext& ctx) {
  RunOutcome outcome;
  outcome.run_id = run_id(spec, seed);
  const fs::path done = run_file(spec, outcome.run_id, false);
  const fs::path partial = run_file(spec, outcome.run_id, true);
  if (ctx.resume && fs::exists(done)) {
    outcome.rows = read_results(done);
    outcome.completed = outcome.resumed = true;
    note(ctx, outcome.run_id, "already complete");
    return outcome;
  }
  fs::remove(partial);
  note(ctx, outcome.run_id, "starting " + spec.method() + " on " + spec.dataset);
  try {
    Pipeline(spec, seed, ctx, outcome).run();
    fs::rename(partial, done);
    outcome.completed = true;
  } catch (const std::exception& e) {
    outcome.error = e.what();
    ResultRow row = base_row(spec, outcome.run_id, seed);
    row.kind = "final";
    row.status = std::string("failed: ") + e.what();
    try {
      ResultWriter(partial).append(row);
    } catch (const std::exception&) {
    }
    outcome.rows.push_back(row);
    note(ctx, outcome.run_id, row.status);
  }
  return outcome;
}

}  // namespace vfl::harness
