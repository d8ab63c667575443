#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "vfl/nn/layer.hpp"
#include "vfl/nn/optim.hpp"

namespace vfl::protocol {

class VflSystem;

struct CheckpointKey {
  std::string run_id;
  std::size_t epoch = 0;
  std::size_t participant_id = 0;

  bool operator==(const CheckpointKey&) const = default;
};

// Named tensors for one party at one epoch. Binary layout (little-endian):
// magic "VFLCKPT\0", u32 version, key, u64 tensor count, then per tensor a
// name, u64 rank, u64 dims and float32 values; a trailing CRC-32 covers
// everything before it.
struct Checkpoint {
  CheckpointKey key;
  std::vector<std::pair<std::string, Tensor>> tensors;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
// Throws DataError on a bad magic, version, CRC or truncation.
Checkpoint read_checkpoint(const std::filesystem::path& path);

// <dir>/<run_id>/epoch_<e>/participant_<p>.ckpt
std::filesystem::path checkpoint_path(const std::filesystem::path& dir, const CheckpointKey& key);

// Parameters, buffers and (optionally) optimizer slots of one model.
Checkpoint capture(CheckpointKey key, nn::Layer& model, nn::Optimizer* optimizer);
void restore(const Checkpoint& checkpoint, nn::Layer& model, nn::Optimizer* optimizer);

// Whole-system snapshots. The server is stored under participant id N.
void save_system(const std::filesystem::path& dir, const std::string& run_id, std::size_t epoch,
                 VflSystem& system);
bool has_system_checkpoint(const std::filesystem::path& dir, const std::string& run_id,
                           std::size_t epoch, VflSystem& system);
void load_system(const std::filesystem::path& dir, const std::string& run_id, std::size_t epoch,
                 VflSystem& system);

}  // namespace vfl::protocol
