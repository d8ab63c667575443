#include "vfl/protocol/checkpoint.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>

#include "vfl/core/error.hpp"
#include "vfl/protocol/trainer.hpp"

namespace vfl::protocol {
namespace {

constexpr char kMagic[8] = {'V', 'F', 'L', 'C', 'K', 'P', 'T', '\0'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf.insert(buf.end(), b, b + n);
  }
  void u32(std::uint32_t v) { bytes(&v, 4); }
  void u64(std::uint64_t v) { bytes(&v, 8); }
  void str(const std::string& s) {
    u64(s.size());
    bytes(s.data(), s.size());
  }
  std::vector<std::uint8_t> buf;
};

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& b, std::size_t limit, std::string where)
      : buf(b), end(limit), path(std::move(where)) {}
  void bytes(void* p, std::size_t n) {
    if (pos + n > end) throw DataError("truncated checkpoint " + path);
    std::memcpy(p, buf.data() + pos, n);
    pos += n;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    bytes(&v, 4);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    bytes(&v, 8);
    return v;
  }
  std::string str() {
    const std::uint64_t n = u64();
    if (n > end - pos) throw DataError("truncated checkpoint " + path);
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  const std::vector<std::uint8_t>& buf;
  std::size_t end;
  std::size_t pos = 0;
  std::string path;
};

std::vector<Tensor*> state_tensors(nn::Layer& model, nn::Optimizer* optimizer,
                                   std::vector<std::string>& names) {
  std::vector<Tensor*> out;
  std::size_t i = 0;
  for (nn::Parameter* p : model.parameters()) {
    names.push_back("param." + std::to_string(i++) + "." + p->name);
    out.push_back(&p->value);
  }
  i = 0;
  for (Tensor* b : model.buffers()) {
    names.push_back("buffer." + std::to_string(i++));
    out.push_back(b);
  }
  if (optimizer) {
    i = 0;
    for (Tensor* s : optimizer->state()) {
      names.push_back("optim." + std::to_string(i++));
      out.push_back(s);
    }
  }
  return out;
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.u32(kCheckpointVersion);
  w.str(checkpoint.key.run_id);
  w.u64(checkpoint.key.epoch);
  w.u64(checkpoint.key.participant_id);
  w.u64(checkpoint.tensors.size());
  for (const auto& [name, t] : checkpoint.tensors) {
    w.str(name);
    w.u64(t.rank());
    for (std::size_t d : t.shape()) w.u64(d);
    w.bytes(t.data(), t.size() * sizeof(float));
  }
  w.u32(std::uint32_t(crc32(0L, w.buf.data(), uInt(w.buf.size()))));

  std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    out.write(reinterpret_cast<const char*>(w.buf.data()), std::streamsize(w.buf.size()));
    if (!out) throw DataError("cannot write checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < sizeof kMagic + 8) throw DataError("truncated checkpoint " + path.string());
  std::uint32_t stored;
  std::memcpy(&stored, buf.data() + buf.size() - 4, 4);
  if (stored != std::uint32_t(crc32(0L, buf.data(), uInt(buf.size() - 4))))
    throw DataError("checkpoint CRC mismatch in " + path.string());

  Reader r(buf, buf.size() - 4, path.string());
  char magic[8];
  r.bytes(magic, 8);
  if (std::memcmp(magic, kMagic, 8) != 0) throw DataError("not a checkpoint: " + path.string());
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint c;
  c.key.run_id = r.str();
  c.key.epoch = r.u64();
  c.key.participant_id = r.u64();
  const std::uint64_t count = r.u64();
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name = r.str();
    Shape shape(r.u64());
    for (auto& d : shape) d = r.u64();
    Tensor t(shape);
    r.bytes(t.data(), t.size() * sizeof(float));
    c.tensors.emplace_back(std::move(name), std::move(t));
  }
  return c;
}

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, const CheckpointKey& key) {
  return dir / key.run_id / ("epoch_" + std::to_string(key.epoch)) /
         ("participant_" + std::to_string(key.participant_id) + ".ckpt");
}

Checkpoint capture(CheckpointKey key, nn::Layer& model, nn::Optimizer* optimizer) {
  Checkpoint c{std::move(key), {}};
  std::vector<std::string> names;
  const auto tensors = state_tensors(model, optimizer, names);
  for (std::size_t i = 0; i < tensors.size(); ++i) c.tensors.emplace_back(names[i], *tensors[i]);
  return c;
}

void restore(const Checkpoint& checkpoint, nn::Layer& model, nn::Optimizer* optimizer) {
  std::vector<std::string> names;
  const auto tensors = state_tensors(model, optimizer, names);
  if (tensors.size() != checkpoint.tensors.size())
    throw ConfigError("checkpoint holds " + std::to_string(checkpoint.tensors.size()) +
                      " tensors, model expects " + std::to_string(tensors.size()));
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const auto& [name, value] = checkpoint.tensors[i];
    if (name != names[i] || value.shape() != tensors[i]->shape())
      throw ConfigError("checkpoint tensor " + name + " does not match " + names[i]);
    *tensors[i] = value;
  }
}

void save_system(const std::filesystem::path& dir, const std::string& run_id, std::size_t epoch,
                 VflSystem& system) {
  for (Participant& p : system.participants()) {
    CheckpointKey key{run_id, epoch, p.id()};
    write_checkpoint(checkpoint_path(dir, key), capture(key, p.bottom(), &p.optimizer()));
  }
  CheckpointKey key{run_id, epoch, system.participants().size()};
  write_checkpoint(checkpoint_path(dir, key),
                   capture(key, system.server().top(), &system.server().optimizer()));
}

bool has_system_checkpoint(const std::filesystem::path& dir, const std::string& run_id,
                           std::size_t epoch, VflSystem& system) {
  for (std::size_t i = 0; i <= system.participants().size(); ++i)
    if (!std::filesystem::exists(checkpoint_path(dir, {run_id, epoch, i}))) return false;
  return true;
}

void load_system(const std::filesystem::path& dir, const std::string& run_id, std::size_t epoch,
                 VflSystem& system) {
  for (Participant& p : system.participants()) {
    const CheckpointKey key{run_id, epoch, p.id()};
    const Checkpoint c = read_checkpoint(checkpoint_path(dir, key));
    if (!(c.key == key)) throw DataError("checkpoint key mismatch for participant " + std::to_string(p.id()));
    restore(c, p.bottom(), &p.optimizer());
  }
  const CheckpointKey key{run_id, epoch, system.participants().size()};
  const Checkpoint c = read_checkpoint(checkpoint_path(dir, key));
  if (!(c.key == key)) throw DataError("checkpoint key mismatch for the server");
  restore(c, system.server().top(), &system.server().optimizer());
}

}  // namespace vfl::protocol
