#include <map>

#include "vfl/core/error.hpp"
#include "vfl/data/sources.hpp"

namespace vfl::data {
namespace {

constexpr std::size_t kPixels = 3 * 32 * 32;

std::vector<std::uint8_t> load_checked(const std::filesystem::path& dir, const std::string& name,
                                       const std::map<std::string, std::string>& manifest,
                                       bool verify) {
  const auto path = dir / name;
  if (!std::filesystem::exists(path))
    throw DataError("missing CIFAR file " + path.string() + " (run `vfl-lab datasets fetch`)");
  auto bytes = read_file(path);
  if (verify) {
    auto it = manifest.find(name);
    if (it == manifest.end()) throw DataError("no checksum recorded for " + path.string());
    if (sha256_hex(bytes) != it->second) throw DataError("checksum mismatch for " + path.string());
  }
  return bytes;
}

Split concat_splits(std::vector<Split> parts) {
  std::vector<const Tensor*> tensors;
  Split out;
  for (const Split& p : parts) {
    tensors.push_back(&p.features);
    out.labels.insert(out.labels.end(), p.labels.begin(), p.labels.end());
  }
  out.features = concat_rows(tensors);
  return out;
}

Dataset load_cifar(const std::filesystem::path& dir, bool verify, const std::string& name,
                   std::size_t classes, const std::vector<std::string>& train_files,
                   const std::string& test_file, std::size_t label_bytes) {
  std::map<std::string, std::string> manifest;
  if (verify) {
    const auto manifest_path = dir / "SHA256SUMS";
    if (!std::filesystem::exists(manifest_path))
      throw DataError("missing checksum manifest " + manifest_path.string());
    for (auto& [digest, file] : read_manifest(manifest_path)) manifest[file] = digest;
  }
  Dataset ds;
  ds.name = name;
  ds.geometry = {Layout::kImage, 3, 32, 32};
  ds.num_classes = classes;
  ds.range = FeatureRange::unit(3);
  std::vector<Split> parts;
  for (const auto& f : train_files)
    parts.push_back(parse_cifar_records(load_checked(dir, f, manifest, verify), label_bytes));
  ds.train = concat_splits(std::move(parts));
  ds.test = parse_cifar_records(load_checked(dir, test_file, manifest, verify), label_bytes);
  standardize_channels(ds);
  return ds;
}

}  // namespace

Split parse_cifar_records(const std::vector<std::uint8_t>& bytes, std::size_t label_bytes) {
  const std::size_t record = label_bytes + kPixels;
  if (bytes.size() % record != 0) throw DataError("CIFAR file length is not a record multiple");
  const std::size_t n = bytes.size() / record;
  Split split;
  split.features = Tensor({n, 3, 32, 32});
  split.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint8_t* rec = bytes.data() + i * record;
    split.labels[i] = Label(rec[label_bytes - 1]);
    for (std::size_t p = 0; p < kPixels; ++p)
      split.features[i * kPixels + p] = float(rec[label_bytes + p]) / 255.0f;
  }
  return split;
}

Dataset load_cifar10(const std::filesystem::path& dir, bool verify_checksums) {
  return load_cifar(dir, verify_checksums, "cifar10", 10,
                    {"data_batch_1.bin", "data_batch_2.bin", "data_batch_3.bin",
                     "data_batch_4.bin", "data_batch_5.bin"},
                    "test_batch.bin", 1);
}

Dataset load_cifar100(const std::filesystem::path& dir, bool verify_checksums) {
  return load_cifar(dir, verify_checksums, "cifar100", 100, {"train.bin"}, "test.bin", 2);
}

}  // namespace vfl::data
