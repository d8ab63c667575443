#include <array>
#include <string_view>

#include "vfl/core/error.hpp"
#include "vfl/data/sources.hpp"

namespace vfl::data {
namespace {

struct KnownFile {
  std::string_view name;
  std::string_view sha256;
};

// Digests of the uncompressed reference files.
constexpr std::array<KnownFile, 4> kMnistFiles{{
    {"train-images-idx3-ubyte", "ba891046e6505d7aadcbbe25680a0738ad16aec93bde7f9b65e87a2fc25776db"},
    {"train-labels-idx1-ubyte", "65a50cbbf4e906d70832878ad85ccda5333a97f0f4c3dd2ef09a8a9eef7101c5"},
    {"t10k-images-idx3-ubyte", "0fa7898d509279e482958e8ce81c8e77db3f2f8254e26661ceb7762c4d494ce7"},
    {"t10k-labels-idx1-ubyte", "ff7bcfd416de33731a308c3f266cc351222c34898ecbeaf847f06e48f7ec33f2"},
}};

std::uint32_t read_be32(const std::vector<std::uint8_t>& bytes, std::size_t offset) {
  if (offset + 4 > bytes.size()) throw DataError("IDX header truncated");
  return (std::uint32_t(bytes[offset]) << 24) | (std::uint32_t(bytes[offset + 1]) << 16) |
         (std::uint32_t(bytes[offset + 2]) << 8) | std::uint32_t(bytes[offset + 3]);
}

std::vector<std::uint8_t> load_verified(const std::filesystem::path& dir, const KnownFile& file,
                                        bool verify) {
  const auto path = dir / file.name;
  if (!std::filesystem::exists(path))
    throw DataError("missing MNIST file " + path.string() +
                    " (run `vfl-lab datasets fetch mnist`)");
  auto bytes = read_file(path);
  if (verify && sha256_hex(bytes) != file.sha256)
    throw DataError("checksum mismatch for " + path.string());
  return bytes;
}

}  // namespace

Tensor parse_idx_images(const std::vector<std::uint8_t>& bytes) {
  if (read_be32(bytes, 0) != 2051) throw DataError("not an IDX3 image file");
  const std::size_t n = read_be32(bytes, 4), h = read_be32(bytes, 8), w = read_be32(bytes, 12);
  if (bytes.size() != 16 + n * h * w) throw DataError("IDX image file has wrong length");
  Tensor images({n, 1, h, w});
  for (std::size_t i = 0; i < n * h * w; ++i) images[i] = float(bytes[16 + i]) / 255.0f;
  return images;
}

std::vector<Label> parse_idx_labels(const std::vector<std::uint8_t>& bytes) {
  if (read_be32(bytes, 0) != 2049) throw DataError("not an IDX1 label file");
  const std::size_t n = read_be32(bytes, 4);
  if (bytes.size() != 8 + n) throw DataError("IDX label file has wrong length");
  std::vector<Label> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = Label(bytes[8 + i]);
  return labels;
}

Dataset load_mnist(const std::filesystem::path& dir, bool verify_checksums) {
  Dataset ds;
  ds.name = "mnist";
  ds.geometry = {Layout::kImage, 1, 28, 28};
  ds.num_classes = 10;
  ds.range = FeatureRange::unit(1);
  ds.train.features = parse_idx_images(load_verified(dir, kMnistFiles[0], verify_checksums));
  ds.train.labels = parse_idx_labels(load_verified(dir, kMnistFiles[1], verify_checksums));
  ds.test.features = parse_idx_images(load_verified(dir, kMnistFiles[2], verify_checksums));
  ds.test.labels = parse_idx_labels(load_verified(dir, kMnistFiles[3], verify_checksums));
  if (ds.train.features.rows() != ds.train.labels.size() ||
      ds.test.features.rows() != ds.test.labels.size())
    throw DataError("MNIST image/label counts disagree");
  return ds;
}

}  // namespace vfl::data
