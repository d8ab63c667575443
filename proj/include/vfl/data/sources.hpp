#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vfl/data/dataset.hpp"

namespace vfl::data {

// ---- MNIST (IDX files, uncompressed, values scaled to [0, 1]) -------------

Dataset load_mnist(const std::filesystem::path& dir, bool verify_checksums = true);

// Parses a single IDX3 image file / IDX1 label file from memory.
Tensor parse_idx_images(const std::vector<std::uint8_t>& bytes);
std::vector<Label> parse_idx_labels(const std::vector<std::uint8_t>& bytes);

// ---- CIFAR (binary version, per-channel standardized) ---------------------

Dataset load_cifar10(const std::filesystem::path& dir, bool verify_checksums = true);
Dataset load_cifar100(const std::filesystem::path& dir, bool verify_checksums = true);

// Records of 1 (CIFAR-10) or 2 (CIFAR-100) label bytes followed by 3072
// pixel bytes. For CIFAR-100 the fine label is used.
Split parse_cifar_records(const std::vector<std::uint8_t>& bytes, std::size_t label_bytes);

// ---- Synthetic Gaussian blobs ---------------------------------------------

struct SyntheticOptions {
  std::size_t n_train = 1000;
  std::size_t n_test = 250;
  std::size_t dims = 20;
  std::size_t classes = 4;
  double separation = 2.5;
  std::uint64_t seed = 0;
};

// Class centres drawn N(0, separation^2) per dimension, unit-variance
// samples, min-max scaled to [0, 1] with training statistics.
Dataset make_synthetic(const SyntheticOptions& options);

// ---- Files and checksums --------------------------------------------------

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

std::string sha256_hex(const std::vector<std::uint8_t>& bytes);
std::string md5_hex(const std::vector<std::uint8_t>& bytes);

// Inflates gzip data; returns the input unchanged when it is not gzip.
std::vector<std::uint8_t> maybe_gunzip(const std::vector<std::uint8_t>& bytes);

// Regular-file members of a POSIX tar archive whose basename is in `wanted`.
std::vector<std::pair<std::string, std::vector<std::uint8_t>>> untar(
    const std::vector<std::uint8_t>& archive, const std::vector<std::string>& wanted);

// Reads "<sha256>  <name>" lines written by fetch.
std::vector<std::pair<std::string, std::string>> read_manifest(const std::filesystem::path& path);

}  // namespace vfl::data
