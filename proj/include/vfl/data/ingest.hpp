#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "vfl/data/dataset.hpp"
#include "vfl/data/sources.hpp"

namespace vfl::data {

// Directory from VFL_LAB_CACHE_DIR, else $HOME/.cache/vfl_lab.
std::filesystem::path default_cache_dir();

struct FetchOptions {
  // Mirror root; files are requested as <base_url>/<name>[.gz|.tar.gz].
  std::string base_url;
  // Import from a local directory instead of downloading.
  std::optional<std::filesystem::path> from_dir;
};

std::string default_base_url(const std::string& dataset);

// Downloads (or imports), verifies, and installs a dataset into
// <cache_dir>/<dataset>. Throws DataError on any checksum failure.
void fetch_dataset(const std::string& dataset, const std::filesystem::path& cache_dir,
                   const FetchOptions& options);

// GET via libcurl; supports file:// URLs.
std::vector<std::uint8_t> download(const std::string& url);

struct IngestOptions {
  bool allow_download = false;
  FetchOptions fetch;
  SyntheticOptions synthetic;
  // 0 keeps the full split.
  std::size_t max_train = 0;
  std::size_t max_test = 0;
};

// Normalized dataset by name: mnist, cifar10, cifar100, synthetic.
Dataset ingest_dataset(const std::string& name, const std::filesystem::path& cache_dir,
                       const IngestOptions& options = {});

}  // namespace vfl::data
