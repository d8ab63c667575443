#include <doctest.h>

#include <cstdlib>
#include <fstream>

#include "support.hpp"
#include "vfl/core/error.hpp"
#include "vfl/data/augment.hpp"
#include "vfl/data/ingest.hpp"

using namespace vfl;
using namespace vfl::data;

namespace {

std::vector<std::uint8_t> be32(std::uint32_t v) {
  return {std::uint8_t(v >> 24), std::uint8_t(v >> 16), std::uint8_t(v >> 8), std::uint8_t(v)};
}

std::vector<std::uint8_t> idx_images(std::uint32_t n, std::uint32_t h, std::uint32_t w) {
  std::vector<std::uint8_t> out;
  for (auto v : {2051u, n, h, w}) {
    auto b = be32(v);
    out.insert(out.end(), b.begin(), b.end());
  }
  for (std::uint32_t i = 0; i < n * h * w; ++i) out.push_back(std::uint8_t(i * 37 % 256));
  return out;
}

}  // namespace

TEST_CASE("IDX parsing scales pixels to the unit interval") {
  const auto bytes = idx_images(3, 4, 5);
  const Tensor images = parse_idx_images(bytes);
  CHECK(images.shape() == Shape{3, 1, 4, 5});
  CHECK(images[1] == doctest::Approx(37.0 / 255.0));
  auto labels = be32(2049);
  for (auto b : be32(2)) labels.push_back(b);
  labels.push_back(7);
  labels.push_back(0);
  CHECK(parse_idx_labels(labels) == std::vector<Label>{7, 0});

  auto broken = bytes;
  broken.pop_back();
  CHECK_THROWS_AS(parse_idx_images(broken), DataError);
  CHECK_THROWS_AS(parse_idx_labels(bytes), DataError);
}

TEST_CASE("CIFAR records") {
  std::vector<std::uint8_t> bytes;
  for (int r = 0; r < 2; ++r) {
    bytes.push_back(std::uint8_t(r + 3));
    for (int i = 0; i < 3072; ++i) bytes.push_back(std::uint8_t((i + r) % 256));
  }
  const Split split = parse_cifar_records(bytes, 1);
  CHECK(split.size() == 2);
  CHECK(split.labels[1] == 4);
  CHECK(split.features.shape() == Shape{2, 3, 32, 32});
  bytes.pop_back();
  CHECK_THROWS_AS(parse_cifar_records(bytes, 1), DataError);
}

TEST_CASE("synthetic blobs are deterministic and normalized") {
  SyntheticOptions o;
  o.seed = 7;
  const Dataset a = make_synthetic(o), b = make_synthetic(o);
  CHECK(a.train.size() == 1000);
  CHECK(a.test.size() == 250);
  CHECK(a.geometry.features() == 20);
  CHECK(a.num_classes == 4);
  CHECK(a.train.features == b.train.features);
  CHECK(a.train.labels == b.train.labels);
  for (float v : a.train.features.values()) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
  }
  o.seed = 8;
  CHECK_FALSE(make_synthetic(o).train.features == a.train.features);
  const Dataset t = truncate(a, 100, 10);
  CHECK(t.train.size() == 100);
  CHECK(t.test.size() == 10);
}

TEST_CASE("per-channel standardization updates the range") {
  Dataset ds;
  ds.geometry = {Layout::kImage, 2, 2, 2};
  ds.range = FeatureRange::unit(2);
  ds.train.features = test::uniform_tensor({50, 2, 2, 2}, 3);
  ds.train.labels.assign(50, 0);
  ds.test.features = test::uniform_tensor({5, 2, 2, 2}, 4);
  ds.test.labels.assign(5, 0);
  standardize_channels(ds);
  for (std::size_t c = 0; c < 2; ++c) {
    double mean = 0, sq = 0;
    for (std::size_t n = 0; n < 50; ++n)
      for (std::size_t i = 0; i < 4; ++i) {
        const double v = ds.train.features[(n * 2 + c) * 4 + i];
        mean += v;
        sq += v * v;
      }
    mean /= 200;
    CHECK(mean == doctest::Approx(0.0).epsilon(1e-5).scale(1));
    CHECK(sq / 200 - mean * mean == doctest::Approx(1.0).epsilon(1e-3));
    CHECK(ds.range.lo[c] < 0.0f);
    CHECK(ds.range.hi[c] > 0.0f);
  }
}

TEST_CASE("ingestion refuses missing data when downloads are disabled") {
  const auto dir = test::scratch_dir("ingest_missing");
  CHECK_THROWS_AS(ingest_dataset("mnist", dir), DataError);
  CHECK_THROWS_AS(ingest_dataset("cifar10", dir), DataError);
  CHECK_THROWS_AS(ingest_dataset("imagenet", dir), DataError);
  const Dataset s = ingest_dataset("synthetic", dir);
  CHECK(s.train.size() == 1000);
}

TEST_CASE("fetching rejects files with the wrong checksum") {
  const auto src = test::scratch_dir("fetch_src");
  const auto cache = test::scratch_dir("fetch_cache");
  auto labels = be32(2049);
  for (auto b : be32(1)) labels.push_back(b);
  labels.push_back(1);
  write_file(src / "train-images-idx3-ubyte", idx_images(1, 28, 28));
  write_file(src / "t10k-images-idx3-ubyte", idx_images(1, 28, 28));
  write_file(src / "train-labels-idx1-ubyte", labels);
  write_file(src / "t10k-labels-idx1-ubyte", labels);
  FetchOptions options;
  options.from_dir = src;
  CHECK_THROWS_AS(fetch_dataset("mnist", cache, options), DataError);
  CHECK_FALSE(std::filesystem::exists(cache / "mnist" / "train-images-idx3-ubyte"));
}

TEST_CASE("gzip round trip through zlib") {
  const std::vector<std::uint8_t> plain{'a', 'b', 'c'};
  CHECK(maybe_gunzip(plain) == plain);
  // "hello\n" compressed with gzip -n.
  const std::vector<std::uint8_t> gz{0x1f, 0x8b, 0x08, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x03, 0xcb, 0x48, 0xcd,
                                     0xc9, 0xc9, 0xe7, 0x02, 0x00, 0x20, 0x30, 0x3a, 0x36, 0x06, 0x00, 0x00, 0x00};
  const auto out = maybe_gunzip(gz);
  CHECK(std::string(out.begin(), out.end()) == "hello\n");
  CHECK(sha256_hex(plain) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("cache directory honours the environment") {
  const char* old = std::getenv("VFL_LAB_CACHE_DIR");
  const std::string saved = old ? old : "";
  setenv("VFL_LAB_CACHE_DIR", "/tmp/somewhere_else", 1);
  CHECK(default_cache_dir() == std::filesystem::path("/tmp/somewhere_else"));
  if (old) setenv("VFL_LAB_CACHE_DIR", saved.c_str(), 1);
  else unsetenv("VFL_LAB_CACHE_DIR");
}

TEST_CASE("MNIST from the local cache") {
  const auto dir = default_cache_dir() / "mnist";
  if (!std::filesystem::exists(dir / "train-images-idx3-ubyte")) {
    MESSAGE("MNIST is not cached; skipping");
    return;
  }
  const Dataset ds = load_mnist(dir);
  CHECK(ds.train.size() == 60000);
  CHECK(ds.test.size() == 10000);
  CHECK(ds.geometry.height == 28);
  CHECK(ds.geometry.width == 28);
  CHECK(ds.geometry.channels == 1);
  CHECK(ds.num_classes == 10);
}

TEST_CASE("augmentations keep shape and range") {
  const Geometry g{Layout::kImage, 3, 8, 10};
  FeatureRange range{{-1.0f, 0.0f, -2.0f}, {1.0f, 3.0f, 2.0f}};
  Tensor batch({6, 3, 8, 10});
  Rng fill(5);
  for (std::size_t n = 0; n < 6; ++n)
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t i = 0; i < 80; ++i) batch[(n * 3 + c) * 80 + i] = fill.uniform(range.lo[c], range.hi[c]);
  AugmentOptions opts;
  opts.horizontal_flip = true;
  const Augmenter aug(g, range, opts);
  Rng r1(9), r2(9);
  const Tensor weak = aug.weak(batch, r1), strong = aug.strong(batch, r1);
  CHECK(weak.shape() == batch.shape());
  CHECK(strong.shape() == batch.shape());
  for (const Tensor* t : {&weak, &strong})
    for (std::size_t n = 0; n < 6; ++n)
      for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < 80; ++i) {
          const float v = (*t)[(n * 3 + c) * 80 + i];
          CHECK(v >= range.lo[c] - 1e-5f);
          CHECK(v <= range.hi[c] + 1e-5f);
        }
  CHECK(aug.weak(batch, r2) == weak);

  SUBCASE("tabular") {
    const Augmenter tab({Layout::kTabular, 1, 1, 12}, FeatureRange::unit(1));
    const Tensor x = test::uniform_tensor({4, 12}, 6);
    Rng r(3);
    for (const Tensor& t : {tab.weak(x, r), tab.strong(x, r)}) {
      CHECK(t.shape() == x.shape());
      for (float v : t.values()) CHECK((v >= 0.0f && v <= 1.0f));
    }
  }
  SUBCASE("digits are never flipped by default") {
    CHECK_FALSE(default_augment_options("mnist").horizontal_flip);
    CHECK(default_augment_options("cifar10").horizontal_flip);
  }
  SUBCASE("wrong width") { CHECK_THROWS_AS(aug.weak(Tensor({2, 5}), r1), ValidationError); }
}
