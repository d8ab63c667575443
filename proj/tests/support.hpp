#pragma once

#include <cmath>
#include <filesystem>
#include <string>

#include "vfl/core/rng.hpp"
#include "vfl/core/tensor.hpp"

namespace vfl::test {

inline Tensor random_tensor(Shape shape, std::uint64_t seed, float scale = 1.0f) {
  Tensor t(std::move(shape));
  Rng rng(seed);
  for (float& v : t.values()) v = scale * float(rng.normal());
  return t;
}

inline Tensor uniform_tensor(Shape shape, std::uint64_t seed, float lo = 0.0f, float hi = 1.0f) {
  Tensor t(std::move(shape));
  Rng rng(seed);
  for (float& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

inline double relative_difference(double a, double b) {
  return std::fabs(a - b) / std::max({1.0, std::fabs(a), std::fabs(b)});
}

// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("vfl_lab_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace vfl::test
