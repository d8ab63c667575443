#include "vfl/core/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "vfl/core/error.hpp"

namespace vfl {

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

std::vector<std::size_t> Rng::sample_without_replacement(std::size_t n, std::size_t count) {
  if (count > n) throw ValidationError("cannot sample more items than available");
  std::vector<std::size_t> order = permutation(n);
  order.resize(count);
  std::sort(order.begin(), order.end());
  return order;
}

}  // namespace vfl
