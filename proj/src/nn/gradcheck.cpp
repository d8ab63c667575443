#include "vfl/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace vfl::nn {

GradCheckResult check_gradients(const std::vector<Parameter*>& params,
                                const std::function<double()>& loss,
                                const std::function<void()>& backward, double step,
                                std::size_t per_parameter, Rng& rng) {
  for (Parameter* p : params) p->grad.fill(0.0f);
  backward();

  double diff2 = 0, analytic2 = 0, numeric2 = 0;
  GradCheckResult result;
  for (Parameter* p : params) {
    std::vector<std::size_t> probe(p->value.size());
    std::iota(probe.begin(), probe.end(), std::size_t{0});
    if (per_parameter && per_parameter < probe.size())
      probe = rng.sample_without_replacement(probe.size(), per_parameter);
    for (std::size_t i : probe) {
      const float original = p->value[i];
      auto at = [&](double offset) {
        p->value[i] = float(original + offset);
        return loss();
      };
      auto stencil = [&](double h) {
        return (8 * (at(h) - at(-h)) - (at(2 * h) - at(-2 * h))) / (12 * h);
      };
      const double numeric = stencil(step);
      const double half = stencil(step / 2);
      p->value[i] = original;
      if (std::abs(numeric - half) > 1e-3 * std::max(std::abs(numeric), std::abs(half)) + 1e-5) {
        ++result.skipped;
        continue;
      }
      const double analytic = p->grad[i];
      diff2 += (analytic - numeric) * (analytic - numeric);
      analytic2 += analytic * analytic;
      numeric2 += numeric * numeric;
      result.max_abs_error = std::max(result.max_abs_error, std::abs(analytic - numeric));
      ++result.checked;
    }
  }
  const double scale = std::sqrt(std::max(analytic2, numeric2));
  result.relative_error = scale > 0 ? std::sqrt(diff2) / scale : std::sqrt(diff2);
  return result;
}

}  // namespace vfl::nn
