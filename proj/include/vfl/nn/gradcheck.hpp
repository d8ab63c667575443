#pragma once

#include <functional>
#include <vector>

#include "vfl/nn/layer.hpp"

namespace vfl::nn {

struct GradCheckResult {
  // ||analytic - numeric||_2 / max(||analytic||_2, ||numeric||_2) over all
  // checked entries.
  double relative_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t checked = 0;
  // Probes whose stencil straddles a kink (the h and h/2 estimates
  // disagree) are left out of the error.
  std::size_t skipped = 0;
};

// Compares gradients left in Parameter::grad by `backward` against a
// fourth-order central difference of `loss`. `loss` must be a pure function
// of the parameter values. At most `per_parameter` entries of each
// parameter are probed (chosen with `rng`); 0 probes all of them.
GradCheckResult check_gradients(const std::vector<Parameter*>& params,
                                const std::function<double()>& loss,
                                const std::function<void()>& backward, double step,
                                std::size_t per_parameter, Rng& rng);

}  // namespace vfl::nn
