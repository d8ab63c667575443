#pragma once

#include <span>
#include <vector>

#include "vfl/nn/loss.hpp"

namespace vfl::protocol {

using nn::Label;

struct Metrics {
  double f1 = 0.0;  // macro-averaged
  double accuracy = 0.0;
};

// Macro F1 over the classes that occur in either `truth` or `predicted`.
double macro_f1(std::span<const Label> truth, std::span<const Label> predicted);
double accuracy(std::span<const Label> truth, std::span<const Label> predicted);
Metrics score(std::span<const Label> truth, std::span<const Label> predicted);

}  // namespace vfl::protocol
