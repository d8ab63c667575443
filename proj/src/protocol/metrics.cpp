#include "vfl/protocol/metrics.hpp"

#include <map>

#include "vfl/core/error.hpp"

namespace vfl::protocol {
namespace {

void check_lengths(std::span<const Label> truth, std::span<const Label> predicted) {
  if (truth.size() != predicted.size())
    throw ValidationError("label vectors differ in length");
}

}  // namespace

double accuracy(std::span<const Label> truth, std::span<const Label> predicted) {
  check_lengths(truth, predicted);
  if (truth.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += truth[i] == predicted[i];
  return double(hits) / double(truth.size());
}

double macro_f1(std::span<const Label> truth, std::span<const Label> predicted) {
  check_lengths(truth, predicted);
  struct Counts {
    std::size_t tp = 0, fp = 0, fn = 0;
  };
  std::map<Label, Counts> classes;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] == predicted[i]) {
      ++classes[truth[i]].tp;
    } else {
      ++classes[truth[i]].fn;
      ++classes[predicted[i]].fp;
    }
  }
  if (classes.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& [label, c] : classes) {
    const double denom = double(2 * c.tp + c.fp + c.fn);
    sum += denom > 0 ? 2.0 * double(c.tp) / denom : 0.0;
  }
  return sum / double(classes.size());
}

Metrics score(std::span<const Label> truth, std::span<const Label> predicted) {
  return {macro_f1(truth, predicted), accuracy(truth, predicted)};
}

}  // namespace vfl::protocol
