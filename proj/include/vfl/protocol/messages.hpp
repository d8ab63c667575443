#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "vfl/core/tensor.hpp"

namespace vfl::protocol {

// Server -> participants: which samples make up the round.
struct BatchRequest {
  std::size_t epoch = 0;
  std::size_t round = 0;
  std::vector<std::size_t> sample_indices;
  bool training = true;
};

// Participant -> server: f_i(x_i) for the requested samples.
struct EmbeddingUpload {
  std::size_t participant_id = 0;
  std::vector<std::size_t> sample_indices;
  Tensor embedding;  // [batch, d_i]
};

// Server -> one participant: dLoss/d(its own embedding slice).
struct GradientSlice {
  std::size_t participant_id = 0;
  std::vector<std::size_t> sample_indices;
  Tensor grad;  // [batch, d_i]
};

// One observation made by a party, recorded for isolation audits.
struct AccessRecord {
  std::string what;          // "features", "gradient", "embedding", "labels"
  std::size_t owner = 0;     // participant id the data belongs to
  std::size_t epoch = 0;
};

}  // namespace vfl::protocol
