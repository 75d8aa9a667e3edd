#pragma once

#include <stdexcept>

#include "sfus/nn/autograd.hpp"

namespace sfus::models {

/// Bad configuration or a checkpoint that does not match its model.
class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Per-epoch outputs of a window: features [B, T, d] (the tap consumed by
/// fusion) and stage probabilities [B, T, 4].
struct StageOutput {
  nn::Var features;
  nn::Var probs;
};

/// Batch of one when `windows` is rank 2.
nn::Var as_batched(const nn::Var& windows);

}  // namespace sfus::models
