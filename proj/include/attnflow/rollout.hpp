#pragma once

#include <cstddef>
#include <vector>

#include "attnflow/attention_core.hpp"
#include "attnflow/attribution.hpp"
#include "attnflow/matrix.hpp"

namespace attnflow {

// layers[k - 1] holds the rolled-out attention from layer k down to the
// input tokens: A(k) * A(k - 1) * ... * A(1).
struct RolloutStack {
  std::vector<Matrix> layers;

  std::size_t num_layers() const { return layers.size(); }
};

// Rows of the adjusted matrices must sum to 1 within this tolerance.
inline constexpr double kAdjustedRowTolerance = 1e-9;

RolloutStack rollout(const AdjustedAttention& adjusted);

// Attention from every position of layer `upper` to every position of layer
// `lower` (0 = input tokens): A(upper) * ... * A(lower + 1).
Matrix rollout_between(const AdjustedAttention& adjusted, std::size_t upper, std::size_t lower);

// Row `position` of the rollout at 1-based `layer`.
AttributionMap token_attribution_rollout(const RolloutStack& stack, std::size_t layer,
                                         std::size_t position);

}  // namespace attnflow
