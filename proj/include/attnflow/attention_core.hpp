#pragma once

#include <cstddef>
#include <variant>
#include <vector>

#include "attnflow/attribution.hpp"
#include "attnflow/bundle_io.hpp"
#include "attnflow/matrix.hpp"

namespace attnflow {

// Share of each adjusted row given to the residual (identity) path:
// A = (1 - share) * W + share * I.
inline constexpr double kDefaultResidualShare = 0.5;

struct HeadAveraged {
  bool operator==(const HeadAveraged&) const = default;
};

// Analyse one head of one layer. Layers below `layer` are head-averaged;
// layers above it are dropped. `layer` is 1-based, `head` 0-based.
struct SingleHead {
  std::size_t layer = 1;
  std::size_t head = 0;

  bool operator==(const SingleHead&) const = default;
};

using HeadMode = std::variant<HeadAveraged, SingleHead>;

// Residual-adjusted, row-stochastic attention per layer. layers[k - 1] maps
// layer k - 1 representations to layer k.
struct AdjustedAttention {
  std::vector<Matrix> layers;
  HeadMode mode = HeadAveraged{};

  std::size_t num_layers() const { return layers.size(); }
  std::size_t seq_len() const { return layers.empty() ? 0 : static_cast<std::size_t>(layers.front().rows()); }
};

// One head of the bundle in float64 with each row rescaled to sum to 1.
Matrix head_attention(const AttentionBundle& bundle, std::size_t layer, std::size_t head);

// Elementwise mean over heads of a 1-based layer.
Matrix average_heads(const AttentionBundle& bundle, std::size_t layer);

// (1 - share) * w + share * I, row-normalized. `w` must be row-stochastic
// within 1e-6 (kNotStochastic otherwise).
Matrix add_residual(const Matrix& w, double residual_share = kDefaultResidualShare);

AdjustedAttention adjust(const AttentionBundle& bundle, const HeadMode& mode = HeadAveraged{},
                         double residual_share = kDefaultResidualShare);

// Head-averaged attention row of `position` at a 1-based layer, without
// residual adjustment.
AttributionMap token_attribution_raw(const AttentionBundle& bundle, std::size_t layer,
                                     std::size_t position);

}  // namespace attnflow
