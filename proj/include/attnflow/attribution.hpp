#pragma once

#include <cstddef>
#include <optional>
#include <string_view>
#include <vector>

namespace attnflow {

enum class Method { kRaw, kRollout, kFlow };

std::string_view to_string(Method method);
std::optional<Method> parse_method(std::string_view name);

// A node of the attention graph. Layer 0 holds the input tokens; layer k is
// the output of the k-th attention block. Positions are 0-based.
struct NodeRef {
  std::size_t layer = 0;
  std::size_t position = 0;

  bool operator==(const NodeRef&) const = default;
};

// Attribution mass from one source node over the n input tokens.
//
// Raw and rollout maps sum to 1. Flow maps are per-sink max-flow values in
// [0, 1] and are deliberately left unnormalized.
struct AttributionMap {
  NodeRef source;
  std::vector<double> values;
  Method method = Method::kRaw;
};

}  // namespace attnflow
