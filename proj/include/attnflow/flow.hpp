#pragma once

#include <cstddef>
#include <vector>

#include "attnflow/attention_core.hpp"
#include "attnflow/attribution.hpp"
#include "attnflow/matrix.hpp"

namespace attnflow {

// Residual capacities at or below this value count as saturated; augmenting
// paths with a smaller bottleneck are never taken.
inline constexpr double kFlowEpsilon = 1e-12;

// Layered attention DAG. Nodes are (layer, position) with layer in [0, L];
// the edge (k, q) -> (k - 1, m) has capacity capacities(k)(q, m).
class FlowNetwork {
 public:
  // Accepts any non-negative finite square capacities of equal size. Use
  // build_network() for networks derived from adjusted attention.
  static FlowNetwork from_capacities(std::vector<Matrix> capacities);

  std::size_t num_layers() const { return capacities_.size(); }
  std::size_t seq_len() const {
    return capacities_.empty() ? 0 : static_cast<std::size_t>(capacities_.front().rows());
  }
  // Edges leaving a 1-based layer, zero-capacity ones included.
  const Matrix& capacities(std::size_t layer) const;
  std::size_t edge_count() const { return num_layers() * seq_len() * seq_len(); }

 private:
  explicit FlowNetwork(std::vector<Matrix> capacities) : capacities_(std::move(capacities)) {}

  std::vector<Matrix> capacities_;
};

// Capacities copied from the adjusted attention; every layer must be
// row-stochastic within 1e-9.
FlowNetwork build_network(const AdjustedAttention& adjusted);

// Maximum flow from `source` (layer >= 1) to input token `sink_position`,
// computed with Dinic's algorithm on a freshly built residual graph.
double max_flow(const FlowNetwork& network, NodeRef source, std::size_t sink_position);

// values[m] = max_flow(network, source, m). Sinks are solved independently;
// with threads > 1 they are spread over worker threads, each owning its own
// residual graph.
AttributionMap token_attribution_flow(const FlowNetwork& network, NodeRef source,
                                      std::size_t threads = 1);

}  // namespace attnflow
