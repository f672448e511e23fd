#include "attnflow/flow.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <thread>

#include "attnflow/error.hpp"
#include "attnflow/rollout.hpp"

namespace attnflow {

namespace {

// Residual graph in compressed adjacency form. Every edge is stored next to
// its reverse so that edge ^ 1 is the partner.
class ResidualGraph {
 public:
  explicit ResidualGraph(std::size_t nodes) : out_(nodes) {}

  void add_edge(int from, int to, double capacity) {
    if (!(capacity > 0.0)) return;
    const int id = static_cast<int>(to_.size());
    to_.push_back(to);
    cap_.push_back(capacity);
    to_.push_back(from);
    cap_.push_back(0.0);
    out_[static_cast<std::size_t>(from)].push_back(id);
    out_[static_cast<std::size_t>(to)].push_back(id + 1);
  }

  // Flattens the per-node edge lists; call once after all add_edge() calls.
  void finalize() {
    offset_.assign(out_.size() + 1, 0);
    for (std::size_t u = 0; u < out_.size(); ++u) {
      offset_[u + 1] = offset_[u] + static_cast<int>(out_[u].size());
    }
    adj_.clear();
    adj_.reserve(static_cast<std::size_t>(offset_.back()));
    for (auto& edges : out_) {
      adj_.insert(adj_.end(), edges.begin(), edges.end());
      edges.clear();
      edges.shrink_to_fit();
    }
  }

  double dinic(int source, int sink) {
    const std::size_t nodes = offset_.size() - 1;
    level_.assign(nodes, -1);
    cursor_.assign(nodes, 0);
    queue_.reserve(nodes);
    sink_ = sink;
    double total = 0.0;
    while (build_levels(source)) {
      std::copy(offset_.begin(), offset_.end() - 1, cursor_.begin());
      for (;;) {
        const double pushed = augment(source, std::numeric_limits<double>::infinity());
        if (!(pushed > kFlowEpsilon)) break;
        total += pushed;
      }
    }
    return total;
  }

 private:
  bool build_levels(int source) {
    std::fill(level_.begin(), level_.end(), -1);
    queue_.clear();
    queue_.push_back(source);
    level_[static_cast<std::size_t>(source)] = 0;
    for (std::size_t head = 0; head < queue_.size(); ++head) {
      const int u = queue_[head];
      for (int i = offset_[u]; i < offset_[u + 1]; ++i) {
        const int e = adj_[static_cast<std::size_t>(i)];
        const int v = to_[static_cast<std::size_t>(e)];
        if (level_[static_cast<std::size_t>(v)] < 0 && cap_[static_cast<std::size_t>(e)] > kFlowEpsilon) {
          level_[static_cast<std::size_t>(v)] = level_[static_cast<std::size_t>(u)] + 1;
          queue_.push_back(v);
        }
      }
    }
    return level_[static_cast<std::size_t>(sink_)] >= 0;
  }

  // Pushes up to `limit` along level-increasing edges, possibly over several
  // branches, and returns the amount pushed.
  double augment(int u, double limit) {
    if (u == sink_) return limit;
    double pushed = 0.0;
    const auto uu = static_cast<std::size_t>(u);
    for (int& i = cursor_[uu]; i < offset_[u + 1]; ++i) {
      const auto e = static_cast<std::size_t>(adj_[static_cast<std::size_t>(i)]);
      const int v = to_[e];
      if (level_[static_cast<std::size_t>(v)] != level_[uu] + 1 || !(cap_[e] > kFlowEpsilon)) continue;
      const double got = augment(v, std::min(limit - pushed, cap_[e]));
      if (got > 0.0) {
        cap_[e] -= got;
        cap_[e ^ 1] += got;
        pushed += got;
        if (limit - pushed <= kFlowEpsilon) return pushed;
      }
    }
    return pushed;
  }

  std::vector<std::vector<int>> out_;
  std::vector<int> offset_;
  std::vector<int> adj_;
  std::vector<int> to_;
  std::vector<double> cap_;
  std::vector<int> level_;
  std::vector<int> cursor_;
  std::vector<int> queue_;
  int sink_ = -1;
};

void check_source(const FlowNetwork& network, NodeRef source) {
  if (source.layer < 1 || source.layer > network.num_layers()) {
    throw Error(ErrorCode::kIndexOutOfRange,
                "source layer " + std::to_string(source.layer) + " outside [1, " +
                    std::to_string(network.num_layers()) + "]");
  }
  if (source.position >= network.seq_len()) {
    throw Error(ErrorCode::kIndexOutOfRange,
                "source position " + std::to_string(source.position) + " outside [0, " +
                    std::to_string(network.seq_len() - 1) + "]");
  }
}

// Only the part of the DAG below the source can carry flow; the other nodes of
// the source layer and every layer above it are left out, as are input tokens
// other than the sink (they have no outgoing edges).
double solve(const FlowNetwork& network, NodeRef source, std::size_t sink_position) {
  const std::size_t n = network.seq_len();
  const std::size_t k = source.layer;
  const auto inner = static_cast<int>((k - 1) * n);
  const int src = 0;
  const int sink = inner + 1;
  const auto node = [n](std::size_t layer, std::size_t pos) {
    return 1 + static_cast<int>((layer - 1) * n + pos);
  };

  ResidualGraph g(static_cast<std::size_t>(inner) + 2);
  const auto p = static_cast<Eigen::Index>(source.position);
  const auto m = static_cast<Eigen::Index>(sink_position);
  if (k == 1) {
    g.add_edge(src, sink, network.capacities(1)(p, m));
  } else {
    const Matrix& top = network.capacities(k);
    for (std::size_t q = 0; q < n; ++q) g.add_edge(src, node(k - 1, q), top(p, static_cast<Eigen::Index>(q)));
    for (std::size_t layer = k - 1; layer >= 2; --layer) {
      const Matrix& c = network.capacities(layer);
      for (std::size_t q = 0; q < n; ++q) {
        for (std::size_t r = 0; r < n; ++r) {
          g.add_edge(node(layer, q), node(layer - 1, r),
                     c(static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(r)));
        }
      }
    }
    const Matrix& bottom = network.capacities(1);
    for (std::size_t q = 0; q < n; ++q) g.add_edge(node(1, q), sink, bottom(static_cast<Eigen::Index>(q), m));
  }
  g.finalize();
  return g.dinic(src, sink);
}

}  // namespace

FlowNetwork FlowNetwork::from_capacities(std::vector<Matrix> capacities) {
  if (capacities.empty()) {
    throw Error(ErrorCode::kDimensionMismatch, "flow network needs at least one layer");
  }
  const auto n = capacities.front().rows();
  if (n == 0) throw Error(ErrorCode::kDimensionMismatch, "flow network needs at least one position");
  for (std::size_t k = 0; k < capacities.size(); ++k) {
    const Matrix& c = capacities[k];
    if (c.rows() != n || c.cols() != n) {
      throw Error(ErrorCode::kDimensionMismatch,
                  "capacity layer " + std::to_string(k + 1) + " is " + std::to_string(c.rows()) +
                      "x" + std::to_string(c.cols()) + ", expected " + std::to_string(n) + "x" +
                      std::to_string(n));
    }
    if (!(c.array() >= 0.0).all() || !c.allFinite()) {
      throw Error(ErrorCode::kInvalidArgument,
                  "capacity layer " + std::to_string(k + 1) + " has negative or non-finite entries");
    }
  }
  return FlowNetwork(std::move(capacities));
}

const Matrix& FlowNetwork::capacities(std::size_t layer) const {
  if (layer < 1 || layer > capacities_.size()) {
    throw Error(ErrorCode::kIndexOutOfRange, "layer " + std::to_string(layer) + " outside [1, " +
                                                 std::to_string(capacities_.size()) + "]");
  }
  return capacities_[layer - 1];
}

FlowNetwork build_network(const AdjustedAttention& adjusted) {
  for (std::size_t k = 0; k < adjusted.layers.size(); ++k) {
    require_row_stochastic(adjusted.layers[k], kAdjustedRowTolerance,
                           "adjusted layer " + std::to_string(k + 1));
  }
  return FlowNetwork::from_capacities(adjusted.layers);
}

double max_flow(const FlowNetwork& network, NodeRef source, std::size_t sink_position) {
  check_source(network, source);
  if (sink_position >= network.seq_len()) {
    throw Error(ErrorCode::kIndexOutOfRange,
                "sink position " + std::to_string(sink_position) + " outside [0, " +
                    std::to_string(network.seq_len() - 1) + "]");
  }
  return solve(network, source, sink_position);
}

AttributionMap token_attribution_flow(const FlowNetwork& network, NodeRef source,
                                      std::size_t threads) {
  check_source(network, source);
  const std::size_t n = network.seq_len();
  AttributionMap map;
  map.source = source;
  map.method = Method::kFlow;
  map.values.assign(n, 0.0);

  threads = std::clamp<std::size_t>(threads, 1, n);
  if (threads == 1) {
    for (std::size_t m = 0; m < n; ++m) map.values[m] = solve(network, source, m);
    return map;
  }
  std::vector<std::jthread> workers;
  workers.reserve(threads);
  for (std::size_t t = 0; t < threads; ++t) {
    workers.emplace_back([&, t] {
      for (std::size_t m = t; m < n; m += threads) map.values[m] = solve(network, source, m);
    });
  }
  workers.clear();
  return map;
}

}  // namespace attnflow
