#pragma once

// Reference computations for tests. None of these call into the library's
// rollout, flow or eval code paths.

#include <cstddef>
#include <span>
#include <vector>

#include "attnflow/matrix.hpp"

namespace attnflow::testing {

// Triple-loop matrix product.
Matrix naive_matmul(const Matrix& a, const Matrix& b);

// Sum over every directed path from (upper, source) down to (lower, sink) of
// the product of edge weights. layers[k - 1] holds edges from layer k to k - 1.
double path_sum(const std::vector<Matrix>& layers, std::size_t upper, std::size_t source,
                std::size_t lower, std::size_t sink);

// Max over paths of the minimum edge weight (widest path) from
// (upper, source) to (0, sink).
double widest_path(const std::vector<Matrix>& layers, std::size_t upper, std::size_t source,
                   std::size_t sink);

// Sum over paths of the minimum edge weight: the double-counting quantity
// that max flow must not equal in general.
double path_min_sum(const std::vector<Matrix>& layers, std::size_t upper, std::size_t source,
                    std::size_t sink);

// Maximize c.x subject to A x <= b, x >= 0, with b >= 0. Dense tableau
// simplex with Bland's rule.
double simplex_maximize(const std::vector<std::vector<double>>& a, const std::vector<double>& b,
                        const std::vector<double>& c);

// Max flow from (upper, source) to (0, sink) over the whole layered graph as
// a linear program: one variable per edge, capacity rows, and conservation
// written as paired inequalities.
double lp_max_flow(const std::vector<Matrix>& layers, std::size_t upper, std::size_t source,
                   std::size_t sink);

// Minimum s-t cut by enumerating the side of every intermediate node in
// layers 1..upper-1. Input tokens other than the sink have no outgoing edges
// and are kept on the source side; nodes at or above the source layer other
// than the source are unreachable and kept on the sink side.
double min_cut(const std::vector<Matrix>& layers, std::size_t upper, std::size_t source,
               std::size_t sink);

// Average ranks by counting: 1 + #smaller + (#equal - 1) / 2.
std::vector<double> counting_ranks(std::span<const double> x);

double pearson(std::span<const double> x, std::span<const double> y);

// Rank with counting_ranks, then Pearson.
double spearman_oracle(std::span<const double> x, std::span<const double> y);

}  // namespace attnflow::testing
