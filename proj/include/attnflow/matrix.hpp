#pragma once

#include <cstddef>
#include <string_view>

#include <Eigen/Core>

namespace attnflow {

// Dense float64 matrix used for every in-memory attention computation.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// True when `m` is square, entries lie in [0, 1 + tol] and every row sums to 1
// within `tol`.
bool is_row_stochastic(const Matrix& m, double tol);

// Throws Error(code) naming the offending row when `m` is not row-stochastic.
void require_row_stochastic(const Matrix& m, double tol, std::string_view context);

}  // namespace attnflow
