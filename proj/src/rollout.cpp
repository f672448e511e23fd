#include "attnflow/rollout.hpp"

#include <string>

#include "attnflow/error.hpp"

namespace attnflow {

namespace {

void check_stack(const AdjustedAttention& adjusted) {
  if (adjusted.layers.empty()) {
    throw Error(ErrorCode::kDimensionMismatch, "rollout needs at least one layer");
  }
  const auto n = adjusted.layers.front().rows();
  for (std::size_t k = 0; k < adjusted.layers.size(); ++k) {
    const Matrix& m = adjusted.layers[k];
    if (m.rows() != n || m.cols() != n) {
      throw Error(ErrorCode::kDimensionMismatch,
                  "layer " + std::to_string(k + 1) + " is " + std::to_string(m.rows()) + "x" +
                      std::to_string(m.cols()) + ", expected " + std::to_string(n) + "x" +
                      std::to_string(n));
    }
    require_row_stochastic(m, kAdjustedRowTolerance, "adjusted layer " + std::to_string(k + 1));
  }
}

}  // namespace

RolloutStack rollout(const AdjustedAttention& adjusted) {
  check_stack(adjusted);
  RolloutStack stack;
  stack.layers.reserve(adjusted.layers.size());
  stack.layers.push_back(adjusted.layers.front());
  for (std::size_t k = 1; k < adjusted.layers.size(); ++k) {
    Matrix next(adjusted.layers[k].rows(), adjusted.layers[k].cols());
    next.noalias() = adjusted.layers[k] * stack.layers.back();
    stack.layers.push_back(std::move(next));
  }
  return stack;
}

Matrix rollout_between(const AdjustedAttention& adjusted, std::size_t upper, std::size_t lower) {
  check_stack(adjusted);
  const std::size_t layers = adjusted.layers.size();
  if (upper > layers) {
    throw Error(ErrorCode::kIndexOutOfRange,
                "upper layer " + std::to_string(upper) + " exceeds L=" + std::to_string(layers));
  }
  if (lower >= upper) {
    throw Error(ErrorCode::kInvalidRange, "rollout_between needs lower < upper, got lower=" +
                                              std::to_string(lower) +
                                              " upper=" + std::to_string(upper));
  }
  Matrix result = adjusted.layers[lower];
  for (std::size_t k = lower + 1; k < upper; ++k) {
    Matrix next(result.rows(), result.cols());
    next.noalias() = adjusted.layers[k] * result;
    result = std::move(next);
  }
  return result;
}

AttributionMap token_attribution_rollout(const RolloutStack& stack, std::size_t layer,
                                         std::size_t position) {
  if (layer < 1 || layer > stack.layers.size()) {
    throw Error(ErrorCode::kIndexOutOfRange, "layer " + std::to_string(layer) + " outside [1, " +
                                                 std::to_string(stack.layers.size()) + "]");
  }
  const Matrix& m = stack.layers[layer - 1];
  if (position >= static_cast<std::size_t>(m.rows())) {
    throw Error(ErrorCode::kIndexOutOfRange,
                "position " + std::to_string(position) + " outside [0, " +
                    std::to_string(m.rows() - 1) + "]");
  }
  AttributionMap map;
  map.source = {layer, position};
  map.method = Method::kRollout;
  const auto row = m.row(static_cast<Eigen::Index>(position));
  map.values.assign(row.begin(), row.end());
  return map;
}

}  // namespace attnflow
