#include "attnflow/attention_core.hpp"

#include <cmath>
#include <string>

#include "attnflow/error.hpp"

namespace attnflow {

namespace {

constexpr double kResidualInputTolerance = 1e-6;

std::string index_error(const char* what, std::size_t value, std::size_t lo, std::size_t hi) {
  return std::string(what) + " " + std::to_string(value) + " outside [" + std::to_string(lo) +
         ", " + std::to_string(hi) + "]";
}

void check_layer(const AttentionBundle& bundle, std::size_t layer) {
  if (layer < 1 || layer > bundle.num_layers) {
    throw Error(ErrorCode::kIndexOutOfRange, index_error("layer", layer, 1, bundle.num_layers));
  }
}

}  // namespace

// ---- matrix helpers -------------------------------------------------------

bool is_row_stochastic(const Matrix& m, double tol) {
  if (m.rows() != m.cols() || m.rows() == 0) return false;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    double sum = 0.0;
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      const double v = m(r, c);
      if (!(v >= 0.0 && v <= 1.0 + tol)) return false;
      sum += v;
    }
    if (!(std::abs(sum - 1.0) <= tol)) return false;
  }
  return true;
}

void require_row_stochastic(const Matrix& m, double tol, std::string_view context) {
  if (m.rows() != m.cols() || m.rows() == 0) {
    throw Error(ErrorCode::kDimensionMismatch,
                std::string(context) + ": expected a non-empty square matrix, got " +
                    std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
  }
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    double sum = 0.0;
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      const double v = m(r, c);
      if (!(v >= 0.0 && v <= 1.0 + tol)) {
        throw Error(ErrorCode::kNotStochastic,
                    std::string(context) + ": entry (" + std::to_string(r) + ", " +
                        std::to_string(c) + ") = " + std::to_string(v) + " outside [0, 1]");
      }
      sum += v;
    }
    if (!(std::abs(sum - 1.0) <= tol)) {
      throw Error(ErrorCode::kNotStochastic, std::string(context) + ": row " + std::to_string(r) +
                                                 " sums to " + std::to_string(sum));
    }
  }
}

std::string_view to_string(Method method) {
  switch (method) {
    case Method::kRaw: return "raw";
    case Method::kRollout: return "rollout";
    case Method::kFlow: return "flow";
  }
  return "unknown";
}

std::optional<Method> parse_method(std::string_view name) {
  if (name == "raw") return Method::kRaw;
  if (name == "rollout") return Method::kRollout;
  if (name == "flow") return Method::kFlow;
  return std::nullopt;
}

// ---- attention core -------------------------------------------------------

Matrix head_attention(const AttentionBundle& bundle, std::size_t layer, std::size_t head) {
  check_layer(bundle, layer);
  if (head >= bundle.num_heads) {
    throw Error(ErrorCode::kIndexOutOfRange, index_error("head", head, 0, bundle.num_heads - 1));
  }
  const auto n = static_cast<Eigen::Index>(bundle.seq_len);
  const auto src = bundle.head_matrix(layer, head);
  Matrix m(n, n);
  for (Eigen::Index r = 0; r < n; ++r) {
    double sum = 0.0;
    for (Eigen::Index c = 0; c < n; ++c) {
      m(r, c) = src[static_cast<std::size_t>(r * n + c)];
      sum += m(r, c);
    }
    if (!(sum > 0.0)) {
      throw Error(ErrorCode::kNotStochastic,
                  "attention row " + std::to_string(r) + " of layer " + std::to_string(layer) +
                      " head " + std::to_string(head) + " has zero mass");
    }
    m.row(r) /= sum;
  }
  return m;
}

Matrix average_heads(const AttentionBundle& bundle, std::size_t layer) {
  check_layer(bundle, layer);
  Matrix sum = head_attention(bundle, layer, 0);
  for (std::size_t h = 1; h < bundle.num_heads; ++h) sum += head_attention(bundle, layer, h);
  if (bundle.num_heads > 1) sum /= static_cast<double>(bundle.num_heads);
  return sum;
}

Matrix add_residual(const Matrix& w, double residual_share) {
  if (!(residual_share >= 0.0 && residual_share <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument,
                "residual share must lie in [0, 1], got " + std::to_string(residual_share));
  }
  require_row_stochastic(w, kResidualInputTolerance, "add_residual input");

  Matrix a = (1.0 - residual_share) * w;
  a.diagonal().array() += residual_share;
  for (Eigen::Index r = 0; r < a.rows(); ++r) a.row(r) /= a.row(r).sum();
  return a;
}

AdjustedAttention adjust(const AttentionBundle& bundle, const HeadMode& mode,
                         double residual_share) {
  AdjustedAttention out;
  out.mode = mode;
  if (const auto* single = std::get_if<SingleHead>(&mode)) {
    check_layer(bundle, single->layer);
    if (single->head >= bundle.num_heads) {
      throw Error(ErrorCode::kIndexOutOfRange,
                  index_error("head", single->head, 0, bundle.num_heads - 1));
    }
    out.layers.reserve(single->layer);
    for (std::size_t l = 1; l < single->layer; ++l) {
      out.layers.push_back(add_residual(average_heads(bundle, l), residual_share));
    }
    out.layers.push_back(
        add_residual(head_attention(bundle, single->layer, single->head), residual_share));
  } else {
    out.layers.reserve(bundle.num_layers);
    for (std::size_t l = 1; l <= bundle.num_layers; ++l) {
      out.layers.push_back(add_residual(average_heads(bundle, l), residual_share));
    }
  }
  return out;
}

AttributionMap token_attribution_raw(const AttentionBundle& bundle, std::size_t layer,
                                     std::size_t position) {
  check_layer(bundle, layer);
  if (position >= bundle.seq_len) {
    throw Error(ErrorCode::kIndexOutOfRange,
                index_error("position", position, 0, bundle.seq_len - 1));
  }
  const Matrix avg = average_heads(bundle, layer);
  AttributionMap map;
  map.source = {layer, position};
  map.method = Method::kRaw;
  map.values.assign(avg.row(static_cast<Eigen::Index>(position)).begin(),
                    avg.row(static_cast<Eigen::Index>(position)).end());
  return map;
}

}  // namespace attnflow
