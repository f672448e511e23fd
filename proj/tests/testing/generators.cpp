#include "testing/generators.hpp"

#include <cmath>
#include <string>

#include "testing/oracles.hpp"

namespace attnflow::testing {

Matrix random_stochastic(Rng& rng, std::size_t n, double temperature) {
  std::normal_distribution<double> logit(0.0, 1.0);
  const auto size = static_cast<Eigen::Index>(n);
  Matrix m(size, size);
  for (Eigen::Index r = 0; r < size; ++r) {
    double sum = 0.0;
    for (Eigen::Index c = 0; c < size; ++c) {
      m(r, c) = std::exp(logit(rng) / temperature);
      sum += m(r, c);
    }
    for (Eigen::Index c = 0; c < size; ++c) m(r, c) /= sum;
  }
  return m;
}

Matrix random_adjusted_layer(Rng& rng, std::size_t n) {
  Matrix w = random_stochastic(rng, n);
  for (Eigen::Index r = 0; r < w.rows(); ++r) {
    for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = 0.5 * w(r, c) + (r == c ? 0.5 : 0.0);
  }
  return w;
}

AdjustedAttention random_adjusted(Rng& rng, std::size_t layers, std::size_t n) {
  AdjustedAttention adjusted;
  for (std::size_t l = 0; l < layers; ++l) adjusted.layers.push_back(random_adjusted_layer(rng, n));
  return adjusted;
}

AttentionBundle random_bundle(Rng& rng, const BundleShape& shape) {
  std::normal_distribution<float> logit(0.0f, 1.5f);
  std::uniform_real_distribution<float> score(-1.0f, 1.0f);
  AttentionBundle b;
  b.num_layers = static_cast<std::uint32_t>(shape.layers);
  b.num_heads = static_cast<std::uint32_t>(shape.heads);
  b.seq_len = static_cast<std::uint32_t>(shape.seq_len);
  const std::size_t n = shape.seq_len;
  for (std::size_t i = 0; i < n; ++i) b.tokens.push_back(i == 0 ? "[CLS]" : "tok" + std::to_string(i));
  b.attention.reserve(shape.layers * shape.heads * n * n);
  std::vector<float> row(n);
  for (std::size_t block = 0; block < shape.layers * shape.heads; ++block) {
    for (std::size_t r = 0; r < n; ++r) {
      float sum = 0.0f;
      for (auto& v : row) {
        v = std::exp(logit(rng));
        sum += v;
      }
      for (auto v : row) b.attention.push_back(v / sum);
    }
  }
  const char* names[] = {"blank_out", "input_gradient", "extra"};
  for (std::size_t k = 0; k < shape.importance_vectors; ++k) {
    NamedVector iv;
    iv.name = k < 3 ? names[k] : "importance_" + std::to_string(k);
    for (std::size_t i = 0; i < n; ++i) iv.values.push_back(score(rng));
    b.importance.push_back(std::move(iv));
  }
  if (shape.predictions) {
    const double p = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    b.predictions = {{"singular", p}, {"plural", 1.0 - p}};
  }
  if (shape.metadata) b.metadata = {{"model", "unit-test"}, {"sample_id", std::to_string(rng() % 10000)}};
  return b;
}

AttentionBundle bundle_from_layers(const std::vector<Matrix>& layers, std::size_t heads) {
  AttentionBundle b;
  const auto n = static_cast<std::size_t>(layers.front().rows());
  b.num_layers = static_cast<std::uint32_t>(layers.size());
  b.num_heads = static_cast<std::uint32_t>(heads);
  b.seq_len = static_cast<std::uint32_t>(n);
  for (std::size_t i = 0; i < n; ++i) b.tokens.push_back("t" + std::to_string(i));
  for (const auto& m : layers) {
    for (std::size_t h = 0; h < heads; ++h) {
      for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) b.attention.push_back(static_cast<float>(m(r, c)));
      }
    }
  }
  return b;
}

std::vector<AttentionBundle> trend_corpus(Rng& rng, const TrendCorpusShape& shape) {
  std::normal_distribution<double> noise(0.0, 1.0);
  const std::size_t n = shape.seq_len;
  std::vector<AttentionBundle> corpus;
  for (std::size_t s = 0; s < shape.bundles; ++s) {
    std::vector<Matrix> averaged;
    AttentionBundle b;
    b.num_layers = static_cast<std::uint32_t>(shape.layers);
    b.num_heads = static_cast<std::uint32_t>(shape.heads);
    b.seq_len = static_cast<std::uint32_t>(n);
    for (std::size_t i = 0; i < n; ++i) b.tokens.push_back(i == 0 ? "[CLS]" : "w" + std::to_string(i));
    for (std::size_t l = 1; l <= shape.layers; ++l) {
      // Sharp attention at the bottom, near-uniform attention higher up.
      const double temperature = l == 1 ? 0.5 : 1.5 * static_cast<double>(l);
      Matrix sum = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
      for (std::size_t h = 0; h < shape.heads; ++h) {
        const Matrix head = random_stochastic(rng, n, temperature);
        for (Eigen::Index r = 0; r < head.rows(); ++r) {
          for (Eigen::Index c = 0; c < head.cols(); ++c) b.attention.push_back(static_cast<float>(head(r, c)));
        }
      }
      // Average exactly what was stored, after float rounding.
      const std::size_t base = (l - 1) * shape.heads * n * n;
      for (std::size_t h = 0; h < shape.heads; ++h) {
        for (std::size_t r = 0; r < n; ++r) {
          double row_sum = 0.0;
          for (std::size_t c = 0; c < n; ++c) row_sum += b.attention[base + (h * n + r) * n + c];
          for (std::size_t c = 0; c < n; ++c) {
            sum(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) +=
                b.attention[base + (h * n + r) * n + c] / row_sum;
          }
        }
      }
      averaged.push_back(sum / static_cast<double>(shape.heads));
    }

    Matrix rolled = Matrix::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (const Matrix& w : averaged) {
      const Matrix a = 0.5 * w + 0.5 * Matrix::Identity(w.rows(), w.cols());
      rolled = naive_matmul(a, rolled);
    }
    NamedVector target{"target", {}};
    for (std::size_t i = 0; i < n; ++i) {
      const double truth = std::sqrt(rolled(0, static_cast<Eigen::Index>(i)));
      target.values.push_back(static_cast<float>(truth + shape.noise * noise(rng)));
    }
    b.importance.push_back(std::move(target));
    b.metadata.emplace_back("sample_id", "trend-" + std::to_string(s));
    corpus.push_back(std::move(b));
  }
  return corpus;
}

}  // namespace attnflow::testing
