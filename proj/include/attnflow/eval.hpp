#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "attnflow/attention_core.hpp"
#include "attnflow/attribution.hpp"
#include "attnflow/bundle_io.hpp"

namespace attnflow {

// Average (fractional) ranks, 1-based. Exactly equal values share the mean
// of the ranks they occupy.
std::vector<double> average_ranks(std::span<const double> values);

// Spearman's rho as the Pearson correlation of average ranks. Returns
// nullopt when either input is constant (rho undefined).
// Throws kLengthMismatch, kTooShort (n < 2) or kInvalidArgument (non-finite).
std::optional<double> spearman(std::span<const double> x, std::span<const double> y);

struct CorrelationReport {
  Method method = Method::kRaw;
  std::size_t layer = 0;
  std::vector<std::pair<std::string, double>> per_sample;
  // Samples whose rho is undefined; kept out of the aggregates.
  std::vector<std::string> degenerate;
  double mean = 0.0;
  // Population standard deviation of per_sample.
  double std_dev = 0.0;
  std::size_t count = 0;
};

struct CorpusOptions {
  double residual_share = kDefaultResidualShare;
  // Drop the probe position from both vectors before correlating.
  bool exclude_source = true;
  std::size_t threads = 1;
};

// Sample id used in reports: metadata "sample_id" when present.
std::string sample_id(const AttentionBundle& bundle, std::size_t index);

// One report per layer 1..L. All bundles must share L and carry the named
// importance vector (kMissingImportance lists every offender).
std::vector<CorrelationReport> correlate_corpus(std::span<const AttentionBundle> bundles,
                                                Method method, std::string_view importance_name,
                                                std::size_t source_position,
                                                const CorpusOptions& options = {});

// Recomputes mean, std_dev and count from per_sample.
void summarize(CorrelationReport& report);

std::string reports_to_json(std::span<const CorrelationReport> reports);

// Aligned text table: one row per method, one column per layer, cells
// formatted as mean±std.
std::string reports_to_table(std::span<const CorrelationReport> reports);

}  // namespace attnflow
