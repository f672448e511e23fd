#include "attnflow/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <thread>

#include "attnflow/error.hpp"
#include "attnflow/flow.hpp"
#include "attnflow/rollout.hpp"
#include "json.hpp"

namespace attnflow {

namespace {

// Per-bundle rho for every layer; nullopt marks an undefined correlation.
using LayerRhos = std::vector<std::optional<double>>;

std::optional<double> correlate(std::vector<double> attribution, const NamedVector& importance,
                                std::size_t source_position, bool exclude_source) {
  std::vector<double> target(importance.values.begin(), importance.values.end());
  if (exclude_source) {
    attribution.erase(attribution.begin() + static_cast<std::ptrdiff_t>(source_position));
    target.erase(target.begin() + static_cast<std::ptrdiff_t>(source_position));
  }
  if (attribution.size() < 2) return std::nullopt;
  return spearman(attribution, target);
}

LayerRhos evaluate_bundle(const AttentionBundle& bundle, Method method,
                          const NamedVector& importance, std::size_t source_position,
                          const CorpusOptions& options) {
  const std::size_t layers = bundle.num_layers;
  LayerRhos rhos(layers);
  switch (method) {
    case Method::kRaw:
      for (std::size_t l = 1; l <= layers; ++l) {
        rhos[l - 1] = correlate(token_attribution_raw(bundle, l, source_position).values,
                                importance, source_position, options.exclude_source);
      }
      break;
    case Method::kRollout: {
      const RolloutStack stack = rollout(adjust(bundle, HeadAveraged{}, options.residual_share));
      for (std::size_t l = 1; l <= layers; ++l) {
        rhos[l - 1] = correlate(token_attribution_rollout(stack, l, source_position).values,
                                importance, source_position, options.exclude_source);
      }
      break;
    }
    case Method::kFlow: {
      const FlowNetwork network =
          build_network(adjust(bundle, HeadAveraged{}, options.residual_share));
      for (std::size_t l = 1; l <= layers; ++l) {
        rhos[l - 1] = correlate(token_attribution_flow(network, {l, source_position}).values,
                                importance, source_position, options.exclude_source);
      }
      break;
    }
  }
  return rhos;
}

std::string format_fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

}  // namespace

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i + 1;
    while (j < order.size() && values[order[j]] == values[order[i]]) ++j;
    // Positions i..j-1 (0-based) hold ranks i+1..j.
    const double rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = rank;
    i = j;
  }
  return ranks;
}

std::optional<double> spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    throw Error(ErrorCode::kLengthMismatch, "spearman: lengths " + std::to_string(x.size()) +
                                                " and " + std::to_string(y.size()) + " differ");
  }
  if (x.size() < 2) throw Error(ErrorCode::kTooShort, "spearman: need at least 2 values");
  const auto finite = [](double v) { return std::isfinite(v); };
  if (!std::all_of(x.begin(), x.end(), finite) || !std::all_of(y.begin(), y.end(), finite)) {
    throw Error(ErrorCode::kInvalidArgument, "spearman: non-finite input");
  }

  const std::vector<double> rx = average_ranks(x);
  const std::vector<double> ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mean = (n + 1.0) / 2.0;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    const double dx = rx[i] - mean;
    const double dy = ry[i] - mean;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::string sample_id(const AttentionBundle& bundle, std::size_t index) {
  if (const std::string* id = bundle.find_metadata("sample_id")) return *id;
  return "sample-" + std::to_string(index);
}

void summarize(CorrelationReport& report) {
  report.count = report.per_sample.size();
  if (report.count == 0) {
    report.mean = 0.0;
    report.std_dev = 0.0;
    return;
  }
  double sum = 0.0;
  for (const auto& [id, rho] : report.per_sample) sum += rho;
  report.mean = sum / static_cast<double>(report.count);
  double sq = 0.0;
  for (const auto& [id, rho] : report.per_sample) sq += (rho - report.mean) * (rho - report.mean);
  report.std_dev = std::sqrt(sq / static_cast<double>(report.count));
}

std::vector<CorrelationReport> correlate_corpus(std::span<const AttentionBundle> bundles,
                                                Method method, std::string_view importance_name,
                                                std::size_t source_position,
                                                const CorpusOptions& options) {
  if (bundles.empty()) throw Error(ErrorCode::kInvalidArgument, "empty corpus");

  std::string missing;
  const std::size_t layers = bundles.front().num_layers;
  for (std::size_t i = 0; i < bundles.size(); ++i) {
    const auto& b = bundles[i];
    if (b.find_importance(importance_name) == nullptr) {
      if (!missing.empty()) missing += ", ";
      missing += sample_id(b, i);
    }
    if (b.num_layers != layers) {
      throw Error(ErrorCode::kShapeMismatch,
                  sample_id(b, i) + " has " + std::to_string(b.num_layers) +
                      " layers, corpus has " + std::to_string(layers));
    }
    if (source_position >= b.seq_len) {
      throw Error(ErrorCode::kIndexOutOfRange,
                  sample_id(b, i) + ": source position " + std::to_string(source_position) +
                      " outside [0, " + std::to_string(b.seq_len - 1) + "]");
    }
  }
  if (!missing.empty()) {
    throw Error(ErrorCode::kMissingImportance,
                "importance '" + std::string(importance_name) + "' missing in: " + missing);
  }

  std::vector<LayerRhos> per_bundle(bundles.size());
  const auto work = [&](std::size_t i) {
    per_bundle[i] = evaluate_bundle(bundles[i], method, *bundles[i].find_importance(importance_name),
                                    source_position, options);
  };
  const std::size_t threads = std::clamp<std::size_t>(options.threads, 1, bundles.size());
  if (threads == 1) {
    for (std::size_t i = 0; i < bundles.size(); ++i) work(i);
  } else {
    std::vector<std::exception_ptr> errors(threads);
    {
      std::vector<std::jthread> workers;
      for (std::size_t t = 0; t < threads; ++t) {
        workers.emplace_back([&, t] {
          try {
            for (std::size_t i = t; i < bundles.size(); i += threads) work(i);
          } catch (...) {
            errors[t] = std::current_exception();
          }
        });
      }
    }
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  std::vector<CorrelationReport> reports(layers);
  for (std::size_t l = 0; l < layers; ++l) {
    CorrelationReport& r = reports[l];
    r.method = method;
    r.layer = l + 1;
    for (std::size_t i = 0; i < bundles.size(); ++i) {
      if (const auto& rho = per_bundle[i][l]) {
        r.per_sample.emplace_back(sample_id(bundles[i], i), *rho);
      } else {
        r.degenerate.push_back(sample_id(bundles[i], i));
      }
    }
    summarize(r);
  }
  return reports;
}

std::string reports_to_json(std::span<const CorrelationReport> reports) {
  nlohmann::ordered_json out = nlohmann::ordered_json::array();
  for (const auto& r : reports) {
    nlohmann::ordered_json samples = nlohmann::ordered_json::array();
    for (const auto& [id, rho] : r.per_sample) samples.push_back({{"sample_id", id}, {"rho", rho}});
    out.push_back({{"method", std::string(to_string(r.method))},
                   {"layer", r.layer},
                   {"mean", r.mean},
                   {"std_dev", r.std_dev},
                   {"count", r.count},
                   {"degenerate", r.degenerate},
                   {"per_sample", std::move(samples)}});
  }
  return out.dump(2) + "\n";
}

std::string reports_to_table(std::span<const CorrelationReport> reports) {
  std::vector<Method> methods;
  std::vector<std::size_t> layers;
  std::map<std::pair<Method, std::size_t>, const CorrelationReport*> cells;
  for (const auto& r : reports) {
    if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) methods.push_back(r.method);
    if (std::find(layers.begin(), layers.end(), r.layer) == layers.end()) layers.push_back(r.layer);
    cells[{r.method, r.layer}] = &r;
  }
  std::sort(layers.begin(), layers.end());

  const auto method_label = [](Method m) {
    switch (m) {
      case Method::kRaw: return std::string("Raw");
      case Method::kRollout: return std::string("Rollout");
      case Method::kFlow: return std::string("Flow");
    }
    return std::string("?");
  };

  std::vector<std::vector<std::string>> grid;
  std::vector<std::string> header{""};
  for (std::size_t l : layers) header.push_back("L" + std::to_string(l));
  grid.push_back(header);
  for (Method m : methods) {
    std::vector<std::string> row{method_label(m)};
    for (std::size_t l : layers) {
      auto it = cells.find({m, l});
      if (it == cells.end() || it->second->count == 0) {
        row.emplace_back("-");
      } else {
        row.push_back(format_fixed(it->second->mean, 2) + "±" + format_fixed(it->second->std_dev, 2));
      }
    }
    grid.push_back(std::move(row));
  }

  // Column widths in code points; "±" is two bytes but one column.
  const auto display_width = [](const std::string& s) {
    std::size_t w = 0;
    for (unsigned char c : s) w += (c & 0xC0) != 0x80;
    return w;
  };
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& row : grid) {
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], display_width(row[c]));
  }
  std::string out;
  for (const auto& row : grid) {
    std::string line;
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c > 0) line += "  ";
      const std::size_t pad = width[c] - display_width(row[c]);
      if (c == 0) {
        line += row[c] + std::string(pad, ' ');
      } else {
        line += std::string(pad, ' ') + row[c];
      }
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out += line + "\n";
  }
  return out;
}

}  // namespace attnflow
