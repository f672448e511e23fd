#include "attnflow/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <optional>
#include <vector>

#include "CLI11.hpp"
#include "attnflow/attention_core.hpp"
#include "attnflow/bundle_io.hpp"
#include "attnflow/error.hpp"
#include "attnflow/eval.hpp"
#include "attnflow/flow.hpp"
#include "attnflow/render.hpp"
#include "attnflow/rollout.hpp"
#include "json.hpp"

namespace attnflow::cli {

namespace {

namespace fs = std::filesystem;

// Layers are 1-based and positions/heads 0-based on the command line.
struct CliConfig {
  std::string input;
  std::string method = "rollout";
  std::optional<std::size_t> layer;
  std::size_t position = 0;
  std::optional<std::size_t> head;
  double residual_alpha = kDefaultResidualShare;
  std::string importance;
  std::string out;
  std::string format;
  std::string normalize = "auto";
  std::string color = "grayscale";
  bool include_source = false;
  std::size_t threads = 1;
};

// Failures detected by the CLI itself (bad selectors, empty corpus).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void emit(const CliConfig& config, const std::string& contents, std::ostream& out) {
  if (config.out.empty() || config.out == "-") {
    out << contents;
  } else {
    write_file_atomic(config.out, contents);
  }
}

std::string join(const std::vector<std::string>& items, const char* sep) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i > 0) out += sep;
    out += items[i];
  }
  return out;
}

// ---- validate -------------------------------------------------------------

int cmd_validate(const CliConfig& config, std::ostream& out) {
  const AttentionBundle bundle = read_bundle(config.input);
  std::vector<std::string> names;
  for (const auto& iv : bundle.importance) names.push_back(iv.name);
  out << config.input << ": L=" << bundle.num_layers << " H=" << bundle.num_heads
      << " n=" << bundle.seq_len << " importance=[" << join(names, ", ") << "]\n";
  return 0;
}

// ---- attribute ------------------------------------------------------------

void check_selectors(const CliConfig& config, const AttentionBundle& bundle) {
  const std::string dims = " (bundle has L=" + std::to_string(bundle.num_layers) +
                           " H=" + std::to_string(bundle.num_heads) +
                           " n=" + std::to_string(bundle.seq_len) + ")";
  if (config.layer && (*config.layer < 1 || *config.layer > bundle.num_layers)) {
    throw UsageError("--layer " + std::to_string(*config.layer) + " outside [1, " +
                     std::to_string(bundle.num_layers) + "]" + dims);
  }
  if (config.position >= bundle.seq_len) {
    throw UsageError("--position " + std::to_string(config.position) + " outside [0, " +
                     std::to_string(bundle.seq_len - 1) + "]" + dims);
  }
  if (config.head) {
    if (!config.layer) throw UsageError("--head requires --layer");
    if (*config.head >= bundle.num_heads) {
      throw UsageError("--head " + std::to_string(*config.head) + " outside [0, " +
                       std::to_string(bundle.num_heads - 1) + "]" + dims);
    }
  }
  if (!(config.residual_alpha >= 0.0 && config.residual_alpha <= 1.0)) {
    throw UsageError("--residual-alpha must lie in [0, 1]");
  }
}

std::vector<AttributionMap> compute_maps(const CliConfig& config, const AttentionBundle& bundle,
                                         Method method) {
  HeadMode mode = HeadAveraged{};
  if (config.head) mode = SingleHead{*config.layer, *config.head};

  std::vector<std::size_t> layers;
  if (config.layer && !config.head) {
    layers.push_back(*config.layer);
  } else {
    const std::size_t top = config.head ? *config.layer : bundle.num_layers;
    for (std::size_t l = 1; l <= top; ++l) layers.push_back(l);
  }

  std::vector<AttributionMap> maps;
  switch (method) {
    case Method::kRaw:
      for (std::size_t l : layers) {
        if (config.head && l == *config.layer) {
          const Matrix m = head_attention(bundle, l, *config.head);
          const auto row = m.row(static_cast<Eigen::Index>(config.position));
          maps.push_back({{l, config.position}, {row.begin(), row.end()}, Method::kRaw});
        } else {
          maps.push_back(token_attribution_raw(bundle, l, config.position));
        }
      }
      break;
    case Method::kRollout: {
      const RolloutStack stack = rollout(adjust(bundle, mode, config.residual_alpha));
      for (std::size_t l : layers) maps.push_back(token_attribution_rollout(stack, l, config.position));
      break;
    }
    case Method::kFlow: {
      const FlowNetwork network = build_network(adjust(bundle, mode, config.residual_alpha));
      for (std::size_t l : layers) {
        maps.push_back(token_attribution_flow(network, {l, config.position}, config.threads));
      }
      break;
    }
  }
  return maps;
}

std::string maps_to_json(const CliConfig& config, const AttentionBundle& bundle, Method method,
                         const std::vector<AttributionMap>& maps) {
  nlohmann::ordered_json j;
  j["method"] = std::string(to_string(method));
  j["source_position"] = config.position;
  j["residual_alpha"] = config.residual_alpha;
  if (config.head) {
    j["mode"] = {{"single_head", {{"layer", *config.layer}, {"head", *config.head}}}};
  } else {
    j["mode"] = "head_averaged";
  }
  j["tokens"] = bundle.tokens;
  nlohmann::ordered_json list = nlohmann::ordered_json::array();
  for (const auto& m : maps) list.push_back({{"layer", m.source.layer}, {"values", m.values}});
  j["maps"] = std::move(list);
  return j.dump(2) + "\n";
}

int cmd_attribute(const CliConfig& config, std::ostream& out) {
  const auto method = parse_method(config.method);
  if (!method) throw UsageError("--method must be one of raw, rollout, flow");
  const std::string format = config.format.empty() ? "csv" : config.format;

  const AttentionBundle bundle = read_bundle(config.input);
  check_selectors(config, bundle);
  const std::vector<AttributionMap> maps = compute_maps(config, bundle, *method);

  if (format == "json") {
    emit(config, maps_to_json(config, bundle, *method, maps), out);
    return 0;
  }

  HeatmapSpec spec;
  spec.col_labels = bundle.tokens;
  spec.values.resize(static_cast<Eigen::Index>(maps.size()), static_cast<Eigen::Index>(bundle.seq_len));
  for (std::size_t r = 0; r < maps.size(); ++r) {
    spec.row_labels.push_back("L" + std::to_string(maps[r].source.layer));
    for (std::size_t c = 0; c < bundle.seq_len; ++c) {
      spec.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = maps[r].values[c];
    }
  }
  spec.color_scale = config.color == "hue" ? ColorScale::kSingleHue : ColorScale::kGrayscale;

  RenderFormat render_format = RenderFormat::kCsv;
  if (format == "svg") render_format = RenderFormat::kSvg;
  if (format == "text") render_format = RenderFormat::kText;

  if (config.normalize == "per-row") {
    spec.normalization = Normalization::kPerRow;
  } else if (config.normalize == "auto" && *method == Method::kFlow &&
             render_format != RenderFormat::kCsv) {
    spec.normalization = Normalization::kPerRow;
  }
  emit(config, render_heatmap(spec, render_format), out);
  return 0;
}

// ---- eval -----------------------------------------------------------------

std::vector<fs::path> list_bundles(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw UsageError(dir.string() + " is not a directory");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const auto ext = entry.path().extension();
    if (ext == ".atnb" || ext == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

int cmd_eval(const CliConfig& config, std::ostream& out) {
  if (config.format != "" && config.format != "text" && config.format != "json") {
    throw UsageError("eval --format must be text or json");
  }
  const auto files = list_bundles(config.input);
  if (files.empty()) throw UsageError("no bundles found in " + config.input);

  std::vector<AttentionBundle> bundles;
  bundles.reserve(files.size());
  for (const auto& f : files) {
    try {
      bundles.push_back(read_bundle(f));
    } catch (const Error& e) {
      throw Error(e.code(), f.string() + ": " + e.what());
    }
    if (bundles.back().find_metadata("sample_id") == nullptr) {
      bundles.back().metadata.emplace_back("sample_id", f.filename().string());
    }
  }

  CorpusOptions options;
  options.residual_share = config.residual_alpha;
  options.exclude_source = !config.include_source;
  options.threads = config.threads;

  std::vector<CorrelationReport> reports;
  std::size_t degenerate = 0;
  for (Method m : {Method::kRaw, Method::kRollout, Method::kFlow}) {
    auto part = correlate_corpus(bundles, m, config.importance, config.position, options);
    for (auto& r : part) {
      degenerate += r.degenerate.size();
      reports.push_back(std::move(r));
    }
  }

  const std::string table = reports_to_table(reports);
  emit(config, config.format == "json" ? reports_to_json(reports) : table, out);
  if (!config.out.empty() && config.out != "-") {
    out << "evaluated " << bundles.size() << " bundles against '" << config.importance << "'";
    if (degenerate > 0) out << " (" << degenerate << " degenerate correlations excluded)";
    out << "\n" << table;
  }
  return 0;
}

std::string single_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

}  // namespace

int run(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  CliConfig config;
  CLI::App app{"Attention rollout and attention flow attributions for transformer attention"};
  app.name("attnflow");
  app.require_subcommand(1, 1);

  const std::vector<std::string> methods{"raw", "rollout", "flow"};

  auto* validate = app.add_subcommand("validate", "Check a bundle and print its dimensions");
  validate->add_option("bundle", config.input, "Bundle file (binary or JSON)")->required();

  auto* attribute = app.add_subcommand("attribute", "Compute token attributions for one source position");
  attribute->add_option("bundle", config.input, "Bundle file (binary or JSON)")->required();
  attribute->add_option("--method", config.method, "raw, rollout or flow")
      ->check(CLI::IsMember(methods))
      ->capture_default_str();
  attribute->add_option("--layer", config.layer, "1-based layer; all layers when omitted");
  attribute->add_option("--position", config.position, "0-based source position (CLS is 0)")
      ->capture_default_str();
  attribute->add_option("--head", config.head, "0-based head for single-head analysis at --layer");
  attribute->add_option("--residual-alpha", config.residual_alpha, "Residual share in [0, 1]")
      ->capture_default_str();
  attribute->add_option("--format", config.format, "csv, json, svg or text")
      ->check(CLI::IsMember({"csv", "json", "svg", "text"}));
  attribute->add_option("--normalize", config.normalize,
                        "auto, none or per-row (auto: per-row for flow in svg/text)")
      ->check(CLI::IsMember({"auto", "none", "per-row"}))
      ->capture_default_str();
  attribute->add_option("--color", config.color, "grayscale or hue")
      ->check(CLI::IsMember({"grayscale", "hue"}))
      ->capture_default_str();
  attribute->add_option("--out", config.out, "Output file (stdout when omitted)");
  attribute->add_option("--threads", config.threads, "Worker threads for flow sinks")
      ->check(CLI::PositiveNumber);

  auto* eval = app.add_subcommand("eval", "Spearman correlation of raw, rollout and flow with importance scores");
  eval->add_option("corpus", config.input, "Directory of .atnb / .json bundles")->required();
  eval->add_option("--importance", config.importance, "Importance vector name")->required();
  eval->add_option("--position", config.position, "0-based source position (CLS is 0)")
      ->capture_default_str();
  eval->add_option("--residual-alpha", config.residual_alpha, "Residual share in [0, 1]")
      ->capture_default_str();
  eval->add_flag("--include-source", config.include_source,
                 "Keep the source position in the correlated vectors");
  eval->add_option("--format", config.format, "text or json")->check(CLI::IsMember({"text", "json"}));
  eval->add_option("--out", config.out, "Output file (stdout when omitted)");
  eval->add_option("--threads", config.threads, "Worker threads over bundles")
      ->check(CLI::PositiveNumber);

  std::vector<std::string> argv_storage{"attnflow"};
  argv_storage.insert(argv_storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_storage) argv.push_back(a.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << single_line(e.what()) << "\n";
    return 1;
  }

  try {
    if (*validate) return cmd_validate(config, out);
    if (*attribute) return cmd_attribute(config, out);
    if (*eval) return cmd_eval(config, out);
  } catch (const Error& e) {
    const bool names_file = std::string_view(e.what()).find(config.input) != std::string_view::npos;
    err << "error: " << (names_file ? "" : config.input + ": ") << single_line(e.what()) << " ["
        << to_string(e.code()) << "]\n";
    return 1;
  } catch (const UsageError& e) {
    err << "error: " << single_line(e.what()) << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << single_line(e.what()) << "\n";
    return 1;
  }
  return 1;
}

}  // namespace attnflow::cli
