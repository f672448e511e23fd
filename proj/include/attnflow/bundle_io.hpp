#pragma once

// Attention bundle: the interchange artifact carrying per-layer, per-head
// attention tensors and per-token importance scores.
//
// Binary layout (all integers and floats little-endian):
//
//   "ATNB"                        4-byte magic
//   u8   version                  currently 1
//   u32  L, H, n                  layers, heads, sequence length
//   u32  token count              then per token: u32 byte length + UTF-8
//   f32  attention[L][H][n][n]    row = query position, col = key position
//   u32  importance count         then per vector: name (u32 len + UTF-8), n x f32
//
// Optionally followed by a trailer, present only when the bundle carries
// predictions or metadata:
//
//   u32  prediction count         then per entry: label string + f64 probability
//   u32  metadata count           then per entry: key string + value string
//
// A file that ends right after the importance section is a complete bundle.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace attnflow {

inline constexpr std::string_view kBundleMagic = "ATNB";
inline constexpr std::uint8_t kBundleVersion = 1;

// Attention rows read from disk may deviate from 1 by this much.
inline constexpr double kIngestRowSumTolerance = 1e-4;

struct NamedVector {
  std::string name;
  std::vector<float> values;

  bool operator==(const NamedVector&) const = default;
};

struct AttentionBundle {
  std::vector<std::string> tokens;
  std::uint32_t num_layers = 0;
  std::uint32_t num_heads = 0;
  std::uint32_t seq_len = 0;
  // Flattened [layer][head][row][col].
  std::vector<float> attention;
  std::vector<NamedVector> importance;
  std::vector<std::pair<std::string, double>> predictions;
  std::vector<std::pair<std::string, std::string>> metadata;

  bool operator==(const AttentionBundle&) const = default;

  // Row-major n x n view of one head. `layer` is 1-based, `head` 0-based.
  std::span<const float> head_matrix(std::size_t layer, std::size_t head) const;

  const NamedVector* find_importance(std::string_view name) const;
  const std::string* find_metadata(std::string_view key) const;
};

enum class BundleFormat { kBinary, kJson };

// Checks every bundle invariant; throws Error (kShapeMismatch or
// kStochasticityViolation) describing the first violation found.
void validate_bundle(const AttentionBundle& bundle);

std::vector<std::uint8_t> encode_binary(const AttentionBundle& bundle);
AttentionBundle decode_binary(std::span<const std::uint8_t> bytes);

std::string encode_json(const AttentionBundle& bundle);
AttentionBundle decode_json(std::string_view text);

// Detects the format from the leading bytes (magic or JSON object) and
// returns a validated bundle.
AttentionBundle read_bundle(const std::filesystem::path& path);

// Validates before touching the filesystem. The file is written to a
// sibling temporary and renamed into place.
void write_bundle(const AttentionBundle& bundle,
                  const std::filesystem::path& path, BundleFormat format);

void write_file_atomic(const std::filesystem::path& path,
                       std::string_view contents);

}  // namespace attnflow
