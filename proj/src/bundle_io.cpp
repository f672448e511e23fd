#include "attnflow/bundle_io.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>
#include <system_error>

#include "attnflow/error.hpp"
#include "json.hpp"

namespace attnflow {

namespace {

using ordered_json = nlohmann::ordered_json;

static_assert(std::numeric_limits<float>::is_iec559);
static_assert(std::numeric_limits<double>::is_iec559);

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(9);
  os << v;
  return os.str();
}

// ---- binary encoding ------------------------------------------------------

class ByteWriter {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }

  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }

  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }

  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

  void str(std::string_view s) {
    if (s.size() > std::numeric_limits<std::uint32_t>::max()) {
      throw Error(ErrorCode::kIoError, "string too long for bundle encoding");
    }
    u32(static_cast<std::uint32_t>(s.size()));
    out_.insert(out_.end(), s.begin(), s.end());
  }

  void raw(std::string_view s) { out_.insert(out_.end(), s.begin(), s.end()); }

  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  bool at_end() const { return pos_ == bytes_.size(); }

  void need(std::size_t count) const {
    if (remaining() < count) {
      throw Error(ErrorCode::kMalformedFile,
                  "unexpected end of file at byte " + std::to_string(bytes_.size()) +
                      " (needed " + std::to_string(count) + " bytes at offset " +
                      std::to_string(pos_) + ")");
    }
  }

  std::uint8_t u8() {
    need(1);
    return bytes_[pos_++];
  }

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{bytes_[pos_ + i]} << (8 * i);
    pos_ += 4;
    return v;
  }

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{bytes_[pos_ + i]} << (8 * i);
    pos_ += 8;
    return v;
  }

  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }

  std::string str() {
    const std::uint32_t len = u32();
    need(len);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), len);
    pos_ += len;
    return s;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::uint64_t attention_size(std::uint64_t layers, std::uint64_t heads, std::uint64_t n) {
  return layers * heads * n * n;
}

std::vector<float> read_floats(ByteReader& in, std::uint64_t count, const char* what) {
  if (count > in.remaining() / 4) {
    throw Error(ErrorCode::kShapeMismatch,
                std::string("declared dimensions require ") + std::to_string(count) + " " +
                    what + " values but only " + std::to_string(in.remaining()) +
                    " bytes remain at offset " + std::to_string(in.pos()));
  }
  std::vector<float> values(count);
  for (auto& v : values) v = in.f32();
  return values;
}

// ---- json encoding --------------------------------------------------------

[[noreturn]] void json_shape_error(const std::string& what) {
  throw Error(ErrorCode::kShapeMismatch, "json bundle: " + what);
}

const ordered_json& require(const ordered_json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) {
    throw Error(ErrorCode::kMalformedFile, std::string("json bundle: missing field '") + key + "'");
  }
  return *it;
}

std::uint32_t require_dim(const ordered_json& obj, const char* key) {
  const auto& v = require(obj, key);
  if (!v.is_number_unsigned() || v.get<std::uint64_t>() > std::numeric_limits<std::uint32_t>::max()) {
    throw Error(ErrorCode::kMalformedFile,
                std::string("json bundle: field '") + key + "' must be a non-negative integer");
  }
  return v.get<std::uint32_t>();
}

float json_float(const ordered_json& v, const char* what) {
  if (!v.is_number()) {
    throw Error(ErrorCode::kMalformedFile, std::string("json bundle: non-numeric ") + what + " value");
  }
  return static_cast<float>(v.get<double>());
}

void read_json_vector(const ordered_json& arr, std::size_t expected, const std::string& what,
                      std::vector<float>& out) {
  if (!arr.is_array()) json_shape_error(what + " is not an array");
  if (arr.size() != expected) {
    json_shape_error(what + " has length " + std::to_string(arr.size()) + ", expected " +
                     std::to_string(expected));
  }
  for (const auto& v : arr) out.push_back(json_float(v, what.c_str()));
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  std::string contents((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw Error(ErrorCode::kIoError, "read failed for " + path.string());
  return contents;
}

}  // namespace

// ---- AttentionBundle ------------------------------------------------------

std::span<const float> AttentionBundle::head_matrix(std::size_t layer, std::size_t head) const {
  if (layer < 1 || layer > num_layers || head >= num_heads) {
    throw Error(ErrorCode::kIndexOutOfRange,
                "attention slice layer " + std::to_string(layer) + " head " +
                    std::to_string(head) + " outside L=" + std::to_string(num_layers) +
                    " H=" + std::to_string(num_heads));
  }
  const std::size_t block = std::size_t{seq_len} * seq_len;
  const std::size_t offset = ((layer - 1) * num_heads + head) * block;
  return std::span<const float>(attention).subspan(offset, block);
}

const NamedVector* AttentionBundle::find_importance(std::string_view name) const {
  for (const auto& v : importance) {
    if (v.name == name) return &v;
  }
  return nullptr;
}

const std::string* AttentionBundle::find_metadata(std::string_view key) const {
  for (const auto& [k, v] : metadata) {
    if (k == key) return &v;
  }
  return nullptr;
}

void validate_bundle(const AttentionBundle& b) {
  if (b.num_layers == 0 || b.num_heads == 0 || b.seq_len == 0) {
    throw Error(ErrorCode::kShapeMismatch,
                "dimensions must be positive (L=" + std::to_string(b.num_layers) +
                    " H=" + std::to_string(b.num_heads) + " n=" + std::to_string(b.seq_len) + ")");
  }
  if (b.tokens.size() != b.seq_len) {
    throw Error(ErrorCode::kShapeMismatch,
                "token count " + std::to_string(b.tokens.size()) + " != seq_len " +
                    std::to_string(b.seq_len));
  }
  const std::uint64_t expected = attention_size(b.num_layers, b.num_heads, b.seq_len);
  if (b.attention.size() != expected) {
    throw Error(ErrorCode::kShapeMismatch,
                "attention holds " + std::to_string(b.attention.size()) + " values, expected " +
                    std::to_string(expected));
  }
  for (const auto& v : b.importance) {
    if (v.values.size() != b.seq_len) {
      throw Error(ErrorCode::kShapeMismatch,
                  "importance '" + v.name + "' has length " + std::to_string(v.values.size()) +
                      ", expected " + std::to_string(b.seq_len));
    }
    for (std::size_t i = 0; i < v.values.size(); ++i) {
      if (!std::isfinite(v.values[i])) {
        throw Error(ErrorCode::kShapeMismatch,
                    "importance '" + v.name + "' has a non-finite value at position " +
                        std::to_string(i));
      }
    }
  }

  const std::size_t n = b.seq_len;
  for (std::size_t layer = 1; layer <= b.num_layers; ++layer) {
    for (std::size_t head = 0; head < b.num_heads; ++head) {
      const auto m = b.head_matrix(layer, head);
      for (std::size_t row = 0; row < n; ++row) {
        double sum = 0.0;
        for (std::size_t col = 0; col < n; ++col) {
          const float v = m[row * n + col];
          if (!(v >= 0.0f && v <= 1.0f)) {
            throw Error(ErrorCode::kStochasticityViolation,
                        "attention entry outside [0, 1] at layer " + std::to_string(layer) +
                            " head " + std::to_string(head) + " row " + std::to_string(row) +
                            " col " + std::to_string(col) + " (value " + fmt_double(v) + ")");
          }
          sum += v;
        }
        if (std::abs(sum - 1.0) > kIngestRowSumTolerance) {
          throw Error(ErrorCode::kStochasticityViolation,
                      "attention row does not sum to 1 at layer " + std::to_string(layer) +
                          " head " + std::to_string(head) + " row " + std::to_string(row) +
                          " (sum " + fmt_double(sum) + ")");
        }
      }
    }
  }
}

// ---- binary ---------------------------------------------------------------

std::vector<std::uint8_t> encode_binary(const AttentionBundle& b) {
  ByteWriter out;
  out.raw(kBundleMagic);
  out.u8(kBundleVersion);
  out.u32(b.num_layers);
  out.u32(b.num_heads);
  out.u32(b.seq_len);
  out.u32(static_cast<std::uint32_t>(b.tokens.size()));
  for (const auto& t : b.tokens) out.str(t);
  for (float v : b.attention) out.f32(v);
  out.u32(static_cast<std::uint32_t>(b.importance.size()));
  for (const auto& iv : b.importance) {
    out.str(iv.name);
    for (float v : iv.values) out.f32(v);
  }
  if (!b.predictions.empty() || !b.metadata.empty()) {
    out.u32(static_cast<std::uint32_t>(b.predictions.size()));
    for (const auto& [label, p] : b.predictions) {
      out.str(label);
      out.f64(p);
    }
    out.u32(static_cast<std::uint32_t>(b.metadata.size()));
    for (const auto& [k, v] : b.metadata) {
      out.str(k);
      out.str(v);
    }
  }
  return out.take();
}

AttentionBundle decode_binary(std::span<const std::uint8_t> bytes) {
  ByteReader in(bytes);
  in.need(kBundleMagic.size());
  for (char c : kBundleMagic) {
    if (in.u8() != static_cast<std::uint8_t>(c)) {
      throw Error(ErrorCode::kMalformedFile, "bad magic: not an ATNB bundle");
    }
  }
  const std::uint8_t version = in.u8();
  if (version != kBundleVersion) {
    throw Error(ErrorCode::kMalformedFile,
                "unsupported bundle version " + std::to_string(version));
  }

  AttentionBundle b;
  b.num_layers = in.u32();
  b.num_heads = in.u32();
  b.seq_len = in.u32();
  if (b.num_layers == 0 || b.num_heads == 0 || b.seq_len == 0) {
    throw Error(ErrorCode::kShapeMismatch,
                "dimensions must be positive (L=" + std::to_string(b.num_layers) +
                    " H=" + std::to_string(b.num_heads) + " n=" + std::to_string(b.seq_len) + ")");
  }

  const std::uint32_t token_count = in.u32();
  if (token_count != b.seq_len) {
    throw Error(ErrorCode::kShapeMismatch,
                "token count " + std::to_string(token_count) + " != seq_len " +
                    std::to_string(b.seq_len));
  }
  b.tokens.reserve(token_count);
  for (std::uint32_t i = 0; i < token_count; ++i) b.tokens.push_back(in.str());

  b.attention = read_floats(in, attention_size(b.num_layers, b.num_heads, b.seq_len), "attention");

  const std::uint32_t importance_count = in.u32();
  for (std::uint32_t i = 0; i < importance_count; ++i) {
    NamedVector iv;
    iv.name = in.str();
    iv.values = read_floats(in, b.seq_len, "importance");
    b.importance.push_back(std::move(iv));
  }

  if (!in.at_end()) {
    const std::uint32_t prediction_count = in.u32();
    for (std::uint32_t i = 0; i < prediction_count; ++i) {
      std::string label = in.str();
      const double p = in.f64();
      b.predictions.emplace_back(std::move(label), p);
    }
    const std::uint32_t metadata_count = in.u32();
    for (std::uint32_t i = 0; i < metadata_count; ++i) {
      std::string key = in.str();
      b.metadata.emplace_back(std::move(key), in.str());
    }
    if (!in.at_end()) {
      throw Error(ErrorCode::kMalformedFile,
                  "trailing bytes after bundle at offset " + std::to_string(in.pos()));
    }
  }

  validate_bundle(b);
  return b;
}

// ---- json -----------------------------------------------------------------

std::string encode_json(const AttentionBundle& b) {
  ordered_json j;
  j["format"] = "ATNB";
  j["version"] = kBundleVersion;
  j["num_layers"] = b.num_layers;
  j["num_heads"] = b.num_heads;
  j["seq_len"] = b.seq_len;
  j["tokens"] = b.tokens;

  const std::size_t n = b.seq_len;
  ordered_json layers = ordered_json::array();
  for (std::size_t l = 1; l <= b.num_layers; ++l) {
    ordered_json heads = ordered_json::array();
    for (std::size_t h = 0; h < b.num_heads; ++h) {
      const auto m = b.head_matrix(l, h);
      ordered_json rows = ordered_json::array();
      for (std::size_t r = 0; r < n; ++r) {
        // Widening float -> double is exact and nlohmann prints doubles with
        // round-trip precision, so the float is recovered bit for bit.
        ordered_json row = ordered_json::array();
        for (std::size_t c = 0; c < n; ++c) row.push_back(static_cast<double>(m[r * n + c]));
        rows.push_back(std::move(row));
      }
      heads.push_back(std::move(rows));
    }
    layers.push_back(std::move(heads));
  }
  j["attention"] = std::move(layers);

  ordered_json importance = ordered_json::array();
  for (const auto& iv : b.importance) {
    ordered_json values = ordered_json::array();
    for (float v : iv.values) values.push_back(static_cast<double>(v));
    importance.push_back({{"name", iv.name}, {"values", std::move(values)}});
  }
  j["importance"] = std::move(importance);

  ordered_json predictions = ordered_json::array();
  for (const auto& [label, p] : b.predictions) {
    predictions.push_back({{"label", label}, {"probability", p}});
  }
  j["predictions"] = std::move(predictions);

  ordered_json metadata = ordered_json::object();
  for (const auto& [k, v] : b.metadata) metadata[k] = v;
  j["metadata"] = std::move(metadata);

  return j.dump(1) + "\n";
}

AttentionBundle decode_json(std::string_view text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kMalformedFile, std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw Error(ErrorCode::kMalformedFile, "json bundle: top level must be an object");

  try {
    AttentionBundle b;
    b.num_layers = require_dim(j, "num_layers");
    b.num_heads = require_dim(j, "num_heads");
    b.seq_len = require_dim(j, "seq_len");
    if (b.num_layers == 0 || b.num_heads == 0 || b.seq_len == 0) {
      throw Error(ErrorCode::kShapeMismatch, "json bundle: dimensions must be positive");
    }
    const std::size_t n = b.seq_len;

    const auto& tokens = require(j, "tokens");
    if (!tokens.is_array()) throw Error(ErrorCode::kMalformedFile, "json bundle: tokens must be an array");
    for (const auto& t : tokens) b.tokens.push_back(t.get<std::string>());
    if (b.tokens.size() != n) {
      json_shape_error("token count " + std::to_string(b.tokens.size()) + " != seq_len " +
                       std::to_string(n));
    }

    const auto& att = require(j, "attention");
    if (!att.is_array() || att.size() != b.num_layers) json_shape_error("attention must have L layers");
    b.attention.reserve(attention_size(b.num_layers, b.num_heads, n));
    for (std::size_t l = 0; l < b.num_layers; ++l) {
      const auto& heads = att[l];
      if (!heads.is_array() || heads.size() != b.num_heads) {
        json_shape_error("layer " + std::to_string(l + 1) + " must have H heads");
      }
      for (std::size_t h = 0; h < b.num_heads; ++h) {
        const auto& rows = heads[h];
        if (!rows.is_array() || rows.size() != n) {
          json_shape_error("layer " + std::to_string(l + 1) + " head " + std::to_string(h) +
                           " must have n rows");
        }
        for (std::size_t r = 0; r < n; ++r) {
          read_json_vector(rows[r], n,
                           "attention row (layer " + std::to_string(l + 1) + ", head " +
                               std::to_string(h) + ", row " + std::to_string(r) + ")",
                           b.attention);
        }
      }
    }

    if (auto it = j.find("importance"); it != j.end()) {
      if (!it->is_array()) throw Error(ErrorCode::kMalformedFile, "json bundle: importance must be an array");
      for (const auto& entry : *it) {
        NamedVector iv;
        iv.name = require(entry, "name").get<std::string>();
        read_json_vector(require(entry, "values"), n, "importance '" + iv.name + "'", iv.values);
        b.importance.push_back(std::move(iv));
      }
    }
    if (auto it = j.find("predictions"); it != j.end()) {
      for (const auto& entry : *it) {
        b.predictions.emplace_back(require(entry, "label").get<std::string>(),
                                   require(entry, "probability").get<double>());
      }
    }
    if (auto it = j.find("metadata"); it != j.end()) {
      if (!it->is_object()) throw Error(ErrorCode::kMalformedFile, "json bundle: metadata must be an object");
      for (const auto& [k, v] : it->items()) b.metadata.emplace_back(k, v.get<std::string>());
    }

    validate_bundle(b);
    return b;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kMalformedFile, std::string("json bundle: ") + e.what());
  }
}

// ---- files ----------------------------------------------------------------

AttentionBundle read_bundle(const std::filesystem::path& path) {
  const std::string contents = read_text_file(path);
  if (contents.size() >= kBundleMagic.size() &&
      std::string_view(contents).substr(0, kBundleMagic.size()) == kBundleMagic) {
    return decode_binary(std::span(reinterpret_cast<const std::uint8_t*>(contents.data()),
                                   contents.size()));
  }
  const auto first = contents.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && contents[first] == '{') return decode_json(contents);
  throw Error(ErrorCode::kMalformedFile,
              path.string() + ": neither an ATNB binary bundle nor a JSON bundle");
}

void write_bundle(const AttentionBundle& bundle, const std::filesystem::path& path,
                  BundleFormat format) {
  validate_bundle(bundle);
  if (format == BundleFormat::kBinary) {
    const auto bytes = encode_binary(bundle);
    write_file_atomic(path, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
  } else {
    write_file_atomic(path, encode_json(bundle));
  }
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIoError, "cannot open " + tmp.string() + " for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) {
      std::error_code ignored;
      std::filesystem::remove(tmp, ignored);
      throw Error(ErrorCode::kIoError, "write failed for " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::error_code ignored;
    std::filesystem::remove(tmp, ignored);
    throw Error(ErrorCode::kIoError, "cannot rename " + tmp.string() + " to " + path.string() +
                                         ": " + ec.message());
  }
}

}  // namespace attnflow
