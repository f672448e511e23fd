#include "attnflow/render.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>

#include "attnflow/error.hpp"

namespace attnflow {

namespace {

constexpr int kCellWidth = 44;
constexpr int kCellHeight = 22;
constexpr int kCharWidth = 7;
constexpr int kMargin = 8;

void check_spec(const HeatmapSpec& spec) {
  if (spec.values.rows() == 0 || spec.values.cols() == 0) {
    throw Error(ErrorCode::kEmptySpec, "heatmap has no cells");
  }
  if (static_cast<std::size_t>(spec.values.rows()) != spec.row_labels.size() ||
      static_cast<std::size_t>(spec.values.cols()) != spec.col_labels.size()) {
    throw Error(ErrorCode::kShapeMismatch,
                "heatmap values are " + std::to_string(spec.values.rows()) + "x" +
                    std::to_string(spec.values.cols()) + " but labels are " +
                    std::to_string(spec.row_labels.size()) + "x" +
                    std::to_string(spec.col_labels.size()));
  }
  if (!spec.values.allFinite()) {
    throw Error(ErrorCode::kInvalidArgument, "heatmap values must be finite");
  }
}

std::string shortest(double v) {
  std::array<char, 32> buf{};
  const auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), end);
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string xml_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

std::size_t display_width(const std::string& s) {
  std::size_t w = 0;
  for (unsigned char c : s) w += (c & 0xC0) != 0x80;
  return w;
}

std::string render_csv(const HeatmapSpec& spec, const Matrix& values) {
  std::string out = csv_field(spec.corner_label);
  for (const auto& label : spec.col_labels) out += "," + csv_field(label);
  out += "\r\n";
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    out += csv_field(spec.row_labels[static_cast<std::size_t>(r)]);
    for (Eigen::Index c = 0; c < values.cols(); ++c) out += "," + shortest(values(r, c));
    out += "\r\n";
  }
  return out;
}

std::string render_text(const HeatmapSpec& spec, const Matrix& values) {
  static constexpr std::array<const char*, 5> kShades{" ", "░", "▒", "▓", "█"};
  std::size_t label_width = display_width(spec.corner_label);
  for (const auto& l : spec.row_labels) label_width = std::max(label_width, display_width(l));
  std::vector<std::size_t> col_width;
  for (const auto& l : spec.col_labels) col_width.push_back(std::max<std::size_t>(7, display_width(l)));

  const auto pad_right = [](const std::string& s, std::size_t w) {
    return s + std::string(w - std::min(w, display_width(s)), ' ');
  };
  const auto pad_left = [](const std::string& s, std::size_t w) {
    return std::string(w - std::min(w, display_width(s)), ' ') + s;
  };

  std::string out = pad_right(spec.corner_label, label_width);
  for (std::size_t c = 0; c < spec.col_labels.size(); ++c) out += "  " + pad_left(spec.col_labels[c], col_width[c]);
  out += "\n";
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    out += pad_right(spec.row_labels[static_cast<std::size_t>(r)], label_width);
    for (Eigen::Index c = 0; c < values.cols(); ++c) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.3f", values(r, c));
      const double t = std::clamp(values(r, c), 0.0, 1.0);
      const auto shade = static_cast<std::size_t>(std::lround(t * 4.0));
      out += "  " + pad_left(std::string(buf) + kShades[shade], col_width[static_cast<std::size_t>(c)]);
    }
    out += "\n";
  }
  return out;
}

std::string render_svg(const HeatmapSpec& spec, const Matrix& values) {
  std::size_t longest_row = 0;
  for (const auto& l : spec.row_labels) longest_row = std::max(longest_row, display_width(l));
  std::size_t longest_col = 0;
  for (const auto& l : spec.col_labels) longest_col = std::max(longest_col, display_width(l));

  const int left = kMargin + static_cast<int>(longest_row) * kCharWidth + kMargin;
  const int top = kMargin + static_cast<int>(longest_col) * kCharWidth + kMargin;
  const int width = left + static_cast<int>(values.cols()) * kCellWidth + kMargin;
  const int height = top + static_cast<int>(values.rows()) * kCellHeight + kMargin;

  std::string out;
  out += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" +
         std::to_string(width) + "\" height=\"" + std::to_string(height) + "\" viewBox=\"0 0 " +
         std::to_string(width) + " " + std::to_string(height) + "\">\n";
  out += "<rect x=\"0\" y=\"0\" width=\"" + std::to_string(width) + "\" height=\"" +
         std::to_string(height) + "\" fill=\"#ffffff\"/>\n";

  for (std::size_t c = 0; c < spec.col_labels.size(); ++c) {
    const int x = left + static_cast<int>(c) * kCellWidth + kCellWidth / 2;
    const int y = top - kMargin / 2;
    out += "<text x=\"" + std::to_string(x) + "\" y=\"" + std::to_string(y) +
           "\" font-family=\"monospace\" font-size=\"12\" transform=\"rotate(-60 " +
           std::to_string(x) + " " + std::to_string(y) + ")\">" + xml_escape(spec.col_labels[c]) +
           "</text>\n";
  }
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    const int y = top + static_cast<int>(r) * kCellHeight;
    out += "<text x=\"" + std::to_string(left - kMargin) + "\" y=\"" +
           std::to_string(y + kCellHeight / 2 + 4) +
           "\" font-family=\"monospace\" font-size=\"12\" text-anchor=\"end\">" +
           xml_escape(spec.row_labels[static_cast<std::size_t>(r)]) + "</text>\n";
    for (Eigen::Index c = 0; c < values.cols(); ++c) {
      const double t = std::clamp(values(r, c), 0.0, 1.0);
      out += "<rect x=\"" + std::to_string(left + static_cast<int>(c) * kCellWidth) + "\" y=\"" +
             std::to_string(y) + "\" width=\"" + std::to_string(kCellWidth) + "\" height=\"" +
             std::to_string(kCellHeight) + "\" fill=\"" + fill_color(t, spec.color_scale) +
             "\"/>\n";
    }
  }
  out += "</svg>\n";
  return out;
}

}  // namespace

Matrix normalized_values(const HeatmapSpec& spec) {
  Matrix out = spec.values;
  if (spec.normalization == Normalization::kPerRow) {
    for (Eigen::Index r = 0; r < out.rows(); ++r) {
      const double peak = out.row(r).maxCoeff();
      if (peak > 0.0) out.row(r) /= peak;
    }
  }
  return out;
}

double cell_intensity(const HeatmapSpec& spec, std::size_t row, std::size_t col) {
  check_spec(spec);
  const Matrix values = normalized_values(spec);
  return std::clamp(values(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(col)), 0.0, 1.0);
}

std::string fill_color(double intensity, ColorScale scale) {
  const double t = std::clamp(intensity, 0.0, 1.0);
  // Endpoints: white at 0; black (grayscale) or deep blue (single hue) at 1.
  const std::array<double, 3> dark = scale == ColorScale::kGrayscale
                                         ? std::array<double, 3>{0.0, 0.0, 0.0}
                                         : std::array<double, 3>{8.0, 48.0, 107.0};
  char buf[8];
  int rgb[3];
  for (int i = 0; i < 3; ++i) {
    rgb[i] = static_cast<int>(std::lround(255.0 + t * (dark[static_cast<std::size_t>(i)] - 255.0)));
  }
  std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", rgb[0], rgb[1], rgb[2]);
  return buf;
}

std::string render_heatmap(const HeatmapSpec& spec, RenderFormat format) {
  check_spec(spec);
  const Matrix values = normalized_values(spec);
  switch (format) {
    case RenderFormat::kCsv: return render_csv(spec, values);
    case RenderFormat::kText: return render_text(spec, values);
    case RenderFormat::kSvg: return render_svg(spec, values);
  }
  return {};
}

}  // namespace attnflow
