#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "attnflow/matrix.hpp"

namespace attnflow {

enum class Normalization { kNone, kPerRow };
enum class ColorScale { kGrayscale, kSingleHue };
enum class RenderFormat { kSvg, kCsv, kText };

// Layers on the y-axis, tokens on the x-axis.
struct HeatmapSpec {
  std::vector<std::string> row_labels;
  std::vector<std::string> col_labels;
  Matrix values;
  Normalization normalization = Normalization::kNone;
  ColorScale color_scale = ColorScale::kGrayscale;
  std::string corner_label = "layer";
};

// Values after the heatmap's normalization. kPerRow divides each row by its
// maximum; all-zero rows stay zero.
Matrix normalized_values(const HeatmapSpec& spec);

// Color intensity in [0, 1] of one cell: the normalized value clamped to the
// unit interval.
double cell_intensity(const HeatmapSpec& spec, std::size_t row, std::size_t col);

// "#rrggbb" fill for an intensity in [0, 1]; 1 is the darkest shade.
std::string fill_color(double intensity, ColorScale scale);

// Deterministic rendering. CSV and text carry the normalized values (the
// verbatim values under kNone); CSV uses the shortest round-trip decimal form.
std::string render_heatmap(const HeatmapSpec& spec, RenderFormat format);

}  // namespace attnflow
