#include "ov2vss/visualize.hpp"

#include <cmath>
#include <string>

namespace ov::inline OV2VSS_ABI {

std::array<std::uint8_t, 3> palette_color(int index, int classes) {
  if (classes < 1 || index < 0 || index >= classes) {
    throw ValidationError("palette index " + std::to_string(index) + " outside " + std::to_string(classes) + " classes");
  }
  const double h6 = 6.0 * double(index) / double(classes);
  const int sector = int(std::floor(h6)) % 6;
  const double f = h6 - std::floor(h6);
  const double q = 1.0 - f;
  double r = 0, g = 0, b = 0;
  switch (sector) {
    case 0: r = 1; g = f; b = 0; break;
    case 1: r = q; g = 1; b = 0; break;
    case 2: r = 0; g = 1; b = f; break;
    case 3: r = 0; g = q; b = 1; break;
    case 4: r = f; g = 0; b = 1; break;
    default: r = 1; g = 0; b = q; break;
  }
  auto byte = [](double v) { return std::uint8_t(std::lround(v * 255.0)); };
  return {byte(r), byte(g), byte(b)};
}

std::vector<std::uint8_t> render_overlay(const LabelMap& mask, int classes, int ignore_index) {
  std::vector<std::uint8_t> out(mask.labels.size() * 4, 0);
  for (std::size_t i = 0; i < mask.labels.size(); ++i) {
    const int l = mask.labels[i];
    if (l == ignore_index) continue;
    const auto c = palette_color(l, classes);
    out[i * 4 + 0] = c[0];
    out[i * 4 + 1] = c[1];
    out[i * 4 + 2] = c[2];
    out[i * 4 + 3] = 255;
  }
  return out;
}

}  // namespace ov::inline OV2VSS_ABI
