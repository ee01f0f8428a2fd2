#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "ov2vss/image.hpp"

namespace ov::inline OV2VSS_ABI {

// HSV(hue = index / classes, 1, 1) as 8-bit RGB.
std::array<std::uint8_t, 3> palette_color(int index, int classes);

// RGBA overlay, h*w*4 bytes. Ignore pixels are fully transparent; labels
// outside [0, classes) raise ValidationError.
std::vector<std::uint8_t> render_overlay(const LabelMap& mask, int classes, int ignore_index);

}  // namespace ov::inline OV2VSS_ABI
