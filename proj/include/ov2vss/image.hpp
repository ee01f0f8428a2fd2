#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "ov2vss/common.hpp"

namespace ov::inline OV2VSS_ABI {

// Interleaved RGB, values in [0, 1].
struct RgbImage {
  int h = 0;
  int w = 0;
  std::vector<float> data;

  RgbImage() = default;
  RgbImage(int height, int width) : h(height), w(width), data(std::size_t(height) * width * 3, 0.f) {}
  float* px(int y, int x) { return data.data() + (std::size_t(y) * w + x) * 3; }
  const float* px(int y, int x) const { return data.data() + (std::size_t(y) * w + x) * 3; }
};

// Per-pixel class indices; the ignore index is a regular value here.
struct LabelMap {
  int h = 0;
  int w = 0;
  std::vector<int> labels;

  LabelMap() = default;
  LabelMap(int height, int width, int fill = 0)
      : h(height), w(width), labels(std::size_t(height) * width, fill) {}
  int& at(int y, int x) { return labels[std::size_t(y) * w + x]; }
  int at(int y, int x) const { return labels[std::size_t(y) * w + x]; }
  bool operator==(const LabelMap&) const = default;
};

RgbImage read_png_rgb(const std::filesystem::path& path);
void write_png_rgb(const std::filesystem::path& path, const RgbImage& img);
LabelMap read_png_labels(const std::filesystem::path& path);
// Values must lie in [0, 255].
void write_png_labels(const std::filesystem::path& path, const LabelMap& labels);
// rgba: h*w*4 bytes.
void write_png_rgba(const std::filesystem::path& path, int h, int w, const std::vector<std::uint8_t>& rgba);
std::vector<std::uint8_t> read_png_rgba(const std::filesystem::path& path, int& h, int& w);

RgbImage resize_bilinear(const RgbImage& img, int out_h, int out_w);
LabelMap resize_nearest(const LabelMap& labels, int out_h, int out_w);
RgbImage crop(const RgbImage& img, int y0, int x0, int h, int w);
LabelMap crop(const LabelMap& labels, int y0, int x0, int h, int w);

}  // namespace ov::inline OV2VSS_ABI
