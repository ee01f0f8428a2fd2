#include "ov2vss/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>

namespace ov::inline OV2VSS_ABI {

namespace {

std::vector<std::uint8_t> read_png(const std::filesystem::path& path, png_uint_32 format, int& h,
                                   int& w) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.string().c_str())) {
    throw IoError("cannot read PNG " + path.string() + ": " + image.message);
  }
  image.format = format;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&image);
    throw IoError("cannot decode PNG " + path.string() + ": " + image.message);
  }
  h = int(image.height);
  w = int(image.width);
  return buf;
}

void write_png(const std::filesystem::path& path, png_uint_32 format, int h, int w,
               const std::vector<std::uint8_t>& buf) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = png_uint_32(w);
  image.height = png_uint_32(h);
  image.format = format;
  if (!png_image_write_to_file(&image, path.string().c_str(), 0, buf.data(), 0, nullptr)) {
    throw IoError("cannot write PNG " + path.string() + ": " + image.message);
  }
}

std::uint8_t to_byte(float v) {
  return std::uint8_t(std::lround(std::clamp(v, 0.f, 1.f) * 255.f));
}

}  // namespace

RgbImage read_png_rgb(const std::filesystem::path& path) {
  int h = 0, w = 0;
  auto buf = read_png(path, PNG_FORMAT_RGB, h, w);
  RgbImage img(h, w);
  for (std::size_t i = 0; i < buf.size(); ++i) img.data[i] = float(buf[i]) / 255.f;
  return img;
}

void write_png_rgb(const std::filesystem::path& path, const RgbImage& img) {
  std::vector<std::uint8_t> buf(img.data.size());
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = to_byte(img.data[i]);
  write_png(path, PNG_FORMAT_RGB, img.h, img.w, buf);
}

LabelMap read_png_labels(const std::filesystem::path& path) {
  int h = 0, w = 0;
  auto buf = read_png(path, PNG_FORMAT_GRAY, h, w);
  LabelMap m(h, w);
  for (std::size_t i = 0; i < buf.size(); ++i) m.labels[i] = buf[i];
  return m;
}

void write_png_labels(const std::filesystem::path& path, const LabelMap& labels) {
  std::vector<std::uint8_t> buf(labels.labels.size());
  for (std::size_t i = 0; i < buf.size(); ++i) {
    const int v = labels.labels[i];
    if (v < 0 || v > 255) throw ValidationError("label value outside 8-bit range");
    buf[i] = std::uint8_t(v);
  }
  write_png(path, PNG_FORMAT_GRAY, labels.h, labels.w, buf);
}

void write_png_rgba(const std::filesystem::path& path, int h, int w, const std::vector<std::uint8_t>& rgba) {
  if (rgba.size() != std::size_t(h) * w * 4) throw ShapeError("write_png_rgba: buffer size");
  write_png(path, PNG_FORMAT_RGBA, h, w, rgba);
}

std::vector<std::uint8_t> read_png_rgba(const std::filesystem::path& path, int& h, int& w) {
  return read_png(path, PNG_FORMAT_RGBA, h, w);
}

RgbImage resize_bilinear(const RgbImage& img, int out_h, int out_w) {
  if (out_h == img.h && out_w == img.w) return img;
  RgbImage out(out_h, out_w);
  const double ry = double(img.h) / out_h, rx = double(img.w) / out_w;
  for (int y = 0; y < out_h; ++y) {
    double sy = std::max(0.0, (y + 0.5) * ry - 0.5);
    int y0 = std::min(int(sy), img.h - 1), y1 = std::min(y0 + 1, img.h - 1);
    float ly = float(sy - y0);
    for (int x = 0; x < out_w; ++x) {
      double sx = std::max(0.0, (x + 0.5) * rx - 0.5);
      int x0 = std::min(int(sx), img.w - 1), x1 = std::min(x0 + 1, img.w - 1);
      float lx = float(sx - x0);
      for (int c = 0; c < 3; ++c) {
        const float top = img.px(y0, x0)[c] * (1 - lx) + img.px(y0, x1)[c] * lx;
        const float bot = img.px(y1, x0)[c] * (1 - lx) + img.px(y1, x1)[c] * lx;
        out.px(y, x)[c] = top * (1 - ly) + bot * ly;
      }
    }
  }
  return out;
}

LabelMap resize_nearest(const LabelMap& labels, int out_h, int out_w) {
  if (out_h == labels.h && out_w == labels.w) return labels;
  LabelMap out(out_h, out_w);
  for (int y = 0; y < out_h; ++y) {
    const int sy = std::min(int((y + 0.5) * labels.h / out_h), labels.h - 1);
    for (int x = 0; x < out_w; ++x) {
      const int sx = std::min(int((x + 0.5) * labels.w / out_w), labels.w - 1);
      out.at(y, x) = labels.at(sy, sx);
    }
  }
  return out;
}

RgbImage crop(const RgbImage& img, int y0, int x0, int h, int w) {
  if (y0 < 0 || x0 < 0 || y0 + h > img.h || x0 + w > img.w) throw ShapeError("crop outside image");
  RgbImage out(h, w);
  for (int y = 0; y < h; ++y) std::copy_n(img.px(y0 + y, x0), std::size_t(w) * 3, out.px(y, 0));
  return out;
}

LabelMap crop(const LabelMap& labels, int y0, int x0, int h, int w) {
  if (y0 < 0 || x0 < 0 || y0 + h > labels.h || x0 + w > labels.w) throw ShapeError("crop outside label map");
  LabelMap out(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) out.at(y, x) = labels.at(y0 + y, x0 + x);
  }
  return out;
}

}  // namespace ov::inline OV2VSS_ABI
