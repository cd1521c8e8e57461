#pragma once

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "seqseg/core/errors.hpp"
#include "seqseg/core/types.hpp"

namespace seqseg::data {

/// Interleaved 8-bit raster.
struct Raster {
  int height = 0;
  int width = 0;
  int channels = 0;  // 1 (gray) or 3 (RGB)
  std::vector<std::uint8_t> data;

  Raster() = default;
  Raster(int h, int w, int c, std::uint8_t fill = 0)
      : height(h), width(w), channels(c), data(static_cast<std::size_t>(h) * w * c, fill) {}

  std::uint8_t* pixel(int y, int x) { return &data[(static_cast<std::size_t>(y) * width + x) * channels]; }
};

inline void write_png(const std::string& path, const Raster& r) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(r.width);
  img.height = static_cast<png_uint_32>(r.height);
  img.format = r.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&img, path.c_str(), 0, r.data.data(), 0, nullptr)) {
    throw IoError(path, std::string("cannot write png (") + img.message + ")");
  }
}

/// Reads any PNG, converted to `channels` (1 or 3) 8-bit samples.
inline Raster read_png(const std::string& path, int channels) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw IoError(path, std::string("cannot read png (") + img.message + ")");
  }
  img.format = channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  Raster r(static_cast<int>(img.height), static_cast<int>(img.width), channels);
  if (!png_image_finish_read(&img, nullptr, r.data.data(), 0, nullptr)) {
    png_image_free(&img);
    throw IoError(path, std::string("corrupt png (") + img.message + ")");
  }
  return r;
}

inline std::uint8_t to_byte(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

inline Raster to_raster(const ImageSample& image) {
  const int h = image.height(), w = image.width();
  Raster r(h, w, 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) r.pixel(y, x)[c] = to_byte(image.pixels(c, y, x));
  return r;
}

inline ImageSample to_image(const Raster& r) {
  ImageSample out{Tensor<float>(3, r.height, r.width)};
  for (int y = 0; y < r.height; ++y)
    for (int x = 0; x < r.width; ++x)
      for (int c = 0; c < 3; ++c) out.pixels(c, y, x) = r.data[(static_cast<std::size_t>(y) * r.width + x) * 3 + c] / 255.0f;
  return out;
}

inline void write_mask_png(const std::string& path, const BinaryMask& m) {
  Raster r(m.height, m.width, 1);
  for (std::size_t i = 0; i < m.size(); ++i) r.data[i] = m.data[i] ? 255 : 0;
  write_png(path, r);
}

inline BinaryMask read_mask_png(const std::string& path) {
  const Raster r = read_png(path, 1);
  BinaryMask m(r.height, r.width);
  for (std::size_t i = 0; i < m.size(); ++i) m.data[i] = r.data[i] >= 128;
  return m;
}

}  // namespace seqseg::data
