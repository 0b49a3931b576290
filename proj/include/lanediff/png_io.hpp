#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

#include <png.h>

#include "lanediff/errors.hpp"
#include "lanediff/grid.hpp"
#include "lanediff/raster.hpp"

namespace lanediff {

// 8-bit PNG codec. Gray rasters store round(v*255); masks store 0/255 and
// read back as "value >= 128".

namespace detail {

inline std::vector<std::uint8_t> read_png_channels(const std::string& path, std::uint32_t format, int& w, int& h) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw ParseError(path + ": " + image.message);
  }
  image.format = format;
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    png_image_free(&image);
    throw ParseError(path + ": " + image.message);
  }
  w = static_cast<int>(image.width);
  h = static_cast<int>(image.height);
  return buffer;
}

inline void write_png_channels(const std::string& path, std::uint32_t format, int w, int h,
                               const std::vector<std::uint8_t>& buffer) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(w);
  image.height = static_cast<png_uint_32>(h);
  image.format = format;
  if (!png_image_write_to_file(&image, path.c_str(), 0, buffer.data(), 0, nullptr)) {
    throw std::runtime_error(path + ": " + image.message);
  }
}

inline std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace detail

inline GrayRaster read_gray_png(const std::string& path) {
  int w = 0, h = 0;
  const auto bytes = detail::read_png_channels(path, PNG_FORMAT_GRAY, w, h);
  GrayRaster out(w, h);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = bytes[i] / 255.0;
  return out;
}

inline BinaryMask read_mask_png(const std::string& path) {
  int w = 0, h = 0;
  const auto bytes = detail::read_png_channels(path, PNG_FORMAT_GRAY, w, h);
  BinaryMask out(w, h);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = bytes[i] >= 128 ? 1 : 0;
  return out;
}

inline void write_gray_png(const GrayRaster& r, const std::string& path) {
  std::vector<std::uint8_t> bytes(r.size());
  for (std::size_t i = 0; i < r.size(); ++i) bytes[i] = detail::to_byte(r[i]);
  detail::write_png_channels(path, PNG_FORMAT_GRAY, r.width(), r.height(), bytes);
}

inline void write_mask_png(const BinaryMask& m, const std::string& path) {
  std::vector<std::uint8_t> bytes(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) bytes[i] = m[i] ? 255 : 0;
  detail::write_png_channels(path, PNG_FORMAT_GRAY, m.width(), m.height(), bytes);
}

/// Channels are written in encoding order: c1 -> R, c2 -> G, c3 -> B.
inline void write_direction_png(const DirectionMap& d, const std::string& path) {
  std::vector<std::uint8_t> bytes(d.size() * 3);
  for (std::size_t i = 0; i < d.size(); ++i) {
    for (std::size_t c = 0; c < 3; ++c) bytes[3 * i + c] = detail::to_byte(d[i][c]);
  }
  detail::write_png_channels(path, PNG_FORMAT_RGB, d.width(), d.height(), bytes);
}

inline DirectionMap read_direction_png(const std::string& path) {
  int w = 0, h = 0;
  const auto bytes = detail::read_png_channels(path, PNG_FORMAT_RGB, w, h);
  DirectionMap out(w, h);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = {bytes[3 * i] / 255.0, bytes[3 * i + 1] / 255.0, bytes[3 * i + 2] / 255.0};
  }
  return out;
}

}  // namespace lanediff
