#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lanediff/errors.hpp"

namespace lanediff {

/// Row-major 2-D array. `Tag` keeps semantically different grids
/// (probability rasters, masks, diffusion latents) from mixing silently.
template <class T, class Tag>
class Grid2D {
 public:
  using value_type = T;

  Grid2D() = default;
  Grid2D(int width, int height, T fill = T{}) : width_(width), height_(height) {
    if (width < 0 || height < 0) {
      throw ParameterError("grid dimensions must be non-negative");
    }
    data_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill);
  }
  Grid2D(int width, int height, std::vector<T> data) : width_(width), height_(height), data_(std::move(data)) {
    if (width < 0 || height < 0 ||
        data_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
      throw ParameterError("grid data length must equal width*height");
    }
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  bool contains(int x, int y) const noexcept { return x >= 0 && y >= 0 && x < width_ && y < height_; }

  T& operator()(int x, int y) { return data_[index(x, y)]; }
  const T& operator()(int x, int y) const { return data_[index(x, y)]; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }

  auto begin() noexcept { return data_.begin(); }
  auto end() noexcept { return data_.end(); }
  auto begin() const noexcept { return data_.begin(); }
  auto end() const noexcept { return data_.end(); }

  bool same_shape(const auto& other) const noexcept {
    return width_ == other.width() && height_ == other.height();
  }

  friend bool operator==(const Grid2D&, const Grid2D&) = default;

 private:
  std::size_t index(int x, int y) const noexcept {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

struct GrayTag;
struct MaskTag;
struct LatentTag;

/// Probability raster with values in [0,1].
using GrayRaster = Grid2D<double, GrayTag>;
/// Boolean raster stored as 0/1 bytes.
using BinaryMask = Grid2D<std::uint8_t, MaskTag>;
/// Diffusion state or noise grid in model range (unbounded).
using LatentGrid = Grid2D<double, LatentTag>;

template <class A, class B>
void require_same_shape(const A& a, const B& b, const std::string& what) {
  if (!a.same_shape(b)) {
    throw ParameterError(what + ": shape mismatch (" + std::to_string(a.width()) + "x" +
                         std::to_string(a.height()) + " vs " + std::to_string(b.width()) + "x" +
                         std::to_string(b.height()) + ")");
  }
}

/// Crops a `w` x `h` region starting at (x0, y0). The region must lie inside `src`.
template <class T, class Tag>
Grid2D<T, Tag> crop(const Grid2D<T, Tag>& src, int x0, int y0, int w, int h) {
  if (x0 < 0 || y0 < 0 || w < 0 || h < 0 || x0 + w > src.width() || y0 + h > src.height()) {
    throw ParameterError("crop region outside source grid");
  }
  Grid2D<T, Tag> out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) out(x, y) = src(x0 + x, y0 + y);
  }
  return out;
}

}  // namespace lanediff
