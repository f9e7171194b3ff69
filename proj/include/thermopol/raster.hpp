#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "thermopol/errors.hpp"

namespace thermopol {

/// Row-major, pixel-interleaved image.
template <typename T>
struct Raster {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<T> data;

  Raster() = default;
  Raster(int w, int h, int c = 1, T fill = T{})
      : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {}

  static Raster nan(int w, int h, int c = 1) {
    return Raster(w, h, c, std::numeric_limits<T>::quiet_NaN());
  }

  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
  std::size_t index(int x, int y, int c = 0) const {
    return (static_cast<std::size_t>(y) * width + x) * channels + c;
  }
  T& at(int x, int y, int c = 0) { return data[index(x, y, c)]; }
  const T& at(int x, int y, int c = 0) const { return data[index(x, y, c)]; }

  template <typename U>
  bool same_size(const Raster<U>& other) const {
    return width == other.width && height == other.height;
  }

  template <typename U>
  Raster<U> cast() const {
    Raster<U> out(width, height, channels);
    for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }
};

using Mask = Raster<std::uint8_t>;

enum class ChannelKind { kStokes3, kAolp, kDolp, kIntensity };

/// Per-pixel polarization quantity plus validity mask. Invalid pixels hold NaN.
template <typename T = float>
struct PolarimetricImage {
  ChannelKind kind = ChannelKind::kIntensity;
  Raster<T> values;
  Mask mask;

  int width() const { return values.width; }
  int height() const { return values.height; }
};

}  // namespace thermopol
