#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace esiii {

inline constexpr int kChannels = 3;
// L_c: number of representable levels per 8-bit channel.
inline constexpr int kLevels = 256;

// Normalized RGB image, values in [0,1], row-major, channel-interleaved.
struct FloatImage {
  int width = 0;
  int height = 0;
  std::vector<double> data;

  FloatImage() = default;
  FloatImage(int w, int h, double fill = 0.0)
      : width(w), height(h), data(static_cast<std::size_t>(w) * h * kChannels, fill) {}

  std::size_t size() const { return data.size(); }
  std::size_t index(int x, int y, int c) const {
    return (static_cast<std::size_t>(y) * width + x) * kChannels + c;
  }
  double& at(int x, int y, int c) { return data[index(x, y, c)]; }
  double at(int x, int y, int c) const { return data[index(x, y, c)]; }
  bool same_shape(const FloatImage& o) const { return width == o.width && height == o.height; }

  friend bool operator==(const FloatImage&, const FloatImage&) = default;
};

// 8-bit RGB raster, values in [0, L_c - 1].
struct RasterImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  RasterImage() = default;
  RasterImage(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), data(static_cast<std::size_t>(w) * h * kChannels, fill) {}

  std::size_t size() const { return data.size(); }
  std::size_t index(int x, int y, int c) const {
    return (static_cast<std::size_t>(y) * width + x) * kChannels + c;
  }
  std::uint8_t& at(int x, int y, int c) { return data[index(x, y, c)]; }
  std::uint8_t at(int x, int y, int c) const { return data[index(x, y, c)]; }

  friend bool operator==(const RasterImage&, const RasterImage&) = default;
};

// value / (L_c - 1)
FloatImage normalize(const RasterImage& img);

// Round-half-up of value * (L_c - 1), clamped to the valid range.
RasterImage quantize(const FloatImage& img);

std::uint8_t quantize_value(double v);

}  // namespace esiii
