#include "esiii/image.hpp"

#include <algorithm>
#include <cmath>

namespace esiii {

FloatImage normalize(const RasterImage& img) {
  FloatImage out(img.width, img.height);
  for (std::size_t i = 0; i < img.size(); ++i) out.data[i] = img.data[i] / double(kLevels - 1);
  return out;
}

std::uint8_t quantize_value(double v) {
  const double scaled = std::floor(v * (kLevels - 1) + 0.5);
  return static_cast<std::uint8_t>(std::clamp(scaled, 0.0, double(kLevels - 1)));
}

RasterImage quantize(const FloatImage& img) {
  RasterImage out(img.width, img.height);
  for (std::size_t i = 0; i < img.size(); ++i) out.data[i] = quantize_value(img.data[i]);
  return out;
}

}  // namespace esiii
