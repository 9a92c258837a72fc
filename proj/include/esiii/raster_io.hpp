#pragma once

#include <filesystem>
#include <string>

#include "esiii/image.hpp"

namespace esiii {

// Binary PPM ("P6", maxval 255). Anything else is rejected.
RasterImage read_raster(const std::filesystem::path& path);
void write_raster(const RasterImage& img, const std::filesystem::path& path);

RasterImage decode_ppm(const std::string& bytes);
std::string encode_ppm(const RasterImage& img);

}  // namespace esiii
