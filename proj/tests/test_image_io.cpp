#include <gtest/gtest.h>

#include <fstream>

#include "esiii/error.hpp"
#include "esiii/image.hpp"
#include "esiii/raster_io.hpp"
#include "support.hpp"

using namespace esiii;

TEST(RasterIo, EncodesMinimalHeader) {
  RasterImage img(2, 1);
  img.data = {255, 0, 0, 0, 0, 255};
  const std::string bytes = encode_ppm(img);
  EXPECT_EQ(bytes, std::string("P6\n2 1\n255\n") + std::string("\xff\x00\x00\x00\x00\xff", 6));
}

TEST(RasterIo, RoundTripIsBitExact) {
  const auto dir = fixtures::scratch_dir("raster_io");
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const RasterImage img = fixtures::random_raster(1 + int(seed % 7), 1 + int(seed % 5), seed);
    write_raster(img, dir / "img.ppm");
    EXPECT_EQ(read_raster(dir / "img.ppm"), img);
  }
}

TEST(RasterIo, AcceptsCommentsAndWhitespaceInHeader) {
  const std::string bytes = std::string("P6\n# comment\n1  1\n255\n") + std::string("\x01\x02\x03", 3);
  const RasterImage img = decode_ppm(bytes);
  EXPECT_EQ(img.width, 1);
  EXPECT_EQ(img.data, (std::vector<std::uint8_t>{1, 2, 3}));
}

TEST(RasterIo, RejectsWrongMagic) {
  EXPECT_THROW(decode_ppm("P3\n1 1\n255\n0 0 0\n"), BadMagicError);
}

TEST(RasterIo, RejectsOtherMaxval) {
  try {
    decode_ppm(std::string("P6\n1 1\n65535\n") + std::string(6, '\0'));
    FAIL() << "expected a format error";
  } catch (const BadMagicError&) {
    FAIL() << "maxval must not be reported as bad magic";
  } catch (const TruncatedError&) {
    FAIL() << "maxval must not be reported as truncation";
  } catch (const FormatError&) {
  }
}

TEST(RasterIo, RejectsShortPayload) {
  EXPECT_THROW(decode_ppm(std::string("P6\n2 2\n255\n") + std::string(11, '\0')), TruncatedError);
}

TEST(RasterIo, MissingFileIsIoError) {
  EXPECT_THROW(read_raster("/nonexistent/dir/x.ppm"), IoError);
}

TEST(Image, NormalizeDividesByMaxLevel) {
  RasterImage r(1, 1);
  r.data = {0, 51, 255};
  const FloatImage f = normalize(r);
  EXPECT_DOUBLE_EQ(f.data[0], 0.0);
  EXPECT_DOUBLE_EQ(f.data[1], 0.2);
  EXPECT_DOUBLE_EQ(f.data[2], 1.0);
}

TEST(Image, QuantizeRoundsHalfUpAndClamps) {
  EXPECT_EQ(quantize_value(0.5 / 255.0), 1);
  EXPECT_EQ(quantize_value(0.49 / 255.0), 0);
  EXPECT_EQ(quantize_value(127.5 / 255.0), 128);
  EXPECT_EQ(quantize_value(-0.3), 0);
  EXPECT_EQ(quantize_value(1.7), 255);
}

TEST(Image, QuantizeInvertsNormalize) {
  const RasterImage r = fixtures::random_raster(9, 4, 3);
  EXPECT_EQ(quantize(normalize(r)), r);
}
