#include "esiii/raster_io.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

#include "esiii/error.hpp"

namespace esiii {
namespace {

class HeaderReader {
 public:
  explicit HeaderReader(const std::string& bytes) : bytes_(bytes) {}

  long number(const char* what) {
    skip_space_and_comments();
    long value = 0;
    std::size_t digits = 0;
    while (pos_ < bytes_.size() && std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) {
      value = value * 10 + (bytes_[pos_] - '0');
      if (value > 1'000'000) throw FormatError(std::string("PPM ") + what + " is too large");
      ++pos_;
      ++digits;
    }
    if (digits == 0) throw FormatError(std::string("PPM header is missing the ") + what);
    return value;
  }

  // Exactly one whitespace byte separates maxval from the payload.
  void single_space() {
    if (pos_ >= bytes_.size() || !std::isspace(static_cast<unsigned char>(bytes_[pos_])))
      throw FormatError("PPM header must end with a single whitespace byte");
    ++pos_;
  }

  std::size_t pos() const { return pos_; }
  void advance(std::size_t n) { pos_ += n; }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      const char c = bytes_[pos_];
      if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

RasterImage decode_ppm(const std::string& bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6')
    throw BadMagicError("not a binary PPM: expected magic 'P6'");
  HeaderReader r(bytes);
  r.advance(2);
  const long w = r.number("width");
  const long h = r.number("height");
  const long maxval = r.number("maxval");
  if (maxval != 255)
    throw FormatError("unsupported PPM maxval " + std::to_string(maxval) + " (only 255 is accepted)");
  if (w <= 0 || h <= 0) throw FormatError("PPM dimensions must be positive");
  r.single_space();
  RasterImage img(static_cast<int>(w), static_cast<int>(h));
  if (bytes.size() - r.pos() < img.size())
    throw TruncatedError("PPM payload is short: expected " + std::to_string(img.size()) +
                         " bytes, found " + std::to_string(bytes.size() - r.pos()));
  std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(r.pos()), img.size(), img.data.begin());
  return img;
}

std::string encode_ppm(const RasterImage& img) {
  std::string out = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(img.data.data()), img.data.size());
  return out;
}

RasterImage read_raster(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open raster " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_ppm(ss.str());
}

void write_raster(const RasterImage& img, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write raster " + path.string());
  const std::string bytes = encode_ppm(img);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace esiii
