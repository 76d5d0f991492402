#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "statekit/errors.hpp"

namespace statekit {

// Pixel value convention: byte_range stores integers in [0,255] (as doubles),
// unit_range stores reals in [0,1].
enum class PixelDomain { byte_range, unit_range };

// H x W x C raster, row-major with the channel index fastest.
struct Image {
  int height = 0;
  int width = 0;
  int channels = 1;
  PixelDomain domain = PixelDomain::byte_range;
  std::vector<double> data;

  Image() = default;
  Image(int h, int w, int c, PixelDomain d, double fill = 0.0)
      : height(h), width(w), channels(c), domain(d),
        data(static_cast<size_t>(h) * w * c, fill) {}

  double& at(int y, int x, int c) {
    return data[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  double at(int y, int x, int c) const {
    return data[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  size_t size() const { return data.size(); }
};

inline double clamp_domain(double v, PixelDomain d) {
  const double hi = d == PixelDomain::byte_range ? 255.0 : 1.0;
  return std::min(hi, std::max(0.0, v));
}

// Rounds to the nearest representable value of the domain: integers for the
// byte domain, unchanged (clamped) for the unit domain.
inline double quantize_domain(double v, PixelDomain d) {
  v = clamp_domain(v, d);
  return d == PixelDomain::byte_range ? std::floor(v + 0.5) : v;
}

inline Image to_unit(const Image& img) {
  if (img.domain == PixelDomain::unit_range) return img;
  Image out = img;
  out.domain = PixelDomain::unit_range;
  for (double& v : out.data) v *= 1.0 / 255.0;
  return out;
}

inline Image to_byte(const Image& img) {
  if (img.domain == PixelDomain::byte_range) return img;
  Image out = img;
  out.domain = PixelDomain::byte_range;
  for (double& v : out.data) v = std::floor(std::min(1.0, std::max(0.0, v)) * 255.0 + 0.5);
  return out;
}

// Bilinear sample at continuous (y, x); coordinates outside the raster clamp
// to the nearest edge pixel.
inline double sample_bilinear_clamped(const Image& img, double y, double x, int c) {
  const auto clampd = [](double v, double lo, double hi) {
    return std::min(hi, std::max(lo, v));
  };
  x = clampd(x, 0.0, static_cast<double>(img.width - 1));
  y = clampd(y, 0.0, static_cast<double>(img.height - 1));
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min(x0 + 1, img.width - 1);
  const int y1 = std::min(y0 + 1, img.height - 1);
  const double fx = x - x0;
  const double fy = y - y0;
  const double top = img.at(y0, x0, c) * (1.0 - fx) + img.at(y0, x1, c) * fx;
  const double bot = img.at(y1, x0, c) * (1.0 - fx) + img.at(y1, x1, c) * fx;
  return top * (1.0 - fy) + bot * fy;
}

// Warps to side x side without preserving aspect ratio. Bilinear with
// half-pixel centers, so a square input at its own side is returned verbatim.
inline Image resize_to_square(const Image& img, int side) {
  if (side < 1) throw DimensionError("resize_to_square: side must be >= 1");
  if (img.height == side && img.width == side) return img;
  Image out(side, side, img.channels, img.domain);
  const double sy = static_cast<double>(img.height) / side;
  const double sx = static_cast<double>(img.width) / side;
  for (int oy = 0; oy < side; ++oy) {
    const double iy = (oy + 0.5) * sy - 0.5;
    for (int ox = 0; ox < side; ++ox) {
      const double ix = (ox + 0.5) * sx - 0.5;
      for (int c = 0; c < img.channels; ++c) {
        out.at(oy, ox, c) = quantize_domain(sample_bilinear_clamped(img, iy, ix, c), img.domain);
      }
    }
  }
  return out;
}

// ---- binary PPM (P6) ----
//
// Header: "P6" <ws> width <ws> height <ws> maxval <single ws>, then
// height*width*3 raw bytes. Only maxval 255 is supported.

namespace detail {

inline int ppm_next_int(const std::vector<uint8_t>& bytes, size_t& pos) {
  // skip whitespace and '#' comments
  for (;;) {
    while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
    if (pos < bytes.size() && bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else {
      break;
    }
  }
  if (pos >= bytes.size() || !std::isdigit(bytes[pos])) {
    throw FormatError("ppm: expected integer in header");
  }
  int v = 0;
  while (pos < bytes.size() && std::isdigit(bytes[pos])) {
    v = v * 10 + (bytes[pos] - '0');
    ++pos;
  }
  return v;
}

}  // namespace detail

inline Image decode_ppm(const std::vector<uint8_t>& bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') {
    throw FormatError("ppm: missing P6 magic");
  }
  size_t pos = 2;
  const int w = detail::ppm_next_int(bytes, pos);
  const int h = detail::ppm_next_int(bytes, pos);
  const int maxval = detail::ppm_next_int(bytes, pos);
  if (w < 1 || h < 1) throw FormatError("ppm: non-positive dimensions");
  if (maxval != 255) throw FormatError("ppm: only maxval 255 supported");
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) {
    throw FormatError("ppm: header not terminated by whitespace");
  }
  ++pos;
  const size_t need = static_cast<size_t>(w) * h * 3;
  if (bytes.size() - pos < need) throw IntegrityError("ppm: truncated pixel data");
  Image img(h, w, 3, PixelDomain::byte_range);
  for (size_t i = 0; i < need; ++i) img.data[i] = bytes[pos + i];
  return img;
}

inline std::vector<uint8_t> encode_ppm(const Image& img) {
  if (img.channels != 3) throw FormatError("ppm: encoding requires 3 channels");
  if (img.domain != PixelDomain::byte_range) {
    throw FormatError("ppm: encoding requires byte-domain pixels");
  }
  std::string header = "P6\n" + std::to_string(img.width) + " " +
                       std::to_string(img.height) + "\n255\n";
  std::vector<uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + img.size());
  for (double v : img.data) {
    out.push_back(static_cast<uint8_t>(std::min(255.0, std::max(0.0, std::floor(v + 0.5)))));
  }
  return out;
}

inline std::vector<uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
  return bytes;
}

inline void write_file_bytes(const std::string& path, const std::vector<uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write file: " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed: " + path);
}

}  // namespace statekit
