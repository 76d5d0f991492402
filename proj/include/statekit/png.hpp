#pragma once

#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <string>
#include <vector>

#include <zlib.h>

#include "statekit/errors.hpp"
#include "statekit/image.hpp"

namespace statekit {

// Minimal PNG codec: 8-bit depth, grayscale (color type 0) or RGB (color
// type 2), non-interlaced. Decoding handles all five row filters; encoding
// always writes filter 0 rows, so output bytes are deterministic.

namespace pngdetail {

inline constexpr uint8_t kSignature[8] = {137, 80, 78, 71, 13, 10, 26, 10};

// PNG integers are big-endian, unlike the rest of the project's formats.
inline uint32_t be32(const uint8_t* p) {
  return (static_cast<uint32_t>(p[0]) << 24) | (static_cast<uint32_t>(p[1]) << 16) |
         (static_cast<uint32_t>(p[2]) << 8) | static_cast<uint32_t>(p[3]);
}

inline void push_be32(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(static_cast<uint8_t>(v >> 24));
  out.push_back(static_cast<uint8_t>(v >> 16));
  out.push_back(static_cast<uint8_t>(v >> 8));
  out.push_back(static_cast<uint8_t>(v));
}

inline void push_chunk(std::vector<uint8_t>& out, const char type[4],
                       const std::vector<uint8_t>& payload) {
  push_be32(out, static_cast<uint32_t>(payload.size()));
  const size_t type_at = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), payload.begin(), payload.end());
  const uint32_t crc = static_cast<uint32_t>(
      ::crc32(0, out.data() + type_at, static_cast<uInt>(4 + payload.size())));
  push_be32(out, crc);
}

inline uint8_t paeth(int a, int b, int c) {
  const int p = a + b - c;
  const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return static_cast<uint8_t>(a);
  if (pb <= pc) return static_cast<uint8_t>(b);
  return static_cast<uint8_t>(c);
}

}  // namespace pngdetail

inline bool looks_like_png(const std::vector<uint8_t>& bytes) {
  return bytes.size() >= 8 &&
         std::memcmp(bytes.data(), pngdetail::kSignature, 8) == 0;
}

inline Image decode_png(const std::vector<uint8_t>& bytes) {
  using namespace pngdetail;
  if (!looks_like_png(bytes)) throw FormatError("png: bad signature");

  size_t pos = 8;
  bool seen_ihdr = false, seen_iend = false;
  uint32_t width = 0, height = 0;
  int channels = 0;
  std::vector<uint8_t> idat;

  while (pos < bytes.size() && !seen_iend) {
    if (bytes.size() - pos < 12) throw IntegrityError("png: truncated chunk header");
    const uint32_t len = be32(&bytes[pos]);
    if (bytes.size() - pos < 12 + static_cast<size_t>(len)) {
      throw IntegrityError("png: truncated chunk payload");
    }
    const uint8_t* type = &bytes[pos + 4];
    const uint8_t* payload = &bytes[pos + 8];
    const uint32_t stored_crc = be32(&bytes[pos + 8 + len]);
    const uint32_t actual_crc =
        static_cast<uint32_t>(::crc32(0, type, static_cast<uInt>(4 + len)));
    if (stored_crc != actual_crc) throw IntegrityError("png: chunk crc mismatch");

    const std::string name(reinterpret_cast<const char*>(type), 4);
    if (name == "IHDR") {
      if (len != 13) throw FormatError("png: bad IHDR length");
      width = be32(payload);
      height = be32(payload + 4);
      const int bit_depth = payload[8];
      const int color_type = payload[9];
      const int interlace = payload[12];
      if (bit_depth != 8) throw FormatError("png: only 8-bit depth supported");
      if (interlace != 0) throw FormatError("png: interlaced images not supported");
      if (color_type == 0) channels = 1;
      else if (color_type == 2) channels = 3;
      else throw FormatError("png: unsupported color type " + std::to_string(color_type));
      if (width == 0 || height == 0) throw FormatError("png: zero dimension");
      seen_ihdr = true;
    } else if (name == "IDAT") {
      if (!seen_ihdr) throw FormatError("png: IDAT before IHDR");
      idat.insert(idat.end(), payload, payload + len);
    } else if (name == "IEND") {
      seen_iend = true;
    }
    // ancillary chunks are skipped
    pos += 12 + len;
  }
  if (!seen_ihdr) throw FormatError("png: missing IHDR");
  if (!seen_iend) throw IntegrityError("png: missing IEND");
  if (idat.empty()) throw FormatError("png: missing IDAT");

  const size_t stride = static_cast<size_t>(width) * channels;
  const size_t raw_size = static_cast<size_t>(height) * (stride + 1);
  std::vector<uint8_t> raw(raw_size);
  uLongf dest_len = static_cast<uLongf>(raw_size);
  const int zrc = ::uncompress(raw.data(), &dest_len, idat.data(),
                               static_cast<uLong>(idat.size()));
  if (zrc != Z_OK || dest_len != raw_size) {
    throw IntegrityError("png: IDAT inflate failed");
  }

  // undo per-row filters in place
  std::vector<uint8_t> pixels(static_cast<size_t>(height) * stride);
  const int bpp = channels;
  for (size_t y = 0; y < height; ++y) {
    const uint8_t filter = raw[y * (stride + 1)];
    const uint8_t* src = &raw[y * (stride + 1) + 1];
    uint8_t* cur = &pixels[y * stride];
    const uint8_t* prev = y > 0 ? &pixels[(y - 1) * stride] : nullptr;
    for (size_t i = 0; i < stride; ++i) {
      const int left = i >= static_cast<size_t>(bpp) ? cur[i - bpp] : 0;
      const int up = prev ? prev[i] : 0;
      const int upleft = (prev && i >= static_cast<size_t>(bpp)) ? prev[i - bpp] : 0;
      int v = src[i];
      switch (filter) {
        case 0: break;
        case 1: v += left; break;
        case 2: v += up; break;
        case 3: v += (left + up) / 2; break;
        case 4: v += pngdetail::paeth(left, up, upleft); break;
        default: throw FormatError("png: unknown row filter " + std::to_string(filter));
      }
      cur[i] = static_cast<uint8_t>(v & 0xff);
    }
  }

  Image img(static_cast<int>(height), static_cast<int>(width), channels,
            PixelDomain::byte_range);
  for (size_t i = 0; i < img.size(); ++i) img.data[i] = pixels[i];
  return img;
}

inline std::vector<uint8_t> encode_png(const Image& img) {
  using namespace pngdetail;
  if (img.domain != PixelDomain::byte_range) {
    throw FormatError("png: encoding requires byte-domain pixels");
  }
  if (img.channels != 1 && img.channels != 3) {
    throw FormatError("png: encoding supports 1 or 3 channels");
  }
  const size_t stride = static_cast<size_t>(img.width) * img.channels;
  std::vector<uint8_t> raw;
  raw.reserve(static_cast<size_t>(img.height) * (stride + 1));
  for (int y = 0; y < img.height; ++y) {
    raw.push_back(0);  // filter: none
    for (size_t i = 0; i < stride; ++i) {
      const double v = img.data[y * stride + i];
      raw.push_back(static_cast<uint8_t>(std::min(255.0, std::max(0.0, std::floor(v + 0.5)))));
    }
  }

  uLongf comp_cap = ::compressBound(static_cast<uLong>(raw.size()));
  std::vector<uint8_t> comp(comp_cap);
  if (::compress2(comp.data(), &comp_cap, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK) {
    throw Error("png: deflate failed");
  }
  comp.resize(comp_cap);

  std::vector<uint8_t> out(kSignature, kSignature + 8);
  std::vector<uint8_t> ihdr;
  push_be32(ihdr, static_cast<uint32_t>(img.width));
  push_be32(ihdr, static_cast<uint32_t>(img.height));
  ihdr.push_back(8);                                    // bit depth
  ihdr.push_back(img.channels == 1 ? 0 : 2);            // color type
  ihdr.push_back(0);                                    // compression
  ihdr.push_back(0);                                    // filter method
  ihdr.push_back(0);                                    // no interlace
  push_chunk(out, "IHDR", ihdr);
  push_chunk(out, "IDAT", comp);
  push_chunk(out, "IEND", {});
  return out;
}

// Loads a PNG or binary PPM (P6) by sniffing the magic bytes. Anything else,
// including JPEG, is a format error.
inline Image load_image(const std::string& path) {
  const std::vector<uint8_t> bytes = read_file_bytes(path);
  if (looks_like_png(bytes)) return decode_png(bytes);
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6') return decode_ppm(bytes);
  throw FormatError("unsupported image format (expected PNG or P6 PPM): " + path);
}

inline void save_image(const Image& img, const std::string& path) {
  const auto dot = path.find_last_of('.');
  const std::string ext = dot == std::string::npos ? "" : path.substr(dot);
  if (ext == ".ppm") {
    write_file_bytes(path, encode_ppm(img));
  } else if (ext == ".png") {
    write_file_bytes(path, encode_png(img));
  } else {
    throw FormatError("unsupported image extension (use .png or .ppm): " + path);
  }
}

}  // namespace statekit
