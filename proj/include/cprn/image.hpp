#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "cprn/tensor.hpp"

namespace cprn {

// Single-channel image with values in [0, 1].
struct GrayImage {
  int h = 0;
  int w = 0;
  std::vector<float> pixels;  // row-major
  int depth = 8;              // source bit depth, 8 or 16

  GrayImage() = default;
  GrayImage(int height, int width, float fill = 0.0f, int bits = 8)
      : h(height), w(width), pixels(static_cast<std::size_t>(height) * width, fill), depth(bits) {
    if (h < 1 || w < 1) throw ShapeError("image dims must be >= 1");
  }

  float& at(int y, int x) { return pixels[static_cast<std::size_t>(y) * w + x]; }
  float at(int y, int x) const { return pixels[static_cast<std::size_t>(y) * w + x]; }

  Tensor<float> to_tensor() const { return Tensor<float>({1, 1, h, w}, pixels); }

  // Takes plane (n, c) of a tensor, clamped to [0, 1].
  static GrayImage from_tensor(const Tensor<float>& t, int n = 0, int c = 0, int bits = 8) {
    GrayImage img(t.shape().h, t.shape().w, 0.0f, bits);
    const float* p = &t.at(n, c, 0, 0);
    for (std::size_t i = 0; i < img.pixels.size(); ++i)
      img.pixels[i] = std::min(1.0f, std::max(0.0f, p[i]));
    return img;
  }

  GrayImage crop(int y0, int x0, int ch, int cw) const {
    GrayImage out(ch, cw, 0.0f, depth);
    for (int y = 0; y < ch; ++y)
      for (int x = 0; x < cw; ++x) out.at(y, x) = at(y0 + y, x0 + x);
    return out;
  }
};

struct PgmError : Error {
  std::size_t offset;
  PgmError(const std::string& what, std::size_t off)
      : Error(what + " at byte offset " + std::to_string(off)), offset(off) {}
};

namespace detail {

inline bool pgm_space(unsigned char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

// Reads one header integer, skipping whitespace and '#' comments.
inline long pgm_header_int(const std::vector<unsigned char>& buf, std::size_t& pos,
                           const char* field) {
  for (;;) {
    while (pos < buf.size() && pgm_space(buf[pos])) ++pos;
    if (pos < buf.size() && buf[pos] == '#') {
      while (pos < buf.size() && buf[pos] != '\n' && buf[pos] != '\r') ++pos;
      continue;
    }
    break;
  }
  if (pos >= buf.size()) throw PgmError(std::string("truncated header, missing ") + field, pos);
  if (buf[pos] < '0' || buf[pos] > '9')
    throw PgmError(std::string("expected digits for ") + field, pos);
  long v = 0;
  while (pos < buf.size() && buf[pos] >= '0' && buf[pos] <= '9') {
    v = v * 10 + (buf[pos] - '0');
    if (v > 1'000'000'000L) throw PgmError(std::string("header value too large for ") + field, pos);
    ++pos;
  }
  return v;
}

}  // namespace detail

// Binary PGM (P5), maxval 255 or 65535. Values are scaled by 1/maxval.
inline GrayImage decode_pgm(const std::vector<unsigned char>& buf) {
  if (buf.size() < 2 || buf[0] != 'P' || buf[1] != '5')
    throw PgmError("bad magic, expected P5", 0);
  std::size_t pos = 2;
  const long w = detail::pgm_header_int(buf, pos, "width");
  const long h = detail::pgm_header_int(buf, pos, "height");
  const std::size_t maxval_at = pos;
  const long maxval = detail::pgm_header_int(buf, pos, "maxval");
  if (w < 1 || h < 1) throw PgmError("image dims must be >= 1", maxval_at);
  if (maxval != 255 && maxval != 65535)
    throw PgmError("unsupported maxval " + std::to_string(maxval) + " (expected 255 or 65535)",
                   maxval_at);
  if (pos >= buf.size() || !detail::pgm_space(buf[pos]))
    throw PgmError("missing whitespace after maxval", pos);
  ++pos;
  const int bytes = maxval == 255 ? 1 : 2;
  const std::size_t need = static_cast<std::size_t>(w) * h * bytes;
  if (buf.size() - pos < need)
    throw PgmError("truncated payload: need " + std::to_string(need) + " bytes, have " +
                       std::to_string(buf.size() - pos),
                   buf.size());
  GrayImage img(static_cast<int>(h), static_cast<int>(w), 0.0f, bytes == 1 ? 8 : 16);
  const auto denom = static_cast<float>(maxval);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    unsigned v = buf[pos + i * bytes];
    if (bytes == 2) v = (v << 8) | buf[pos + i * bytes + 1];
    img.pixels[i] = static_cast<float>(v) / denom;
  }
  return img;
}

inline std::vector<unsigned char> encode_pgm(const GrayImage& img, int depth) {
  if (depth != 8 && depth != 16) throw ConfigError("PGM depth must be 8 or 16");
  const unsigned maxval = depth == 8 ? 255u : 65535u;
  const std::string header =
      "P5\n" + std::to_string(img.w) + " " + std::to_string(img.h) + "\n" +
      std::to_string(maxval) + "\n";
  std::vector<unsigned char> out(header.begin(), header.end());
  out.reserve(header.size() + img.pixels.size() * (depth / 8));
  for (float p : img.pixels) {
    const float c = std::min(1.0f, std::max(0.0f, p));
    const auto v = static_cast<unsigned>(std::lround(static_cast<double>(c) * maxval));
    if (depth == 16) out.push_back(static_cast<unsigned char>(v >> 8));
    out.push_back(static_cast<unsigned char>(v & 0xff));
  }
  return out;
}

inline std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::string& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for " + path);
}

inline GrayImage load_pgm(const std::string& path) {
  try {
    return decode_pgm(read_file(path));
  } catch (const PgmError& e) {
    throw PgmError(path + ": " + std::string(e.what()).substr(0, std::string(e.what()).rfind(" at byte")),
                   e.offset);
  }
}

inline void save_pgm(const GrayImage& img, const std::string& path, int depth) {
  write_file(path, encode_pgm(img, depth));
}

inline void save_pgm(const GrayImage& img, const std::string& path) {
  save_pgm(img, path, img.depth);
}

}  // namespace cprn
