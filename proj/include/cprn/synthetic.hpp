#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>

#include "cprn/image.hpp"

namespace cprn {

// Seeded piecewise-smooth test images: a soft background gradient, a few
// filled ellipses and rectangles with sharp edges, and thin line strokes.
// Stands in for natural/medical slices in desk-scale runs.
inline GrayImage synthetic_image(int h, int w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  GrayImage img(h, w);
  const double g0 = 0.15 + 0.3 * u(rng), gx = 0.3 * (u(rng) - 0.5), gy = 0.3 * (u(rng) - 0.5);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      img.at(y, x) = static_cast<float>(g0 + gx * x / w + gy * y / h);

  const int shapes = 4 + static_cast<int>(u(rng) * 5);
  for (int s = 0; s < shapes; ++s) {
    const double cy = u(rng) * h, cx = u(rng) * w;
    const double ry = (0.06 + 0.22 * u(rng)) * h, rx = (0.06 + 0.22 * u(rng)) * w;
    const double level = 0.1 + 0.8 * u(rng);
    const bool ellipse = u(rng) < 0.6;
    const double angle = u(rng) * 3.14159265358979;
    const double ca = std::cos(angle), sa = std::sin(angle);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double dy = y + 0.5 - cy, dx = x + 0.5 - cx;
        const double a = (dx * ca + dy * sa) / rx, b = (-dx * sa + dy * ca) / ry;
        const bool inside = ellipse ? a * a + b * b <= 1.0 : std::abs(a) <= 1 && std::abs(b) <= 1;
        if (inside) img.at(y, x) = static_cast<float>(level);
      }
  }

  const int strokes = 2 + static_cast<int>(u(rng) * 4);
  for (int s = 0; s < strokes; ++s) {
    const double y0 = u(rng) * h, x0 = u(rng) * w, y1 = u(rng) * h, x1 = u(rng) * w;
    const double level = u(rng) < 0.5 ? 0.05 : 0.95;
    const int steps = 4 * std::max(h, w);
    for (int i = 0; i <= steps; ++i) {
      const double t = static_cast<double>(i) / steps;
      const int y = static_cast<int>(y0 + t * (y1 - y0)), x = static_cast<int>(x0 + t * (x1 - x0));
      if (y >= 0 && y < h && x >= 0 && x < w) img.at(y, x) = static_cast<float>(level);
    }
  }

  for (float& p : img.pixels) p = std::clamp(p, 0.0f, 1.0f);
  // Quantize to 8 bits so the image survives a PGM round trip unchanged.
  for (float& p : img.pixels) p = static_cast<float>(std::lround(p * 255.0)) / 255.0f;
  return img;
}

}  // namespace cprn
