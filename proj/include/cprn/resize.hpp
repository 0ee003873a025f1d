#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "cprn/image.hpp"

namespace cprn {

// Keys cubic convolution kernel; a = -0.5 is Catmull-Rom.
inline double cubic_kernel(double x, double a = -0.5) {
  x = std::abs(x);
  if (x < 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
  return 0.0;
}

inline int resized_extent(int n, double factor) {
  return static_cast<int>(std::floor(n * factor + 1e-9));
}

namespace detail {

struct Taps {
  int first = 0;
  std::vector<double> w;  // normalized, indices first .. first+w.size()-1 (unclamped)
};

// Output sample o sits at input coordinate (o + 0.5)/f - 0.5. For f < 1 the
// kernel is stretched by 1/f so the filter also band-limits.
inline std::vector<Taps> resample_taps(int out, double factor) {
  const double stretch = std::min(factor, 1.0);
  const double radius = 2.0 / stretch;
  std::vector<Taps> taps(out);
  for (int o = 0; o < out; ++o) {
    const double center = (o + 0.5) / factor - 0.5;
    const int lo = static_cast<int>(std::floor(center - radius)) + 1;
    const int hi = static_cast<int>(std::ceil(center + radius)) - 1;
    Taps& t = taps[o];
    t.first = lo;
    double total = 0;
    for (int j = lo; j <= hi; ++j) {
      const double v = cubic_kernel((j - center) * stretch);
      t.w.push_back(v);
      total += v;
    }
    for (double& v : t.w) v /= total;
  }
  return taps;
}

}  // namespace detail

// Separable bicubic resampling with clamped-border replication. Output is
// clamped to [0, 1].
inline GrayImage bicubic_resize(const GrayImage& img, double factor) {
  if (!(factor > 0)) throw ConfigError("resize factor must be positive");
  const int oh = resized_extent(img.h, factor), ow = resized_extent(img.w, factor);
  if (oh < 1 || ow < 1)
    throw ConfigError("resize of " + std::to_string(img.h) + "x" + std::to_string(img.w) +
                      " by " + std::to_string(factor) + " yields an empty image");
  const auto tx = detail::resample_taps(ow, factor);
  const auto ty = detail::resample_taps(oh, factor);

  std::vector<double> rows(static_cast<std::size_t>(img.h) * ow);
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < ow; ++x) {
      const auto& t = tx[x];
      double acc = 0;
      for (std::size_t k = 0; k < t.w.size(); ++k) {
        const int j = std::clamp(t.first + static_cast<int>(k), 0, img.w - 1);
        acc += t.w[k] * img.at(y, j);
      }
      rows[static_cast<std::size_t>(y) * ow + x] = acc;
    }

  GrayImage out(oh, ow, 0.0f, img.depth);
  for (int y = 0; y < oh; ++y) {
    const auto& t = ty[y];
    for (int x = 0; x < ow; ++x) {
      double acc = 0;
      for (std::size_t k = 0; k < t.w.size(); ++k) {
        const int j = std::clamp(t.first + static_cast<int>(k), 0, img.h - 1);
        acc += t.w[k] * rows[static_cast<std::size_t>(j) * ow + x];
      }
      out.at(y, x) = static_cast<float>(std::clamp(acc, 0.0, 1.0));
    }
  }
  return out;
}

}  // namespace cprn
