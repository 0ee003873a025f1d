#pragma once

// Straight-line double-precision references used as test oracles. Nothing
// here goes through the tape, im2col or the block classes; parameters are
// looked up by name.

#include <cmath>
#include <random>
#include <string>

#include "cprn/image.hpp"
#include "cprn/model.hpp"

namespace ref {

using cprn::Shape;
using D = cprn::Tensor<double>;

inline D conv(const D& x, const D& w, const D* b, int s, int p) {
  const Shape xs = x.shape(), ws = w.shape();
  const int oh = (xs.h + 2 * p - ws.h) / s + 1, ow = (xs.w + 2 * p - ws.w) / s + 1;
  D y({xs.n, ws.n, oh, ow});
  for (int n = 0; n < xs.n; ++n)
    for (int o = 0; o < ws.n; ++o)
      for (int i = 0; i < oh; ++i)
        for (int j = 0; j < ow; ++j) {
          double acc = b ? (*b)[o] : 0.0;
          for (int c = 0; c < xs.c; ++c)
            for (int ky = 0; ky < ws.h; ++ky)
              for (int kx = 0; kx < ws.w; ++kx) {
                const int yy = i * s - p + ky, xx = j * s - p + kx;
                if (yy < 0 || yy >= xs.h || xx < 0 || xx >= xs.w) continue;
                acc += x.at(n, c, yy, xx) * w.at(o, c, ky, kx);
              }
          y.at(n, o, i, j) = acc;
        }
  return y;
}

// Scatter form, weights [in, out, k, k].
inline D deconv(const D& x, const D& w, const D* b, int s, int p) {
  const Shape xs = x.shape(), ws = w.shape();
  const int k = ws.h;
  const int oh = s * (xs.h - 1) + k - 2 * p, ow = s * (xs.w - 1) + k - 2 * p;
  D y({xs.n, ws.c, oh, ow});
  for (int n = 0; n < xs.n; ++n)
    for (int c = 0; c < xs.c; ++c)
      for (int i = 0; i < xs.h; ++i)
        for (int j = 0; j < xs.w; ++j)
          for (int o = 0; o < ws.c; ++o)
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                const int yy = i * s - p + ky, xx = j * s - p + kx;
                if (yy < 0 || yy >= oh || xx < 0 || xx >= ow) continue;
                y.at(n, o, yy, xx) += x.at(n, c, i, j) * w.at(c, o, ky, kx);
              }
  if (b)
    for (int n = 0; n < y.shape().n; ++n)
      for (int o = 0; o < y.shape().c; ++o)
        for (int i = 0; i < oh; ++i)
          for (int j = 0; j < ow; ++j) y.at(n, o, i, j) += (*b)[o];
  return y;
}

template <class F>
D map(D x, F f) {
  for (auto& v : x.vec()) v = f(v);
  return x;
}

inline D zip(D a, const D& b, double sb) {
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += sb * b[i];
  return a;
}
inline D plus(const D& a, const D& b) { return zip(a, b, 1.0); }
inline D minus(const D& a, const D& b) { return zip(a, b, -1.0); }

inline D prelu(const D& x, double a) {
  return map(x, [a](double v) { return v >= 0 ? v : a * v; });
}

struct Params {
  const cprn::ParamStore<double>& store;
  const D& get(const std::string& name) const {
    const auto* p = store.find(name);
    if (!p) throw std::runtime_error("reference: no parameter " + name);
    return p->var.value();
  }
  bool has(const std::string& name) const { return store.find(name) != nullptr; }

  // conv/deconv -> PReLU (no BN), as named by the model.
  D layer(const std::string& name, const D& x, bool transpose, int s, int p) const {
    const D* b = has(name + ".bias") ? &get(name + ".bias") : nullptr;
    D y = transpose ? deconv(x, get(name + ".weight"), b, s, p)
                    : conv(x, get(name + ".weight"), b, s, p);
    return has(name + ".prelu") ? prelu(y, get(name + ".prelu")[0]) : y;
  }

  D up(const std::string& name, const D& l0, int s, int p, bool abs_e = false) const {
    const D h = layer(name + ".deconv", l0, true, s, p);
    const D l = layer(name + ".conv", h, false, s, p);
    D e = minus(l, l0);
    if (abs_e) e = map(e, [](double v) { return std::abs(v); });
    return plus(layer(name + ".deconv_e", e, true, s, p), h);
  }

  D down(const std::string& name, const D& h0, int s, int p) const {
    const D l = layer(name + ".conv", h0, false, s, p);
    const D h = layer(name + ".deconv", l, true, s, p);
    return plus(layer(name + ".conv_e", minus(h, h0), false, s, p), l);
  }

  D residual(const std::string& name, const D& x) const {
    D h = conv(x, get(name + ".conv1.weight"), &get(name + ".conv1.bias"), 1, 1);
    h = map(h, [](double v) { return v > 0 ? v : 0.0; });
    h = conv(h, get(name + ".conv2.weight"), &get(name + ".conv2.bias"), 1, 1);
    return plus(h, x);
  }
};

inline D random(Shape s, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  D t(s);
  for (auto& v : t.vec()) v = u(rng);
  return t;
}

// Image metrics and resampling, evaluated pixel by pixel.

inline double psnr(const cprn::GrayImage& x, const cprn::GrayImage& y) {
  long double se = 0;
  for (int r = 0; r < x.h; ++r)
    for (int c = 0; c < x.w; ++c) {
      const long double d = static_cast<long double>(x.at(r, c)) - y.at(r, c);
      se += d * d;
    }
  return static_cast<double>(10.0L * std::log10(1.0L / (se / (x.h * x.w))));
}

// Direct 2D window statistics at every valid position.
inline double ssim(const cprn::GrayImage& x, const cprn::GrayImage& y) {
  const int win = 11;
  const double sigma = 1.5, c1 = 1e-4, c2 = 9e-4;
  std::vector<double> w2(win * win);
  double total = 0;
  for (int i = 0; i < win; ++i)
    for (int j = 0; j < win; ++j) {
      const double d2 = (i - 5) * (i - 5) + (j - 5) * (j - 5);
      w2[i * win + j] = std::exp(-d2 / (2 * sigma * sigma));
      total += w2[i * win + j];
    }
  for (double& v : w2) v /= total;
  double acc = 0;
  int count = 0;
  for (int r = 0; r + win <= x.h; ++r)
    for (int c = 0; c + win <= x.w; ++c) {
      double mx = 0, my = 0;
      for (int i = 0; i < win; ++i)
        for (int j = 0; j < win; ++j) {
          mx += w2[i * win + j] * x.at(r + i, c + j);
          my += w2[i * win + j] * y.at(r + i, c + j);
        }
      double vx = 0, vy = 0, cov = 0;
      for (int i = 0; i < win; ++i)
        for (int j = 0; j < win; ++j) {
          const double dx = x.at(r + i, c + j) - mx, dy = y.at(r + i, c + j) - my;
          vx += w2[i * win + j] * dx * dx;
          vy += w2[i * win + j] * dy * dy;
          cov += w2[i * win + j] * dx * dy;
        }
      acc += (2 * mx * my + c1) * (2 * cov + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++count;
    }
  return acc / count;
}

// Keys kernel written out directly from its piecewise definition.
inline double keys(double x) {
  x = std::fabs(x);
  const double a = -0.5;
  if (x < 1) return (a + 2) * x * x * x - (a + 3) * x * x + 1;
  if (x < 2) return a * x * x * x - 5 * a * x * x + 8 * a * x - 4 * a;
  return 0;
}

// Per-pixel evaluation: sum over the full 2D input window, border replicated,
// weights normalized per axis.
inline double bicubic_at(const cprn::GrayImage& img, double factor, int oy, int ox) {
  const double st = factor < 1 ? factor : 1.0;
  const double cy = (oy + 0.5) / factor - 0.5, cx = (ox + 0.5) / factor - 0.5;
  double num = 0, wy_sum = 0, wx_sum = 0;
  for (int j = -40; j < img.w + 40; ++j) wx_sum += keys((j - cx) * st);
  for (int i = -40; i < img.h + 40; ++i) {
    const double wy = keys((i - cy) * st);
    wy_sum += wy;
    if (wy == 0) continue;
    for (int j = -40; j < img.w + 40; ++j) {
      const double wx = keys((j - cx) * st);
      if (wx == 0) continue;
      const int yi = std::min(std::max(i, 0), img.h - 1), xj = std::min(std::max(j, 0), img.w - 1);
      num += wy * wx * img.at(yi, xj);
    }
  }
  return std::clamp(num / (wy_sum * wx_sum), 0.0, 1.0);
}

inline cprn::GrayImage ramp(int h, int w, double a, double b) {
  cprn::GrayImage img(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) img.at(y, x) = static_cast<float>(a * x + b);
  return img;
}

}  // namespace ref
