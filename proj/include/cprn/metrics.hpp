#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "cprn/image.hpp"
#include "cprn/model.hpp"
#include "cprn/resize.hpp"

namespace cprn {

inline void require_same_dims(const GrayImage& x, const GrayImage& y, const char* what) {
  if (x.h != y.h || x.w != y.w)
    throw ShapeError(std::string(what) + ": dims mismatch " + std::to_string(x.h) + "x" +
                     std::to_string(x.w) + " vs " + std::to_string(y.h) + "x" +
                     std::to_string(y.w));
}

// 10 log10(max^2 / MSE); +infinity for identical images.
inline double psnr(const GrayImage& x, const GrayImage& y, double max_val = 1.0) {
  require_same_dims(x, y, "psnr");
  double acc = 0;
  for (std::size_t i = 0; i < x.pixels.size(); ++i) {
    const double d = static_cast<double>(x.pixels[i]) - y.pixels[i];
    acc += d * d;
  }
  const double mse = acc / static_cast<double>(x.pixels.size());
  if (mse == 0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(max_val * max_val / mse);
}

struct SsimOptions {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double max_val = 1.0;
};

inline std::vector<double> gaussian_window_1d(int size, double sigma) {
  std::vector<double> g(size);
  const double c = (size - 1) / 2.0;
  double total = 0;
  for (int i = 0; i < size; ++i) {
    g[i] = std::exp(-((i - c) * (i - c)) / (2 * sigma * sigma));
    total += g[i];
  }
  for (double& v : g) v /= total;
  return g;
}

// Mean local SSIM over every fully contained Gaussian window (no padding).
inline double ssim(const GrayImage& x, const GrayImage& y, const SsimOptions& opt = {}) {
  require_same_dims(x, y, "ssim");
  const int win = opt.window;
  if (x.h < win || x.w < win)
    throw ShapeError("ssim: image " + std::to_string(x.h) + "x" + std::to_string(x.w) +
                     " is smaller than the " + std::to_string(win) + "x" + std::to_string(win) +
                     " window; use a smaller window");
  const auto g = gaussian_window_1d(win, opt.sigma);
  const double c1 = (opt.k1 * opt.max_val) * (opt.k1 * opt.max_val);
  const double c2 = (opt.k2 * opt.max_val) * (opt.k2 * opt.max_val);
  const int oh = x.h - win + 1, ow = x.w - win + 1;

  // Horizontal then vertical valid filtering of x, y, x^2, y^2, xy.
  constexpr int kMaps = 5;
  std::vector<double> rows(static_cast<std::size_t>(kMaps) * x.h * ow, 0.0);
  auto row_at = [&](int m, int r, int c) -> double& {
    return rows[(static_cast<std::size_t>(m) * x.h + r) * ow + c];
  };
  for (int r = 0; r < x.h; ++r)
    for (int c = 0; c < ow; ++c) {
      double s[kMaps] = {0, 0, 0, 0, 0};
      for (int k = 0; k < win; ++k) {
        const double a = x.at(r, c + k), b = y.at(r, c + k);
        s[0] += g[k] * a;
        s[1] += g[k] * b;
        s[2] += g[k] * (a * a);
        s[3] += g[k] * (b * b);
        s[4] += g[k] * (a * b);
      }
      for (int m = 0; m < kMaps; ++m) row_at(m, r, c) = s[m];
    }

  double total = 0;
  for (int r = 0; r < oh; ++r)
    for (int c = 0; c < ow; ++c) {
      double s[kMaps] = {0, 0, 0, 0, 0};
      for (int k = 0; k < win; ++k)
        for (int m = 0; m < kMaps; ++m) s[m] += g[k] * row_at(m, r + k, c);
      const double mx = s[0], my = s[1];
      const double vx = s[2] - mx * mx, vy = s[3] - my * my, cxy = s[4] - mx * my;
      total += ((2 * mx * my + c1) * (2 * cxy + c2)) /
               ((mx * mx + my * my + c1) * (vx + vy + c2));
    }
  return total / (static_cast<double>(oh) * ow);
}

struct EvalRow {
  std::string image;
  int scale = 2;
  double psnr_db = 0;
  double ssim = 0;
  bool failed = false;
  std::string error;
};

struct EvalReport {
  std::vector<EvalRow> rows;  // sorted by image id
  std::string variant;
  std::string checkpoint;
  std::uint64_t seed = 0;
  int scale = 2;

  std::size_t failures() const {
    return static_cast<std::size_t>(
        std::count_if(rows.begin(), rows.end(), [](const EvalRow& r) { return r.failed; }));
  }
  double mean_psnr() const { return mean([](const EvalRow& r) { return r.psnr_db; }); }
  double mean_ssim() const { return mean([](const EvalRow& r) { return r.ssim; }); }

  std::string to_csv() const {
    std::ostringstream os;
    os << "image,scale,psnr_db,ssim\n";
    for (const auto& r : rows) {
      os << r.image << ',' << r.scale << ',';
      if (r.failed)
        os << "failed,failed\n";
      else
        os << fmt(r.psnr_db) << ',' << fmt(r.ssim) << '\n';
    }
    os << "#mean," << scale << ',' << fmt(mean_psnr()) << ',' << fmt(mean_ssim()) << '\n';
    os << "#count," << rows.size() - failures() << ",failed," << failures() << '\n';
    os << "#variant," << variant << '\n';
    os << "#checkpoint," << checkpoint << '\n';
    os << "#seed," << seed << '\n';
    return os.str();
  }

  static std::string fmt(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    if (std::isnan(v)) return "nan";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
  }

 private:
  template <class F>
  double mean(F f) const {
    double acc = 0;
    std::size_t n = 0;
    for (const auto& r : rows)
      if (!r.failed) {
        acc += f(r);
        ++n;
      }
    return n ? acc / n : std::numeric_limits<double>::quiet_NaN();
  }
};

using Upscaler = std::function<GrayImage(const GrayImage& lr)>;

inline Upscaler bicubic_upscaler(int scale) {
  return [scale](const GrayImage& lr) { return bicubic_resize(lr, scale); };
}

inline Upscaler model_upscaler(const Model<float>& model) {
  return [&model](const GrayImage& lr) {
    return GrayImage::from_tensor(model.infer(lr.to_tensor()), 0, 0, lr.depth);
  };
}

// Full-image protocol: LR = bicubic(HR, 1/scale), SR = upscale(LR), metrics
// against HR cropped to scale x LR dims. Failed loads are kept as failed rows.
inline EvalReport evaluate(const Upscaler& upscale, const std::vector<std::string>& paths,
                           int scale) {
  if (paths.empty()) throw ConfigError("evaluation split is empty");
  EvalReport rep;
  rep.scale = scale;
  for (const auto& path : paths) {
    EvalRow row;
    row.image = std::filesystem::path(path).filename().string();
    row.scale = scale;
    try {
      const GrayImage hr_full = load_pgm(path);
      const GrayImage lr = bicubic_resize(hr_full, 1.0 / scale);
      const GrayImage hr = hr_full.crop(0, 0, lr.h * scale, lr.w * scale);
      const GrayImage sr = upscale(lr);
      row.psnr_db = psnr(sr, hr);
      row.ssim = ssim(sr, hr);
    } catch (const Error& e) {
      row.failed = true;
      row.error = e.what();
    }
    rep.rows.push_back(std::move(row));
  }
  std::stable_sort(rep.rows.begin(), rep.rows.end(),
                   [](const EvalRow& a, const EvalRow& b) { return a.image < b.image; });
  return rep;
}

}  // namespace cprn
