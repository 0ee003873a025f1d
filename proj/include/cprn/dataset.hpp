#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "cprn/image.hpp"
#include "cprn/resize.hpp"

namespace cprn {

struct ManifestOptions {
  int scale = 2;
  double eval_fraction = 0.2;
  int patch = 48;
  std::uint64_t seed = 0;
};

// HR image list with a deterministic train/eval split. LR images are always
// derived from HR by bicubic decimation.
struct DatasetManifest {
  std::string source;
  std::vector<std::string> paths;  // resolved, in listing order
  std::vector<std::string> train;
  std::vector<std::string> eval;
  ManifestOptions options;
};

inline DatasetManifest split_manifest(std::vector<std::string> paths, const ManifestOptions& opt) {
  if (paths.empty()) throw ConfigError("manifest lists no images");
  if (opt.eval_fraction < 0 || opt.eval_fraction > 1)
    throw ConfigError("eval fraction must lie in [0, 1]");
  DatasetManifest m;
  m.paths = std::move(paths);
  m.options = opt;
  const std::size_t n = m.paths.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(opt.seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_eval = static_cast<std::size_t>(std::lround(opt.eval_fraction * n));
  std::vector<bool> is_eval(n, false);
  for (std::size_t i = 0; i < n_eval; ++i) is_eval[order[i]] = true;
  for (std::size_t i = 0; i < n; ++i) (is_eval[i] ? m.eval : m.train).push_back(m.paths[i]);
  return m;
}

// One HR path per line; blank lines and lines starting with '#' are ignored.
// Relative paths resolve against the manifest's directory. Every listed file
// must exist and parse as PGM.
inline DatasetManifest load_manifest(const std::string& path, const ManifestOptions& opt = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open manifest " + path);
  const std::filesystem::path base = std::filesystem::path(path).parent_path();
  std::vector<std::string> paths;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto last = line.find_last_not_of(" \t");
    std::filesystem::path p = line.substr(first, last - first + 1);
    if (p.is_relative()) p = base / p;
    if (!std::filesystem::exists(p))
      throw ConfigError(path + ":" + std::to_string(lineno) + ": listed file does not exist: " +
                        p.string());
    try {
      (void)decode_pgm(read_file(p.string()));
    } catch (const Error& e) {
      throw ConfigError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    paths.push_back(p.string());
  }
  if (paths.empty()) throw ConfigError("manifest " + path + " lists no images");
  DatasetManifest m = split_manifest(std::move(paths), opt);
  m.source = path;
  return m;
}

struct PatchPair {
  GrayImage lr;
  GrayImage hr;
  int hr_y = 0;  // HR offset; the LR offset is (hr_y, hr_x) / scale
  int hr_x = 0;
};

struct PatchBatch {
  std::vector<PatchPair> pairs;
  std::vector<std::string> warnings;
};

// Draws `count` aligned pairs from an HR image and its bicubic LR version.
// HR offsets are multiples of `scale`, so LR offset = HR offset / scale.
inline PatchBatch sample_patches(const GrayImage& hr, const GrayImage& lr, int scale, int patch,
                                 int count, std::mt19937_64& rng) {
  if (scale < 1 || patch < 1 || patch % scale != 0)
    throw ConfigError("patch size " + std::to_string(patch) + " must be a positive multiple of scale " +
                      std::to_string(scale));
  PatchBatch out;
  const int lp = patch / scale;
  if (hr.h < patch || hr.w < patch || lr.h < lp || lr.w < lp) {
    out.warnings.push_back("image " + std::to_string(hr.h) + "x" + std::to_string(hr.w) +
                           " is smaller than patch " + std::to_string(patch) + "; skipped");
    return out;
  }
  std::uniform_int_distribution<int> uy(0, std::min(lr.h - lp, (hr.h - patch) / scale));
  std::uniform_int_distribution<int> ux(0, std::min(lr.w - lp, (hr.w - patch) / scale));
  for (int i = 0; i < count; ++i) {
    const int ly = uy(rng);
    const int lx = ux(rng);
    PatchPair p;
    p.hr_y = ly * scale;
    p.hr_x = lx * scale;
    p.lr = lr.crop(ly, lx, lp, lp);
    p.hr = hr.crop(p.hr_y, p.hr_x, patch, patch);
    out.pairs.push_back(std::move(p));
  }
  return out;
}

inline PatchBatch sample_patches(const GrayImage& hr, int scale, int patch, int count,
                                 std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  if (hr.h < patch || hr.w < patch) {
    PatchBatch out;
    out.warnings.push_back("image " + std::to_string(hr.h) + "x" + std::to_string(hr.w) +
                           " is smaller than patch " + std::to_string(patch) + "; skipped");
    return out;
  }
  return sample_patches(hr, bicubic_resize(hr, 1.0 / scale), scale, patch, count, rng);
}

}  // namespace cprn
