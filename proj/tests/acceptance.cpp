// Acceptance run: one PASS/FAIL line per criterion, exit 1 if any fails.
//
//   acceptance [--only N] [--budget-seconds S] [--work-dir DIR]
//
// Criterion 6 trains for up to S seconds (default 1800).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cprn/cprn.hpp"
#include "reference.hpp"

using namespace cprn;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (ok) return;
    if (pass) detail.clear();
    if (!detail.empty()) detail += "; ";
    detail += what;
    pass = false;
  }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

Outcome gradients() {
  Outcome o;
  const auto t0 = Clock::now();
  const std::vector<std::string> ops{"conv2d",         "conv2d_transpose", "activation",
                                     "residual_block", "up_projection",    "down_projection",
                                     "l1_loss"};
  double worst32 = 0, worst64 = 0;
  for (bool dbl : {false, true}) {
    const auto s = run_gradcheck_suite(20, dbl);
    for (const auto& op : ops) {
      auto it = std::find_if(s.rows.begin(), s.rows.end(), [&](const GradcheckRow& r) { return r.op == op; });
      o.require(it != s.rows.end(), "missing op " + op);
      if (it == s.rows.end()) continue;
      o.require(it->seeds >= 20, op + " ran fewer than 20 seeds");
      o.require(it->passed && it->max_error < (dbl ? 1e-6 : 1e-3),
                op + (dbl ? " 64-bit" : " 32-bit") + " error " + fmt("%.3e", it->max_error));
      (dbl ? worst64 : worst32) = std::max(dbl ? worst64 : worst32, it->max_error);
    }
  }
  const double secs = seconds_since(t0);
  o.require(secs < 60, "took " + fmt("%.1f", secs) + " s");
  if (o.pass)
    o.detail = "7 ops x 20 seeds, worst " + fmt("%.2e", worst32) + " (32-bit) " +
               fmt("%.2e", worst64) + " (64-bit), " + fmt("%.1f", secs) + " s";
  return o;
}

Outcome adjoint() {
  Outcome o;
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<float> u(-1.f, 1.f);
  auto random = [&](Shape s) {
    Tensor<float> t(s);
    for (auto& v : t.vec()) v = u(rng);
    return t;
  };
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const bool x4 = trial % 2 == 1;
    const int k = x4 ? 8 : 6, s = x4 ? 4 : 2, lr = 2 + trial % 5, cin = 1 + trial % 3, cout = 1 + trial % 4;
    const ConvSpec down{cin, cout, k, s, 2, false}, up{cout, cin, k, s, 2, false};
    const auto x = random({1, cin, s * lr, s * lr});
    const auto y = random({1, cout, lr, lr});
    const auto w = random(down.conv_weight_shape());
    Tape<float> tape(false);
    const auto cx = conv2d(tape, constant(x), constant(w), Var<float>(), down);
    const auto ty = conv2d_transpose(tape, constant(y), constant(w), Var<float>(), up);
    double lhs = 0, rhs = 0, mag = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      lhs += static_cast<double>(cx.value()[i]) * y[i];
      mag += std::abs(static_cast<double>(cx.value()[i]) * y[i]);
    }
    for (std::size_t i = 0; i < x.size(); ++i) rhs += static_cast<double>(x[i]) * ty.value()[i];
    const double rel = std::abs(lhs - rhs) / std::max(mag, 1e-12);
    worst = std::max(worst, rel);
    o.require(rel <= 1e-4, "trial " + std::to_string(trial) + " relative gap " + fmt("%.2e", rel));
  }
  if (o.pass) o.detail = "100 instances over (6,2,2) and (8,4,2), worst relative gap " + fmt("%.2e", worst);
  return o;
}

Outcome shapes() {
  Outcome o;
  const auto t0 = Clock::now();
  for (int scale : {2, 4}) {
    const ConvSpec g = ProjectionSpec::for_scale(scale, 1).same();
    for (int n : {12, 24, 33, 48})
      o.require(g.transpose_out(n) == n * scale && g.conv_out(n * scale) == n,
                "projection (k=" + std::to_string(g.kernel) + ") maps " + std::to_string(n) +
                    " to " + std::to_string(g.transpose_out(n)));
    for (Variant v : kAllVariants) {
      const Model<float> m(ModelConfig::defaults(v, scale), 1);
      for (int n : {12, 24, 33, 48}) {
        const auto out = m.infer(synthetic_image(n, n, static_cast<std::uint64_t>(n)).to_tensor());
        o.require(out.shape() == Shape{1, 1, n * scale, n * scale},
                  std::string(variant_name(v)) + " x" + std::to_string(scale) + " on " +
                      std::to_string(n) + " gives " + out.shape().str());
      }
    }
  }
  if (o.pass)
    o.detail = "5 variants x 2 scales x sizes {12,24,33,48} at defaults, " +
               fmt("%.0f", seconds_since(t0)) + " s";
  return o;
}

Outcome parameter_counts() {
  Outcome o;
  const std::map<Variant, std::size_t> pinned{{Variant::CPRN, 2845581},    {Variant::CPRN_S, 2119693},
                                              {Variant::Pa_CPRN, 2790285}, {Variant::CP_SD, 1441994},
                                              {Variant::RN_SD, 1351013}};
  std::map<Variant, ParamCount> counts;
  for (Variant v : kAllVariants) counts[v] = Model<float>(ModelConfig::defaults(v, 2), 0).param_count();
  for (const auto& [v, n] : pinned)
    o.require(counts[v].total == n, std::string(variant_name(v)) + " total " +
                                        std::to_string(counts[v].total) + " != " + std::to_string(n));
  const std::size_t full = counts[Variant::CPRN].parts.at("deep.residual");
  const std::size_t step = counts[Variant::CPRN_S].parts.at("deep.residual");
  o.require(step * 16 == full * 6, "deep.residual " + std::to_string(step) + "/" + std::to_string(full));
  const double ratio =
      static_cast<double>(counts[Variant::CPRN_S].total) / counts[Variant::CPRN].total;
  o.require(ratio >= 0.55 && ratio <= 0.85, "total ratio " + fmt("%.4f", ratio));
  if (o.pass)
    o.detail = "deep.residual " + std::to_string(step) + "/" + std::to_string(full) +
               " = 6/16, total ratio " + fmt("%.4f", ratio);
  return o;
}

// Best patch PSNR over checks every 100 steps, stopping early once `target` is met.
double overfit(Variant v, int m_blocks, double target, double& secs) {
  ModelConfig c = ModelConfig::defaults(v, 2);
  c.N = 2;
  c.M = m_blocks;
  c.sc = 8;
  c.dc = 16;
  Model<float> model(c, 1);
  const GrayImage hr = synthetic_image(48, 48, 7);
  const GrayImage lr = bicubic_resize(hr, 0.5);
  TrainData d;
  d.scale = 2;
  d.add("patch", hr);
  TrainConfig t;
  t.learning_rate = 1e-3;
  t.beta2 = 0.9;
  t.weight_decay = 0;
  t.batch_size = 1;
  t.patch_size = 48;
  t.patches_per_image = 1;
  t.epochs = 2000;
  t.max_steps = 2000;
  t.seed = 1;
  Trainer trainer(model, d, t);
  const auto t0 = Clock::now();
  double best = 0;
  while (trainer.step() < 2000) {
    trainer.run(trainer.step() + 100);
    best = std::max(best, psnr(GrayImage::from_tensor(model.infer(lr.to_tensor())), hr));
    if (best >= target) break;
  }
  secs = seconds_since(t0);
  return best;
}

Outcome overfit_smoke() {
  Outcome o;
  double s1 = 0, s2 = 0;
  const double a = overfit(Variant::CPRN, 4, 40, s1);
  const double b = overfit(Variant::CPRN_S, 2, 38, s2);
  o.require(a >= 40, "CPRN reached " + fmt("%.2f", a) + " dB");
  o.require(b >= 38, "CPRN_S reached " + fmt("%.2f", b) + " dB");
  o.require(s1 + s2 < 300, "took " + fmt("%.0f", s1 + s2) + " s");
  if (o.pass)
    o.detail = "CPRN " + fmt("%.2f", a) + " dB (" + fmt("%.0f", s1) + " s), CPRN_S (M=2) " +
               fmt("%.2f", b) + " dB (" + fmt("%.0f", s2) + " s)";
  return o;
}

Outcome desk_run(double budget, const fs::path& work) {
  Outcome o;
  const fs::path data = work / "desk";
  fs::remove_all(data);
  fs::create_directories(data);
  std::vector<std::string> paths;
  for (int i = 0; i < 24; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "synth_%03d.pgm", i);
    save_pgm(synthetic_image(96, 96, 100 + static_cast<std::uint64_t>(i)), (data / name).string(), 8);
    paths.push_back((data / name).string());
  }
  ManifestOptions mo;
  mo.scale = 2;
  mo.eval_fraction = 0.2;
  mo.seed = 1;
  const auto split = split_manifest(paths, mo);

  ModelConfig c = ModelConfig::defaults(Variant::CPRN, 2);
  c.N = 2;
  c.M = 4;
  c.sc = 8;
  c.dc = 16;
  Model<float> model(c, 1);
  TrainConfig t;
  t.learning_rate = 1e-3;
  t.beta2 = 0.9;
  t.weight_decay = 0;
  t.batch_size = 8;
  t.patch_size = 48;
  t.patches_per_image = 16;
  t.epochs = 100000;
  t.max_steps = 8000;
  t.seed = 1;
  const TrainData train = TrainData::from_paths(split.train, 2);
  Trainer trainer(model, train, t);
  const auto t0 = Clock::now();
  while (!trainer.finished() && seconds_since(t0) < budget) trainer.run(trainer.step() + 50);
  const double secs = seconds_since(t0);

  const auto base = evaluate(bicubic_upscaler(2), split.eval, 2);
  const auto ours = evaluate(model_upscaler(model), split.eval, 2);
  const double gain = ours.mean_psnr() - base.mean_psnr();
  o.require(ours.failures() == 0 && base.failures() == 0, "evaluation rows failed");
  o.require(gain >= 0.5, "gain below 0.5 dB");
  o.detail += (o.detail.empty() ? "" : ": ") + std::string("CPRN ") + fmt("%.3f", ours.mean_psnr()) +
              " dB vs bicubic " + fmt("%.3f", base.mean_psnr()) + " dB (" + fmt("%+.3f", gain) +
              ") on " + std::to_string(split.eval.size()) + " held-out of 24 images, " +
              std::to_string(trainer.step()) + " steps in " + fmt("%.0f", secs) + " s";
  fs::remove_all(data);
  return o;
}

GrayImage noisy(const GrayImage& x, double sigma, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, sigma);
  GrayImage y = x;
  for (float& p : y.pixels) p = static_cast<float>(std::clamp(p + n(rng), 0.0, 1.0));
  return y;
}

Outcome metric_oracles() {
  Outcome o;
  double worst_p = 0, worst_s = 0;
  for (std::uint64_t s = 0; s < 50; ++s) {
    const int h = 11 + static_cast<int>(s % 6) * 5, w = 11 + static_cast<int>(s % 4) * 7;
    const auto x = synthetic_image(h, w, 500 + s);
    const auto y = noisy(x, 0.01 + 0.01 * static_cast<double>(s % 10), s);
    worst_p = std::max(worst_p, std::abs(psnr(x, y) - ref::psnr(x, y)));
    worst_s = std::max(worst_s, std::abs(ssim(x, y) - ref::ssim(x, y)));
  }
  o.require(worst_p <= 1e-6, "psnr gap " + fmt("%.2e", worst_p));
  o.require(worst_s <= 1e-6, "ssim gap " + fmt("%.2e", worst_s));
  GrayImage a(16, 16), b(16, 16);
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    a.pixels[i] = static_cast<float>(40 + i % 100) / 255.0f;
    b.pixels[i] = static_cast<float>(41 + i % 100) / 255.0f;
  }
  const double p = psnr(a, b);
  o.require(std::abs(p - 48.1308) <= 1e-4, "uniform 1/255 gives " + fmt("%.6f", p));
  const double c1 = 1e-4;
  const double sc = ssim(GrayImage(16, 16, 0.0f), GrayImage(16, 16, 1.0f));
  o.require(std::abs(sc - c1 / (1 + c1)) <= 1e-4, "constant pair gives " + fmt("%.6e", sc));
  if (o.pass)
    o.detail = "50 pairs, worst gaps " + fmt("%.1e", worst_p) + " dB / " + fmt("%.1e", worst_s) +
               "; closed forms " + fmt("%.4f", p) + " dB, " + fmt("%.4e", sc);
  return o;
}

Outcome determinism(const fs::path& work) {
  Outcome o;
  ModelConfig c = ModelConfig::defaults(Variant::CPRN_S, 2);
  c.N = 2;
  c.M = 2;
  c.sc = 8;
  c.dc = 8;
  TrainData d;
  d.scale = 2;
  for (int i = 0; i < 3; ++i) d.add("img" + std::to_string(i), synthetic_image(40, 40, 60 + i));
  TrainConfig t;
  t.batch_size = 2;
  t.patch_size = 16;
  t.patches_per_image = 2;
  t.max_steps = 10;
  t.seed = 4;

  Model<float> straight(c, 2);
  Trainer a(straight, d, t);
  a.run();

  Model<float> half(c, 2);
  Trainer b(half, d, t);
  b.run(5);
  const auto bytes = b.checkpoint_bytes();
  auto loaded = decode_checkpoint(bytes);
  o.require(encode_checkpoint(loaded.model, &*loaded.meta.optimizer, loaded.meta.state) == bytes,
            "checkpoint round-trip changed bytes");
  Trainer resumed(loaded.model, d, t);
  resumed.restore(*loaded.meta.optimizer, loaded.meta.state);
  resumed.run();
  o.require(resumed.checkpoint_bytes() == a.checkpoint_bytes(), "5+5 differs from 10");
  bool same_loss = resumed.history().size() == 5;
  for (std::size_t i = 0; same_loss && i < 5; ++i)
    same_loss = resumed.history()[i].loss == a.history()[5 + i].loss;
  o.require(same_loss, "resumed losses differ");

  const fs::path dir = work / "determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::vector<std::string> paths;
  for (int i = 0; i < 4; ++i) {
    paths.push_back((dir / ("e" + std::to_string(i) + ".pgm")).string());
    save_pgm(synthetic_image(36, 44, 90 + i), paths.back(), 8);
  }
  auto r1 = evaluate(model_upscaler(straight), paths, 2);
  auto r2 = evaluate(model_upscaler(straight), paths, 2);
  r1.variant = r2.variant = "CPRN_S";
  o.require(r1.to_csv() == r2.to_csv(), "evaluation CSVs differ");
  fs::remove_all(dir);
  if (o.pass)
    o.detail = "round-trip byte-identical (" + std::to_string(bytes.size()) +
               " bytes), 5+5 == 10 bit-exact, repeated CSVs identical";
  return o;
}

Outcome bicubic() {
  Outcome o;
  const GrayImage flat(30, 34, 0.375f);
  for (double f : {0.25, 0.5, 2.0, 4.0})
    for (float v : bicubic_resize(flat, f).pixels)
      if (v != 0.375f) {
        o.require(false, "constant changed at factor " + fmt("%g", f));
        break;
      }
  double worst = 0;
  const auto ramp = ref::ramp(24, 64, 0.0125, 0.1);
  for (double f : {0.5, 0.25, 2.0, 4.0}) {
    const auto out = bicubic_resize(ramp, f);
    const int margin = f < 1 ? 3 : 8;
    for (int y = 0; y < out.h; ++y)
      for (int x = margin; x < out.w - margin; ++x) {
        const double oracle = ref::bicubic_at(ramp, f, y, x);
        const double exact = 0.0125 * ((x + 0.5) / f - 0.5) + 0.1;
        worst = std::max({worst, std::abs(out.at(y, x) - oracle), std::abs(oracle - exact)});
      }
  }
  o.require(worst <= 1e-6, "ramp error " + fmt("%.2e", worst));
  const GrayImage big(240, 240, 0.5f);
  const auto h = bicubic_resize(big, 0.5), q = bicubic_resize(big, 0.25);
  o.require(h.h == 120 && h.w == 120, "x0.5 gives " + std::to_string(h.h) + "x" + std::to_string(h.w));
  o.require(q.h == 60 && q.w == 60, "x0.25 gives " + std::to_string(q.h) + "x" + std::to_string(q.w));
  if (o.pass) o.detail = "constants exact, interior ramp error " + fmt("%.1e", worst) + ", 240 -> 120 / 60";
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  int only = 0;
  double budget = 1800;
  std::string work = (fs::temp_directory_path() / "cprn_acceptance").string();
  app.add_option("--only", only, "run a single criterion (1-9)");
  app.add_option("--budget-seconds", budget, "training budget for criterion 6");
  app.add_option("--work-dir", work);
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient integrity", gradients},
      {"adjoint identity", adjoint},
      {"shape contract", shapes},
      {"parameter counts", parameter_counts},
      {"overfit smoke", overfit_smoke},
      {"desk run beats bicubic", [&] { return desk_run(budget, work); }},
      {"metric oracles", metric_oracles},
      {"determinism and persistence", [&] { return determinism(work); }},
      {"bicubic correctness", bicubic},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (only != 0 && only != static_cast<int>(i + 1)) continue;
    Outcome r;
    try {
      r = criteria[i].second();
    } catch (const std::exception& e) {
      r.pass = false;
      r.detail = std::string("exception: ") + e.what();
    }
    failed += r.pass ? 0 : 1;
    std::printf("%s %zu %s: %s\n", r.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                r.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
