// cprn: train, evaluate and run coupled-projection SR models.
//
// Exit codes: 0 success, 1 check failure, 2 usage/config error,
// 3 numerical abort.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cprn/cprn.hpp"

namespace fs = std::filesystem;
using namespace cprn;

namespace {

constexpr int kOk = 0;
constexpr int kCheckFailed = 1;
constexpr int kUsage = 2;
constexpr int kNumerical = 3;

void write_text(const fs::path& path, const std::string& text) {
  write_file(path.string(), std::vector<unsigned char>(text.begin(), text.end()));
}

std::string out_dir_or_default(const std::string& flag) {
  return flag.empty() ? default_output_dir() : flag;
}

struct TrainArgs {
  std::string config;
  std::vector<std::string> overrides;
  std::string resume;
  bool quiet = false;
};

int cmd_train(const TrainArgs& a) {
  const RunConfig run = load_run_config(a.config, a.overrides);
  ManifestOptions mo;
  mo.scale = run.model.scale;
  mo.eval_fraction = run.eval_fraction;
  mo.patch = run.train.patch_size;
  mo.seed = run.train.seed;
  const DatasetManifest manifest = load_manifest(run.manifest, mo);
  if (manifest.train.empty()) throw ConfigError("manifest split leaves no training images");

  const fs::path out = run.output_dir;
  fs::create_directories(out);
  write_text(out / "config.json", to_json(run).dump(2) + "\n");

  std::optional<LoadedCheckpoint> resumed;
  if (!a.resume.empty()) {
    resumed.emplace(load_checkpoint(a.resume));
    if (!(resumed->meta.config == run.model))
      throw ConfigError("checkpoint " + a.resume + " was trained with a different model config");
    if (!resumed->meta.optimizer)
      throw ConfigError("checkpoint " + a.resume + " carries no optimizer state to resume from");
  }
  Model<float> fresh(run.model, run.train.seed);
  Model<float>& model = resumed ? resumed->model : fresh;

  const TrainData data = TrainData::from_paths(manifest.train, run.model.scale);
  Trainer trainer(model, data, run.train);
  if (resumed) trainer.restore(*resumed->meta.optimizer, resumed->meta.state);

  auto save = [&](const std::string& name) {
    write_file((out / name).string(), trainer.checkpoint_bytes(&run));
  };
  const auto interval = static_cast<std::uint64_t>(run.train.checkpoint_interval);
  std::size_t reported = 0;
  int status = kOk;
  try {
    trainer.run(0, [&](const Trainer& t) {
      for (; reported < t.warnings().size(); ++reported)
        std::cerr << "warning: " << t.warnings()[reported] << "\n";
      if (!a.quiet && (t.step() % 50 == 0 || t.step() == 1))
        std::fprintf(stderr, "step %llu epoch %llu loss %.6f\n",
                     static_cast<unsigned long long>(t.step()),
                     static_cast<unsigned long long>(t.state().epoch), t.history().back().loss);
      if (interval > 0 && t.step() % interval == 0) {
        char name[64];
        std::snprintf(name, sizeof name, "checkpoint_%08llu.cprn",
                      static_cast<unsigned long long>(t.step()));
        save(name);
        save("last.cprn");
      }
    });
    save("last.cprn");
  } catch (const NumericalError& e) {
    std::cerr << "numerical abort: " << e.what() << "\n";
    status = kNumerical;
  }
  write_text(out / "loss.csv", write_loss_csv(trainer.history()));
  if (status == kOk)
    std::cerr << "trained " << trainer.step() << " steps; wrote " << (out / "last.cprn").string()
              << "\n";
  return status;
}

struct EvalArgs {
  std::string checkpoint;
  std::string baseline;
  std::string manifest;
  int scale = 2;
  double eval_fraction = 0.2;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string split = "eval";
  std::string output_dir;
};

int cmd_eval(const EvalArgs& a) {
  if (a.checkpoint.empty() == a.baseline.empty())
    throw UsageError("eval needs exactly one of --checkpoint or --baseline bicubic");
  if (!a.baseline.empty() && a.baseline != "bicubic")
    throw UsageError("unknown baseline '" + a.baseline + "' (only 'bicubic' is available)");

  std::optional<LoadedCheckpoint> ck;
  std::uint64_t seed = a.seed;
  if (!a.checkpoint.empty()) {
    ck.emplace(load_checkpoint(a.checkpoint));
    if (ck->model.scale() != a.scale)
      throw ConfigError("checkpoint scale x" + std::to_string(ck->model.scale()) +
                        " does not match --scale x" + std::to_string(a.scale));
    if (!a.seed_set && ck->meta.run) seed = ck->meta.run->train.seed;
  }
  ManifestOptions mo;
  mo.scale = a.scale;
  mo.eval_fraction = a.eval_fraction;
  mo.seed = seed;
  const DatasetManifest m = load_manifest(a.manifest, mo);
  const std::vector<std::string>& paths =
      a.split == "all" ? m.paths : a.split == "train" ? m.train : m.eval;

  EvalReport rep = ck ? evaluate(model_upscaler(ck->model), paths, a.scale)
                      : evaluate(bicubic_upscaler(a.scale), paths, a.scale);
  rep.variant = ck ? variant_name(ck->model.config().variant) : "bicubic";
  rep.checkpoint = ck ? fs::path(a.checkpoint).filename().string() : "";
  rep.seed = seed;
  const std::string csv = rep.to_csv();
  std::cout << csv;

  const fs::path out = out_dir_or_default(a.output_dir);
  fs::create_directories(out);
  write_text(out / ("eval_" + rep.variant + "_x" + std::to_string(a.scale) + ".csv"), csv);
  for (const auto& r : rep.rows)
    if (r.failed) std::cerr << "warning: " << r.image << ": " << r.error << "\n";
  return kOk;
}

int cmd_sr(const std::string& checkpoint, const std::string& input, const std::string& output) {
  const LoadedCheckpoint ck = load_checkpoint(checkpoint);
  const GrayImage lr = load_pgm(input);
  const GrayImage sr = GrayImage::from_tensor(ck.model.infer(lr.to_tensor()), 0, 0, lr.depth);
  save_pgm(sr, output, lr.depth);
  std::cerr << lr.h << "x" << lr.w << " -> " << sr.h << "x" << sr.w << "\n";
  return kOk;
}

int cmd_gradcheck(int seeds, bool double_mode) {
  if (seeds < 1) throw UsageError("--seeds must be >= 1");
  const GradcheckSummary s = run_gradcheck_suite(seeds, double_mode);
  std::printf("%-18s %6s %14s %10s  %s\n", "op", "seeds", "max_rel_error", "tolerance", "result");
  for (const auto& r : s.rows) {
    std::printf("%-18s %6d %14.3e %10.0e  %s\n", r.op.c_str(), r.seeds, r.max_error, r.tolerance,
                r.passed ? "ok" : "FAIL");
    if (!r.failure.empty()) std::printf("  %s\n", r.failure.c_str());
  }
  std::printf("mode %s, %.2f s\n", double_mode ? "64-bit" : "32-bit", s.seconds);
  return s.passed() ? kOk : kCheckFailed;
}

int cmd_degrade(const std::string& input, const std::string& output, double factor) {
  const GrayImage img = load_pgm(input);
  const GrayImage out = bicubic_resize(img, factor);
  save_pgm(out, output, img.depth);
  std::cerr << img.h << "x" << img.w << " -> " << out.h << "x" << out.w << "\n";
  return kOk;
}

int cmd_params(int scale, bool json_out) {
  json doc = json::object();
  std::map<Variant, ParamCount> counts;
  for (Variant v : kAllVariants) {
    Model<float> m(ModelConfig::defaults(v, scale), 0);
    counts[v] = m.param_count();
  }
  const auto& full = counts[Variant::CPRN];
  const auto& step = counts[Variant::CPRN_S];
  const double total_ratio = static_cast<double>(step.total) / full.total;
  const double deep_ratio = static_cast<double>(step.parts.at("deep.residual")) /
                            full.parts.at("deep.residual");
  if (json_out) {
    for (const auto& [v, pc] : counts) {
      json parts = json::object();
      for (const auto& [k, n] : pc.parts) parts[k] = n;
      doc["variants"][variant_name(v)] = {{"total", pc.total}, {"parts", parts}};
    }
    doc["scale"] = scale;
    doc["cprn_s_over_cprn_total"] = total_ratio;
    doc["cprn_s_over_cprn_deep_residual"] = deep_ratio;
    std::cout << doc.dump(2) << "\n";
    return kOk;
  }
  std::printf("x%d, defaults (N=6, sc=32, dc=64; M=16, or M=6 for CPRN_S)\n", scale);
  std::printf("%-8s %10s %14s\n", "variant", "total", "deep.residual");
  for (const auto& [v, pc] : counts)
    std::printf("%-8s %10zu %14zu\n", variant_name(v), pc.total, pc.parts.at("deep.residual"));
  std::printf("CPRN_S/CPRN total ratio         %.6f\n", total_ratio);
  std::printf("CPRN_S/CPRN deep.residual ratio %.6f (%zu/%zu)\n", deep_ratio,
              step.parts.at("deep.residual"), full.parts.at("deep.residual"));
  return kOk;
}

int cmd_synth(const std::string& dir, int count, int size, std::uint64_t seed) {
  if (count < 1 || size < 16) throw UsageError("--count must be >= 1 and --size >= 16");
  fs::create_directories(dir);
  std::string manifest = "# synthetic piecewise-smooth images\n";
  for (int i = 0; i < count; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "synth_%03d.pgm", i);
    save_pgm(synthetic_image(size, size, seed + static_cast<std::uint64_t>(i)),
             (fs::path(dir) / name).string(), 8);
    manifest += std::string(name) + "\n";
  }
  write_text(fs::path(dir) / "manifest.txt", manifest);
  std::cerr << "wrote " << count << " images and manifest.txt to " << dir << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Coupled-projection residual networks for single-image super-resolution"};
  app.require_subcommand(1);

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train a model from a JSON run config");
  train->add_option("--config", ta.config, "JSON run config")->check(CLI::ExistingFile);
  train->add_option("--override", ta.overrides, "key=value overrides, e.g. model.M=6")
      ->take_all();
  train->add_option("--resume", ta.resume, "continue from a checkpoint written by train");
  train->add_flag("--quiet", ta.quiet, "suppress per-step progress");

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "PSNR/SSIM over a manifest split, CSV on stdout");
  eval->add_option("--checkpoint", ea.checkpoint, "model checkpoint");
  eval->add_option("--baseline", ea.baseline, "'bicubic' to evaluate plain interpolation");
  eval->add_option("--manifest", ea.manifest, "HR image manifest")->required();
  eval->add_option("--scale", ea.scale, "2 or 4")->required()->check(CLI::IsMember({2, 4}));
  eval->add_option("--eval-fraction", ea.eval_fraction, "held-out fraction of the manifest");
  auto* seed_opt = eval->add_option("--seed", ea.seed, "split seed (default: the training seed)");
  eval->add_option("--split", ea.split, "eval, train or all")
      ->check(CLI::IsMember({"eval", "train", "all"}));
  eval->add_option("--output-dir", ea.output_dir, "where the CSV copy goes");

  std::string sr_ck, sr_in, sr_out;
  auto* sr = app.add_subcommand("sr", "Super-resolve one PGM image");
  sr->add_option("--checkpoint", sr_ck)->required();
  sr->add_option("--input", sr_in)->required();
  sr->add_option("--output", sr_out)->required();

  int gc_seeds = 20;
  bool gc_double = false;
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference checks of every op and block");
  gc->add_option("--seeds", gc_seeds, "random instances per op");
  gc->add_flag("--double", gc_double, "run analytic gradients in 64-bit (tolerance 1e-6)");

  std::string dg_in, dg_out;
  double dg_factor = 0.5;
  auto* degrade = app.add_subcommand("degrade", "Bicubic resize of a PGM image");
  degrade->add_option("--input", dg_in)->required();
  degrade->add_option("--output", dg_out)->required();
  degrade->add_option("--factor", dg_factor)->required()->check(CLI::IsMember({0.25, 0.5, 2.0, 4.0}));

  int pc_scale = 2;
  bool pc_json = false;
  auto* params = app.add_subcommand("params", "Parameter counts of every variant");
  params->add_option("--scale", pc_scale)->check(CLI::IsMember({2, 4}));
  params->add_flag("--json", pc_json);

  std::string sy_dir;
  int sy_count = 24, sy_size = 96;
  std::uint64_t sy_seed = 1;
  auto* synth = app.add_subcommand("synth", "Write seeded synthetic PGM images and a manifest");
  synth->add_option("--dir", sy_dir)->required();
  synth->add_option("--count", sy_count);
  synth->add_option("--size", sy_size);
  synth->add_option("--seed", sy_seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*train) return cmd_train(ta);
    if (*eval) {
      ea.seed_set = seed_opt->count() > 0;
      return cmd_eval(ea);
    }
    if (*sr) return cmd_sr(sr_ck, sr_in, sr_out);
    if (*gc) return cmd_gradcheck(gc_seeds, gc_double);
    if (*degrade) return cmd_degrade(dg_in, dg_out, dg_factor);
    if (*params) return cmd_params(pc_scale, pc_json);
    if (*synth) return cmd_synth(sy_dir, sy_count, sy_size, sy_seed);
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}
