#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cprn/blocks.hpp"

namespace cprn {

enum class Variant { CPRN, CPRN_S, Pa_CPRN, CP_SD, RN_SD };

inline const char* variant_name(Variant v) {
  switch (v) {
    case Variant::CPRN: return "CPRN";
    case Variant::CPRN_S: return "CPRN_S";
    case Variant::Pa_CPRN: return "Pa_CPRN";
    case Variant::CP_SD: return "CP_SD";
    case Variant::RN_SD: return "RN_SD";
  }
  return "?";
}

inline Variant parse_variant(const std::string& s) {
  for (Variant v : {Variant::CPRN, Variant::CPRN_S, Variant::Pa_CPRN, Variant::CP_SD,
                    Variant::RN_SD})
    if (s == variant_name(v)) return v;
  throw ConfigError("unknown model variant '" + s +
                    "' (expected CPRN, CPRN_S, Pa_CPRN, CP_SD or RN_SD)");
}

inline constexpr Variant kAllVariants[] = {Variant::CPRN, Variant::CPRN_S, Variant::Pa_CPRN,
                                           Variant::CP_SD, Variant::RN_SD};

struct ModelConfig {
  Variant variant = Variant::CPRN;
  int scale = 2;
  int N = 6;   // coupled-projection blocks
  int M = 16;  // residual blocks
  int sc = 32;
  int dc = 64;
  bool bn_shallow = false;
  bool bn_deep = false;
  bool abs_residual = false;

  static ModelConfig defaults(Variant v, int scale = 2) {
    ModelConfig c;
    c.variant = v;
    c.scale = scale;
    if (v == Variant::CPRN_S) c.M = 6;
    return c;
  }

  bool has_shallow() const { return variant != Variant::RN_SD; }
  bool has_deep() const { return variant != Variant::CP_SD; }

  void validate() const {
    if (scale != 2 && scale != 4)
      throw ConfigError("model.scale must be 2 or 4, got " + std::to_string(scale));
    if (sc < 1 || dc < 1) throw ConfigError("model.sc and model.dc must be >= 1");
    if (has_shallow() && N < 1)
      throw ConfigError("model.N must be >= 1 for " + std::string(variant_name(variant)));
    if (has_deep() && M < 1)
      throw ConfigError("model.M must be >= 1 for " + std::string(variant_name(variant)));
    if (variant == Variant::CPRN_S && M > N)
      throw ConfigError("CPRN_S requires M <= N (each residual block pairs with one "
                        "down-projection output), got M=" + std::to_string(M) +
                        " N=" + std::to_string(N));
  }

  bool operator==(const ModelConfig&) const = default;
};

struct ParamCount {
  std::size_t total = 0;
  std::map<std::string, std::size_t> parts;  // by submodule
};

inline const char* const kSubmodules[] = {"head",          "shallow", "deep.entry",
                                          "deep.residual", "stepwise", "deep.upsample",
                                          "recon"};

template <class T>
class Model {
 public:
  struct Output {
    Var<T> sr;
    Var<T> shallow;  // shallow-branch reconstruction, when present
    Var<T> deep;     // deep-branch reconstruction, when present
    std::vector<Var<T>> down_features;
  };

  Model(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg), store_(seed) {
    cfg_.validate();
    build();
  }

  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;

 private:
  void build() {
    const ProjectionSpec g = ProjectionSpec::for_scale(cfg_.scale, cfg_.sc);
    head1_ = ActivatedLayer<T>::make(store_, "head.conv1", {1, cfg_.dc, 3, 1, 1, true}, false,
                                     false);
    head2_ = ActivatedLayer<T>::make(store_, "head.conv2", {cfg_.dc, cfg_.sc, 1, 1, 0, true},
                                     false, false);
    if (cfg_.has_shallow()) {
      chain_ = CoupledChain<T>::make(store_, "shallow", g, cfg_.N, cfg_.bn_shallow,
                                     cfg_.abs_residual);
    }
    if (cfg_.has_deep()) {
      // Serial variants enter the deep branch from the HR shallow features
      // through a strided conv; the others start from the LR head output.
      const bool serial = cfg_.variant == Variant::CPRN || cfg_.variant == Variant::CPRN_S;
      const ConvSpec entry = serial ? g.conv(cfg_.sc, cfg_.dc)
                                    : ConvSpec{cfg_.sc, cfg_.dc, 3, 1, 1, true};
      entry_ = ActivatedLayer<T>::make(store_, "deep.entry", entry, false, false);
      for (int i = 1; i <= cfg_.M; ++i) {
        if (cfg_.variant == Variant::CPRN_S)
          fuse_.push_back(StepwiseFuse<T>::make(store_, "stepwise.adapter" + std::to_string(i),
                                                cfg_.sc, cfg_.dc));
        res_.push_back(ResidualBlock<T>::make(store_, "deep.residual" + std::to_string(i),
                                              cfg_.dc, cfg_.bn_deep));
      }
      upsample_ = ActivatedLayer<T>::make(store_, "deep.upsample", g.conv(cfg_.dc, cfg_.dc), true,
                                          false);
      recon_deep_ = ConvLayer<T>::make(store_, "recon.deep", {cfg_.dc, 1, 3, 1, 1, true});
    }
    if (cfg_.has_shallow())
      recon_shallow_ = ConvLayer<T>::make(store_, "recon.shallow", {cfg_.sc, 1, 3, 1, 1, true});
  }

 public:

  const ModelConfig& config() const { return cfg_; }
  const ParamStore<T>& params() const { return store_; }
  ParamStore<T>& params() { return store_; }
  std::uint64_t seed() const { return store_.seed(); }
  int scale() const { return cfg_.scale; }
  std::size_t adapter_count() const { return fuse_.size(); }

  Output forward(Tape<T>& tape, const Var<T>& lr) const {
    const Shape s = lr.shape();
    if (s.c != 1)
      throw ConfigError("forward: input must be single-channel, got " + s.str());
    for (T v : lr.value().data())
      if (!(v >= T(0) && v <= T(1)))
        throw ConfigError("forward: input values must lie in [0, 1]");

    Output out;
    Var<T> f1 = head2_(tape, head1_(tape, lr));
    check_finite(f1, "head");

    Var<T> sr_shallow;
    if (chain_) {
      auto c = (*chain_)(tape, f1,
                         [](const Var<T>& v, const std::string& n) { check_finite(v, n); });
      sr_shallow = c.sr;
      out.down_features = std::move(c.downs);
      out.shallow = recon_shallow_(tape, sr_shallow);
      check_finite(out.shallow, "recon.shallow");
    }

    if (!res_.empty()) {
      const bool serial = cfg_.variant == Variant::CPRN || cfg_.variant == Variant::CPRN_S;
      Var<T> h = entry_(tape, serial ? sr_shallow : f1);
      check_finite(h, "deep.entry");
      for (std::size_t i = 0; i < res_.size(); ++i) {
        if (!fuse_.empty())
          h = fuse_[i](tape, out.down_features[i], h, static_cast<int>(i) + 1);
        h = res_[i](tape, h);
        check_finite(h, "deep.residual" + std::to_string(i + 1));
      }
      h = upsample_(tape, h);
      check_finite(h, "deep.upsample");
      out.deep = recon_deep_(tape, h);
      check_finite(out.deep, "recon.deep");
    }

    switch (cfg_.variant) {
      case Variant::CPRN:
      case Variant::CPRN_S: out.sr = add(tape, out.shallow, out.deep); break;
      case Variant::Pa_CPRN: out.sr = cprn::scale(tape, add(tape, out.shallow, out.deep), T(0.5)); break;
      case Variant::CP_SD: out.sr = out.shallow; break;
      case Variant::RN_SD: out.sr = out.deep; break;
    }
    return out;
  }

  // Inference without recording.
  Tensor<T> infer(const Tensor<T>& lr) const {
    Tape<T> tape(false, false);
    return forward(tape, constant(lr)).sr.value();
  }

  ParamCount param_count() const {
    ParamCount pc;
    pc.total = store_.count();
    for (const char* part : kSubmodules) pc.parts[part] = store_.count(part);
    return pc;
  }

 private:
  static void check_finite(const Var<T>& v, const std::string& stage) {
    for (T x : v.value().data())
      if (!std::isfinite(x))
        throw NumericalError("non-finite activation in layer " + stage);
  }

  ModelConfig cfg_;
  ParamStore<T> store_;
  ActivatedLayer<T> head1_, head2_;
  std::optional<CoupledChain<T>> chain_;
  ActivatedLayer<T> entry_;
  std::vector<ResidualBlock<T>> res_;
  std::vector<StepwiseFuse<T>> fuse_;
  ActivatedLayer<T> upsample_;
  ConvLayer<T> recon_deep_, recon_shallow_;
};

}  // namespace cprn
