#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <type_traits>
#include <vector>

#include "cprn/ops.hpp"
#include "cprn/params.hpp"

namespace cprn {

// Convolution or transposed convolution with its own weight and bias.
template <class T>
struct ConvLayer {
  ConvSpec spec;
  bool transpose = false;
  Var<T> weight;
  Var<T> bias;

  static ConvLayer make(ParamStore<T>& store, const std::string& name, const ConvSpec& spec,
                        bool transpose = false) {
    spec.validate();
    ConvLayer l{spec, transpose, {}, {}};
    const double taps = static_cast<double>(spec.kernel) * spec.kernel;
    // Inputs feeding one output pixel. A stride-s transposed conv touches
    // (k/s)^2 input positions per output pixel.
    const double fan_in =
        transpose ? spec.in_channels * taps / (static_cast<double>(spec.stride) * spec.stride)
                  : spec.in_channels * taps;
    l.weight = store.gaussian(name + ".weight",
                              transpose ? spec.transpose_weight_shape() : spec.conv_weight_shape(),
                              fan_in);
    if (spec.bias)
      l.bias = store.filled(name + ".bias", ParamKind::bias, {spec.out_channels, 1, 1, 1}, T(0));
    return l;
  }

  Var<T> operator()(Tape<T>& tape, const Var<T>& x) const {
    return transpose ? conv2d_transpose(tape, x, weight, bias, spec)
                     : conv2d(tape, x, weight, bias, spec);
  }
};

template <class T>
struct BatchNormLayer {
  Var<T> gamma, beta, running_mean, running_var;

  static BatchNormLayer make(ParamStore<T>& store, const std::string& name, int channels) {
    const Shape s{channels, 1, 1, 1};
    return {store.filled(name + ".gamma", ParamKind::bn_scale, s, T(1)),
            store.filled(name + ".beta", ParamKind::bn_shift, s, T(0)),
            store.filled(name + ".running_mean", ParamKind::buffer, s, T(0)),
            store.filled(name + ".running_var", ParamKind::buffer, s, T(1))};
  }

  Var<T> operator()(Tape<T>& tape, const Var<T>& x) const {
    return batch_norm(tape, x, gamma, beta, running_mean, running_var);
  }
};

inline constexpr double kPreluInit = 0.25;

// layer -> [BN] -> PReLU; the unit every projection step is built from.
template <class T>
struct ActivatedLayer {
  ConvLayer<T> layer;
  std::optional<BatchNormLayer<T>> bn;
  Var<T> slope;

  static ActivatedLayer make(ParamStore<T>& store, const std::string& name, const ConvSpec& spec,
                             bool transpose, bool with_bn) {
    ActivatedLayer a{ConvLayer<T>::make(store, name, spec, transpose), std::nullopt, {}};
    if (with_bn) a.bn = BatchNormLayer<T>::make(store, name + ".bn", spec.out_channels);
    a.slope = store.filled(name + ".prelu", ParamKind::slope, {1, 1, 1, 1}, T(kPreluInit));
    return a;
  }

  Var<T> operator()(Tape<T>& tape, const Var<T>& x) const {
    Var<T> h = layer(tape, x);
    if (bn) h = (*bn)(tape, h);
    return prelu(tape, h, slope);
  }
};

// Geometry of one LR <-> HR projection. Only kernels with k - 2p == s are
// accepted, which makes the transposed conv an exact x s magnifier.
struct ProjectionSpec {
  int channels = 32;
  int kernel = 6;
  int stride = 2;
  int padding = 2;

  static ProjectionSpec for_scale(int scale, int channels) {
    if (scale == 2) return {channels, 6, 2, 2};
    if (scale == 4) return {channels, 8, 4, 2};
    throw ConfigError("unsupported scale factor " + std::to_string(scale) + " (expected 2 or 4)");
  }

  int factor() const { return stride; }

  void validate() const {
    if (channels < 1) throw ConfigError("projection channels must be >= 1");
    if (kernel - 2 * padding != stride)
      throw ConfigError("projection (k=" + std::to_string(kernel) + ", s=" +
                        std::to_string(stride) + ", p=" + std::to_string(padding) +
                        ") does not scale by exactly s (need k - 2p == s)");
  }

  ConvSpec conv(int in, int out) const { return {in, out, kernel, stride, padding, true}; }
  ConvSpec same() const { return conv(channels, channels); }
};

// LR -> HR with error feedback:
//   H = deconv(L0); L = conv(H); e = L - L0; return deconv_e(e) + H
template <class T>
struct UpProjection {
  ProjectionSpec geom;
  ActivatedLayer<T> deconv, conv, deconv_e;
  bool abs_residual = false;

  static UpProjection make(ParamStore<T>& store, const std::string& name,
                           const ProjectionSpec& g, bool bn, bool abs_residual) {
    g.validate();
    return {g,
            ActivatedLayer<T>::make(store, name + ".deconv", g.same(), true, bn),
            ActivatedLayer<T>::make(store, name + ".conv", g.same(), false, bn),
            ActivatedLayer<T>::make(store, name + ".deconv_e", g.same(), true, bn),
            abs_residual};
  }

  Var<T> operator()(Tape<T>& tape, const Var<T>& low) const {
    if (low.shape().c != geom.channels)
      throw ShapeError("up_projection: input " + low.shape().str() + " has " +
                       std::to_string(low.shape().c) + " channels, expected " +
                       std::to_string(geom.channels));
    Var<T> high = deconv(tape, low);
    Var<T> back = conv(tape, high);
    Var<T> err = sub(tape, back, low);
    if (abs_residual) err = abs(tape, err);
    return add(tape, deconv_e(tape, err), high);
  }
};

// HR -> LR with error feedback:
//   L = conv(H0); H = deconv(L); e = H - H0; return conv_e(e) + L
template <class T>
struct DownProjection {
  ProjectionSpec geom;
  ActivatedLayer<T> conv, deconv, conv_e;
  bool abs_residual = false;

  static DownProjection make(ParamStore<T>& store, const std::string& name,
                             const ProjectionSpec& g, bool bn, bool abs_residual) {
    g.validate();
    return {g,
            ActivatedLayer<T>::make(store, name + ".conv", g.same(), false, bn),
            ActivatedLayer<T>::make(store, name + ".deconv", g.same(), true, bn),
            ActivatedLayer<T>::make(store, name + ".conv_e", g.same(), false, bn),
            abs_residual};
  }

  Var<T> operator()(Tape<T>& tape, const Var<T>& high) const {
    const Shape s = high.shape();
    if (s.c != geom.channels)
      throw ShapeError("down_projection: input " + s.str() + " has " + std::to_string(s.c) +
                       " channels, expected " + std::to_string(geom.channels));
    if (s.h % geom.factor() != 0 || s.w % geom.factor() != 0)
      throw ConfigError("down_projection: input " + s.str() + " is not divisible by scale " +
                        std::to_string(geom.factor()));
    Var<T> low = conv(tape, high);
    Var<T> back = deconv(tape, low);
    Var<T> err = sub(tape, back, high);
    if (abs_residual) err = abs(tape, err);
    return add(tape, conv_e(tape, err), low);
  }
};

// N up/down pairs plus a terminal up-projection. Up-projection j consumes
// F1 + sum of earlier down outputs; down-projection j consumes the sum of
// up outputs 1..j.
template <class T>
struct CoupledChain {
  std::vector<UpProjection<T>> ups;  // N + 1, the last is terminal
  std::vector<DownProjection<T>> downs;

  struct Output {
    Var<T> sr;                // HR-scale shallow features
    std::vector<Var<T>> downs;  // S_d(1..N), LR scale
  };

  static CoupledChain make(ParamStore<T>& store, const std::string& name,
                           const ProjectionSpec& g, int blocks, bool bn, bool abs_residual) {
    if (blocks < 1)
      throw ConfigError("coupled chain needs N >= 1 blocks, got " + std::to_string(blocks));
    CoupledChain c;
    for (int j = 1; j <= blocks; ++j) {
      const std::string b = name + ".block" + std::to_string(j);
      c.ups.push_back(UpProjection<T>::make(store, b + ".up", g, bn, abs_residual));
      c.downs.push_back(DownProjection<T>::make(store, b + ".down", g, bn, abs_residual));
    }
    c.ups.push_back(UpProjection<T>::make(store, name + ".terminal_up", g, bn, abs_residual));
    return c;
  }

  int blocks() const { return static_cast<int>(downs.size()); }

  // `observe` (optional) sees each block output with its layer name.
  template <class Observe = std::nullptr_t>
  Output operator()(Tape<T>& tape, const Var<T>& f1, Observe&& observe = nullptr) const {
    auto seen = [&](const Var<T>& v, const char* what, int j) {
      if constexpr (!std::is_null_pointer_v<std::decay_t<Observe>>)
        observe(v, j > 0 ? "shallow.block" + std::to_string(j) + "." + what
                         : std::string("shallow.") + what);
    };
    Output out;
    Var<T> up_in = f1;
    Var<T> up_sum;
    for (std::size_t j = 0; j < downs.size(); ++j) {
      Var<T> u = ups[j](tape, up_in);
      seen(u, "up", static_cast<int>(j) + 1);
      up_sum = up_sum ? add(tape, up_sum, u) : u;
      Var<T> d = downs[j](tape, up_sum);
      seen(d, "down", static_cast<int>(j) + 1);
      out.downs.push_back(d);
      up_in = add(tape, up_in, d);
    }
    out.sr = ups.back()(tape, up_in);
    seen(out.sr, "terminal_up", 0);
    return out;
  }
};

// conv3x3 -> [BN] -> ReLU -> conv3x3 -> [BN], plus the identity skip.
template <class T>
struct ResidualBlock {
  int channels = 64;
  ConvLayer<T> conv1, conv2;
  std::optional<BatchNormLayer<T>> bn1, bn2;

  static ConvSpec spec(int dc) { return {dc, dc, 3, 1, 1, true}; }

  static ResidualBlock make(ParamStore<T>& store, const std::string& name, int dc, bool bn) {
    ResidualBlock r{dc, ConvLayer<T>::make(store, name + ".conv1", spec(dc)), {}, {}, {}};
    if (bn) r.bn1 = BatchNormLayer<T>::make(store, name + ".bn1", dc);
    r.conv2 = ConvLayer<T>::make(store, name + ".conv2", spec(dc));
    if (bn) r.bn2 = BatchNormLayer<T>::make(store, name + ".bn2", dc);
    return r;
  }

  Var<T> operator()(Tape<T>& tape, const Var<T>& x) const {
    if (x.shape().c != channels)
      throw ShapeError("residual_block: input " + x.shape().str() + " has " +
                       std::to_string(x.shape().c) + " channels, expected " +
                       std::to_string(channels));
    Var<T> h = conv1(tape, x);
    if (bn1) h = (*bn1)(tape, h);
    h = relu(tape, h);
    h = conv2(tape, h);
    if (bn2) h = (*bn2)(tape, h);
    return add(tape, h, x);
  }
};

// 1x1 sc -> dc adapter fusing a shallow down-projection output into the
// input of a deep residual block: adapter(S_d) + D_res.
template <class T>
struct StepwiseFuse {
  ConvLayer<T> adapter;

  static StepwiseFuse make(ParamStore<T>& store, const std::string& name, int sc, int dc) {
    return {ConvLayer<T>::make(store, name, {sc, dc, 1, 1, 0, true})};
  }

  // `block` is the index of the residual block receiving the sum.
  Var<T> operator()(Tape<T>& tape, const Var<T>& shallow, const Var<T>& deep, int block) const {
    const Shape a = shallow.shape(), b = deep.shape();
    if (a.n != b.n || a.h != b.h || a.w != b.w)
      throw ShapeError("stepwise_fuse: down-projection " + std::to_string(block) + " output " +
                       a.str() + " does not match residual block " + std::to_string(block - 1) +
                       " output " + b.str());
    return add(tape, adapter(tape, shallow), deep);
  }
};

}  // namespace cprn
