#pragma once

#include <Eigen/Core>

#include <cmath>
#include <string>
#include <vector>

#include "cprn/autodiff.hpp"

namespace cprn {

// Square-kernel convolution geometry. For a transposed convolution the
// channel fields describe the transposed op itself (in -> out), and its
// weight is laid out [in, out, k, k], i.e. the same tensor a forward conv
// out -> in would use.
struct ConvSpec {
  int in_channels = 1;
  int out_channels = 1;
  int kernel = 3;
  int stride = 1;
  int padding = 0;
  bool bias = true;

  void validate() const {
    if (in_channels < 1 || out_channels < 1)
      throw ConfigError("conv channels must be >= 1");
    if (kernel < 1 || stride < 1 || padding < 0)
      throw ConfigError("conv spec requires k >= 1, s >= 1, p >= 0 (got k=" +
                        std::to_string(kernel) + " s=" + std::to_string(stride) +
                        " p=" + std::to_string(padding) + ")");
  }

  // floor((n + 2p - k) / s) + 1, or <= 0 when the kernel does not fit.
  int conv_out(int n) const {
    const int span = n + 2 * padding - kernel;
    if (span < 0) return 0;
    return span / stride + 1;
  }
  int transpose_out(int n) const { return stride * (n - 1) + kernel - 2 * padding; }

  Shape conv_weight_shape() const { return {out_channels, in_channels, kernel, kernel}; }
  Shape transpose_weight_shape() const { return {in_channels, out_channels, kernel, kernel}; }
};

namespace detail {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatMap = Eigen::Map<RowMat<T>>;
template <class T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

// Unfolds one [C, H, W] image into [C*k*k, oh*ow] patch columns over the
// strided output grid (zero padding).
template <class T>
void im2col(const T* img, int channels, int height, int width, int k, int s, int p, int oh,
            int ow, T* col) {
  const std::size_t cols = static_cast<std::size_t>(oh) * ow;
  for (int c = 0; c < channels; ++c) {
    const T* plane = img + static_cast<std::size_t>(c) * height * width;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* row = col + (static_cast<std::size_t>(c * k + ky) * k + kx) * cols;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * s - p + ky;
          T* dst = row + static_cast<std::size_t>(oy) * ow;
          if (iy < 0 || iy >= height) {
            std::fill(dst, dst + ow, T(0));
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(iy) * width;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * s - p + kx;
            dst[ox] = (ix >= 0 && ix < width) ? src[ix] : T(0);
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters columns back, accumulating into img.
template <class T>
void col2im(const T* col, int channels, int height, int width, int k, int s, int p, int oh,
            int ow, T* img) {
  const std::size_t cols = static_cast<std::size_t>(oh) * ow;
  for (int c = 0; c < channels; ++c) {
    T* plane = img + static_cast<std::size_t>(c) * height * width;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* row = col + (static_cast<std::size_t>(c * k + ky) * k + kx) * cols;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * s - p + ky;
          if (iy < 0 || iy >= height) continue;
          const T* src = row + static_cast<std::size_t>(oy) * ow;
          T* dst = plane + static_cast<std::size_t>(iy) * width;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * s - p + kx;
            if (ix >= 0 && ix < width) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

template <class T>
void add_bias(Tensor<T>& out, const Tensor<T>& bias) {
  const Shape& s = out.shape();
  const std::size_t plane = s.plane();
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      T* p = &out.at(n, c, 0, 0);
      const T b = bias[c];
      for (std::size_t i = 0; i < plane; ++i) p[i] += b;
    }
}

template <class T>
void accumulate_bias_grad(const Tensor<T>& gout, Tensor<T>& gbias) {
  const Shape& s = gout.shape();
  const std::size_t plane = s.plane();
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const T* p = &gout.at(n, c, 0, 0);
      T acc = 0;
      for (std::size_t i = 0; i < plane; ++i) acc += p[i];
      gbias[c] += acc;
    }
}

template <class T>
void check_bias(const Var<T>& b, int channels, const char* op) {
  if (!b) return;
  if (b.value().size() != static_cast<std::size_t>(channels))
    throw ShapeError(std::string(op) + ": bias has " + std::to_string(b.value().size()) +
                     " entries, expected " + std::to_string(channels));
}

}  // namespace detail

// Cross-correlation (no kernel flip) with zero padding.
// x: [n, ic, h, w], w: [oc, ic, k, k], b: [oc] or absent.
template <class T>
Var<T> conv2d(Tape<T>& tape, const Var<T>& x, const Var<T>& w, const Var<T>& b,
              const ConvSpec& spec) {
  spec.validate();
  const Shape xs = x.shape();
  if (xs.c != spec.in_channels)
    throw ConfigError("conv2d: input " + xs.str() + " has " + std::to_string(xs.c) +
                      " channels but spec expects " + std::to_string(spec.in_channels));
  if (!(w.shape() == spec.conv_weight_shape()))
    throw ConfigError("conv2d: weight " + w.shape().str() + " does not match spec weight " +
                      spec.conv_weight_shape().str() + " for input " + xs.str());
  detail::check_bias(b, spec.out_channels, "conv2d");
  const int k = spec.kernel, s = spec.stride, p = spec.padding;
  const int oh = spec.conv_out(xs.h), ow = spec.conv_out(xs.w);
  if (oh < 1 || ow < 1)
    throw ConfigError("conv2d: input " + xs.str() + " too small for kernel " +
                      std::to_string(k) + " stride " + std::to_string(s) + " padding " +
                      std::to_string(p));

  const int K = spec.in_channels * k * k;
  const int P = oh * ow;
  Tensor<T> out({xs.n, spec.out_channels, oh, ow});
  std::vector<T> col(static_cast<std::size_t>(K) * P);
  detail::ConstMatMap<T> W(w.value().data().data(), spec.out_channels, K);
  for (int n = 0; n < xs.n; ++n) {
    detail::im2col(&x.value().at(n, 0, 0, 0), xs.c, xs.h, xs.w, k, s, p, oh, ow, col.data());
    detail::MatMap<T> O(&out.at(n, 0, 0, 0), spec.out_channels, P);
    O.noalias() = W * detail::ConstMatMap<T>(col.data(), K, P);
  }
  if (b) detail::add_bias(out, b.value());

  const bool grad = tape.wants_grad(x, w) || (b && tape.wants_grad(b));
  Var<T> y(std::move(out), grad);
  if (grad) {
    tape.record("conv2d", [x, w, b, y, spec, oh, ow, K, P]() {
      if (!y.has_grad()) return;
      const Tensor<T>& gy = y.grad();
      const Shape xs = x.shape();
      const int k = spec.kernel, s = spec.stride, p = spec.padding;
      std::vector<T> col(static_cast<std::size_t>(K) * P);
      detail::ConstMatMap<T> W(w.value().data().data(), spec.out_channels, K);
      for (int n = 0; n < xs.n; ++n) {
        detail::ConstMatMap<T> G(&gy.at(n, 0, 0, 0), spec.out_channels, P);
        if (w.requires_grad()) {
          detail::im2col(&x.value().at(n, 0, 0, 0), xs.c, xs.h, xs.w, k, s, p, oh, ow,
                         col.data());
          detail::MatMap<T> GW(w.grad().data().data(), spec.out_channels, K);
          GW.noalias() += G * detail::ConstMatMap<T>(col.data(), K, P).transpose();
        }
        if (x.requires_grad()) {
          detail::MatMap<T> C(col.data(), K, P);
          C.noalias() = W.transpose() * G;
          detail::col2im(col.data(), xs.c, xs.h, xs.w, k, s, p, oh, ow, &x.grad().at(n, 0, 0, 0));
        }
      }
      if (b && b.requires_grad()) detail::accumulate_bias_grad(gy, b.grad());
    });
  }
  return y;
}

// Transposed convolution: the exact linear adjoint of conv2d with the same
// geometry. x: [n, in, h, w], w: [in, out, k, k]; output side s(h-1)+k-2p.
template <class T>
Var<T> conv2d_transpose(Tape<T>& tape, const Var<T>& x, const Var<T>& w, const Var<T>& b,
                        const ConvSpec& spec) {
  spec.validate();
  const Shape xs = x.shape();
  if (xs.c != spec.in_channels)
    throw ConfigError("conv2d_transpose: input " + xs.str() + " has " + std::to_string(xs.c) +
                      " channels but spec expects " + std::to_string(spec.in_channels));
  if (!(w.shape() == spec.transpose_weight_shape()))
    throw ConfigError("conv2d_transpose: weight " + w.shape().str() +
                      " does not match spec weight " + spec.transpose_weight_shape().str());
  detail::check_bias(b, spec.out_channels, "conv2d_transpose");
  const int k = spec.kernel, s = spec.stride, p = spec.padding;
  const int oh = spec.transpose_out(xs.h), ow = spec.transpose_out(xs.w);
  if (oh < 1 || ow < 1)
    throw ConfigError("conv2d_transpose: computed output size " + std::to_string(oh) + "x" +
                      std::to_string(ow) + " for input " + xs.str() + " is not positive");

  const int K = spec.out_channels * k * k;
  const int P = xs.h * xs.w;
  Tensor<T> out({xs.n, spec.out_channels, oh, ow});
  std::vector<T> col(static_cast<std::size_t>(K) * P);
  detail::ConstMatMap<T> W(w.value().data().data(), spec.in_channels, K);
  for (int n = 0; n < xs.n; ++n) {
    detail::MatMap<T> C(col.data(), K, P);
    C.noalias() = W.transpose() * detail::ConstMatMap<T>(&x.value().at(n, 0, 0, 0), xs.c, P);
    detail::col2im(col.data(), spec.out_channels, oh, ow, k, s, p, xs.h, xs.w,
                   &out.at(n, 0, 0, 0));
  }
  if (b) detail::add_bias(out, b.value());

  const bool grad = tape.wants_grad(x, w) || (b && tape.wants_grad(b));
  Var<T> y(std::move(out), grad);
  if (grad) {
    tape.record("conv2d_transpose", [x, w, b, y, spec, oh, ow, K, P]() {
      if (!y.has_grad()) return;
      const Tensor<T>& gy = y.grad();
      const Shape xs = x.shape();
      const int k = spec.kernel, s = spec.stride, p = spec.padding;
      std::vector<T> col(static_cast<std::size_t>(K) * P);
      detail::ConstMatMap<T> W(w.value().data().data(), spec.in_channels, K);
      for (int n = 0; n < xs.n; ++n) {
        detail::im2col(&gy.at(n, 0, 0, 0), spec.out_channels, oh, ow, k, s, p, xs.h, xs.w,
                       col.data());
        detail::ConstMatMap<T> C(col.data(), K, P);
        if (x.requires_grad()) {
          detail::MatMap<T> GX(&x.grad().at(n, 0, 0, 0), xs.c, P);
          GX.noalias() += W * C;
        }
        if (w.requires_grad()) {
          detail::MatMap<T> GW(w.grad().data().data(), spec.in_channels, K);
          GW.noalias() +=
              detail::ConstMatMap<T>(&x.value().at(n, 0, 0, 0), xs.c, P) * C.transpose();
        }
      }
      if (b && b.requires_grad()) detail::accumulate_bias_grad(gy, b.grad());
    });
  }
  return y;
}

template <class T>
Var<T> add(Tape<T>& tape, const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.shape(), b.shape(), "add");
  Tensor<T> out = a.value();
  const auto bv = b.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  const bool grad = tape.wants_grad(a, b);
  Var<T> y(std::move(out), grad);
  if (grad) {
    tape.record("add", [a, b, y]() {
      if (!y.has_grad()) return;
      const auto g = y.grad().data();
      for (const Var<T>* v : {&a, &b}) {
        if (!v->requires_grad()) continue;
        auto d = v->grad().data();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i];
      }
    });
  }
  return y;
}

template <class T>
Var<T> sub(Tape<T>& tape, const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.shape(), b.shape(), "sub");
  Tensor<T> out = a.value();
  const auto bv = b.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  const bool grad = tape.wants_grad(a, b);
  Var<T> y(std::move(out), grad);
  if (grad) {
    tape.record("sub", [a, b, y]() {
      if (!y.has_grad()) return;
      const auto g = y.grad().data();
      if (a.requires_grad()) {
        auto d = a.grad().data();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i];
      }
      if (b.requires_grad()) {
        auto d = b.grad().data();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] -= g[i];
      }
    });
  }
  return y;
}

template <class T>
Var<T> scale(Tape<T>& tape, const Var<T>& a, T factor) {
  Tensor<T> out = a.value();
  for (auto& v : out.vec()) v *= factor;
  const bool grad = tape.wants_grad(a);
  Var<T> y(std::move(out), grad);
  if (grad) {
    tape.record("scale", [a, y, factor]() {
      if (!y.has_grad()) return;
      const auto g = y.grad().data();
      auto d = a.grad().data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += factor * g[i];
    });
  }
  return y;
}

// |x| with subgradient 0 at 0.
template <class T>
Var<T> abs(Tape<T>& tape, const Var<T>& a) {
  Tensor<T> out = a.value();
  for (auto& v : out.vec()) v = std::abs(v);
  const bool grad = tape.wants_grad(a);
  Var<T> y(std::move(out), grad);
  if (grad) {
    tape.record("abs", [a, y]() {
      if (!y.has_grad()) return;
      const auto g = y.grad().data();
      const auto x = a.value().data();
      auto d = a.grad().data();
      for (std::size_t i = 0; i < d.size(); ++i)
        d[i] += x[i] > T(0) ? g[i] : (x[i] < T(0) ? -g[i] : T(0));
    });
  }
  return y;
}

template <class T>
Var<T> relu(Tape<T>& tape, const Var<T>& a) {
  Tensor<T> out = a.value();
  for (auto& v : out.vec()) v = v > T(0) ? v : T(0);
  const bool grad = tape.wants_grad(a);
  Var<T> y(std::move(out), grad);
  if (grad) {
    tape.record("relu", [a, y]() {
      if (!y.has_grad()) return;
      const auto g = y.grad().data();
      const auto x = a.value().data();
      auto d = a.grad().data();
      for (std::size_t i = 0; i < d.size(); ++i)
        if (x[i] > T(0)) d[i] += g[i];
    });
  }
  return y;
}

// slope is a single learnable scalar (one element).
template <class T>
Var<T> prelu(Tape<T>& tape, const Var<T>& a, const Var<T>& slope) {
  if (slope.value().size() != 1) throw ShapeError("prelu: slope must be a single scalar");
  const T k = slope.value()[0];
  Tensor<T> out = a.value();
  for (auto& v : out.vec()) v = v > T(0) ? v : k * v;
  const bool grad = tape.wants_grad(a, slope);
  Var<T> y(std::move(out), grad);
  if (grad) {
    tape.record("prelu", [a, slope, y]() {
      if (!y.has_grad()) return;
      const T k = slope.value()[0];
      const auto g = y.grad().data();
      const auto x = a.value().data();
      if (a.requires_grad()) {
        auto d = a.grad().data();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += x[i] > T(0) ? g[i] : k * g[i];
      }
      if (slope.requires_grad()) {
        T acc = 0;
        for (std::size_t i = 0; i < x.size(); ++i)
          if (!(x[i] > T(0))) acc += g[i] * x[i];
        slope.grad()[0] += acc;
      }
    });
  }
  return y;
}

// Per-channel batch normalization over (n, h, w). In training mode batch
// statistics are used and the running buffers are updated; otherwise the
// running buffers are applied as a fixed affine map.
template <class T>
Var<T> batch_norm(Tape<T>& tape, const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                  Var<T> running_mean, Var<T> running_var, T momentum = T(0.1),
                  T eps = T(1e-5)) {
  const Shape s = x.shape();
  const auto C = static_cast<std::size_t>(s.c);
  if (gamma.value().size() != C || beta.value().size() != C ||
      running_mean.value().size() != C || running_var.value().size() != C)
    throw ShapeError("batch_norm: parameter size does not match " + std::to_string(s.c) +
                     " channels");
  const std::size_t plane = s.plane();
  const std::size_t m = plane * s.n;
  std::vector<T> mean(C), invstd(C);
  if (tape.training()) {
    for (int c = 0; c < s.c; ++c) {
      double sum = 0, sq = 0;
      for (int n = 0; n < s.n; ++n) {
        const T* p = &x.value().at(n, c, 0, 0);
        for (std::size_t i = 0; i < plane; ++i) sum += p[i];
      }
      const double mu = sum / m;
      for (int n = 0; n < s.n; ++n) {
        const T* p = &x.value().at(n, c, 0, 0);
        for (std::size_t i = 0; i < plane; ++i) sq += (p[i] - mu) * (p[i] - mu);
      }
      const double var = sq / m;
      mean[c] = static_cast<T>(mu);
      invstd[c] = static_cast<T>(1.0 / std::sqrt(var + eps));
      auto& rm = running_mean.mutable_value()[c];
      auto& rv = running_var.mutable_value()[c];
      const double unbiased = m > 1 ? sq / (m - 1) : var;
      rm = static_cast<T>((1 - momentum) * rm + momentum * mu);
      rv = static_cast<T>((1 - momentum) * rv + momentum * unbiased);
    }
  } else {
    for (std::size_t c = 0; c < C; ++c) {
      mean[c] = running_mean.value()[c];
      invstd[c] = T(1) / std::sqrt(running_var.value()[c] + eps);
    }
  }
  Tensor<T> xhat(s);
  Tensor<T> out(s);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const T* p = &x.value().at(n, c, 0, 0);
      T* h = &xhat.at(n, c, 0, 0);
      T* o = &out.at(n, c, 0, 0);
      const T g = gamma.value()[c], bt = beta.value()[c];
      for (std::size_t i = 0; i < plane; ++i) {
        h[i] = (p[i] - mean[c]) * invstd[c];
        o[i] = g * h[i] + bt;
      }
    }
  const bool grad = tape.wants_grad(x, gamma, beta);
  Var<T> y(std::move(out), grad);
  if (grad) {
    const bool batch_stats = tape.training();
    tape.record("batch_norm", [x, gamma, beta, y, xhat = std::move(xhat), invstd, batch_stats,
                               m, plane]() {
      if (!y.has_grad()) return;
      const Tensor<T>& gy = y.grad();
      const Shape s = x.shape();
      for (int c = 0; c < s.c; ++c) {
        T sum_g = 0, sum_gx = 0;
        for (int n = 0; n < s.n; ++n) {
          const T* g = &gy.at(n, c, 0, 0);
          const T* h = &xhat.at(n, c, 0, 0);
          for (std::size_t i = 0; i < plane; ++i) {
            sum_g += g[i];
            sum_gx += g[i] * h[i];
          }
        }
        if (gamma.requires_grad()) gamma.grad()[c] += sum_gx;
        if (beta.requires_grad()) beta.grad()[c] += sum_g;
        if (!x.requires_grad()) continue;
        const T gm = gamma.value()[c];
        for (int n = 0; n < s.n; ++n) {
          const T* g = &gy.at(n, c, 0, 0);
          const T* h = &xhat.at(n, c, 0, 0);
          T* d = &x.grad().at(n, c, 0, 0);
          if (batch_stats) {
            const T f = gm * invstd[c] / static_cast<T>(m);
            for (std::size_t i = 0; i < plane; ++i)
              d[i] += f * (static_cast<T>(m) * g[i] - sum_g - h[i] * sum_gx);
          } else {
            for (std::size_t i = 0; i < plane; ++i) d[i] += gm * invstd[c] * g[i];
          }
        }
      }
    });
  }
  return y;
}

template <class T>
Var<T> sum(Tape<T>& tape, const Var<T>& a) {
  T acc = 0;
  for (T v : a.value().data()) acc += v;
  const bool grad = tape.wants_grad(a);
  Var<T> y(Tensor<T>({1, 1, 1, 1}, acc), grad);
  if (grad) {
    tape.record("sum", [a, y]() {
      const T g = y.grad()[0];
      for (auto& d : a.grad().vec()) d += g;
    });
  }
  return y;
}

// sum(a * weights) against a constant weight tensor; a random linear probe
// of an op's output.
template <class T>
Var<T> dot(Tape<T>& tape, const Var<T>& a, const Tensor<T>& weights) {
  require_same_shape(a.shape(), weights.shape(), "dot");
  T acc = 0;
  const auto x = a.value().data();
  for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * weights[i];
  const bool grad = tape.wants_grad(a);
  Var<T> y(Tensor<T>({1, 1, 1, 1}, acc), grad);
  if (grad) {
    tape.record("dot", [a, y, weights]() {
      const T g = y.grad()[0];
      auto d = a.grad().data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g * weights[i];
    });
  }
  return y;
}

// Mean absolute error. Subgradient at a zero difference is 0.
template <class T>
Var<T> l1_loss(Tape<T>& tape, const Var<T>& pred, const Var<T>& target) {
  require_same_shape(pred.shape(), target.shape(), "l1_loss");
  const auto p = pred.value().data();
  const auto t = target.value().data();
  const std::size_t count = p.size();
  double acc = 0;
  for (std::size_t i = 0; i < count; ++i) acc += std::abs(static_cast<double>(p[i]) - t[i]);
  const bool grad = tape.wants_grad(pred, target);
  Var<T> y(Tensor<T>({1, 1, 1, 1}, static_cast<T>(acc / count)), grad);
  if (grad) {
    tape.record("l1_loss", [pred, target, y, count]() {
      const T g = y.grad()[0] / static_cast<T>(count);
      const auto p = pred.value().data();
      const auto t = target.value().data();
      for (std::size_t i = 0; i < count; ++i) {
        const T sgn = p[i] > t[i] ? T(1) : (p[i] < t[i] ? T(-1) : T(0));
        if (pred.requires_grad()) pred.grad()[i] += g * sgn;
        if (target.requires_grad()) target.grad()[i] -= g * sgn;
      }
    });
  }
  return y;
}

}  // namespace cprn
