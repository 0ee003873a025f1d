#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "cprn/blocks.hpp"
#include "cprn/gradcheck.hpp"

namespace cprn {

// Randomized finite-difference checks over every differentiable primitive
// and block the network is assembled from.
namespace gradcheck_cases {

struct Gen {
  std::mt19937_64 rng;
  explicit Gen(std::uint64_t seed) : rng(seed) {}

  Tensor<double> normal(Shape s, double sigma, double mean = 0.0) {
    std::normal_distribution<double> d(mean, sigma);
    Tensor<double> t(s);
    for (auto& v : t.vec()) v = d(rng);
    return t;
  }
  // Uniform magnitudes in [lo, hi] with random sign; keeps inputs off kinks.
  Tensor<double> away_from_zero(Shape s, double lo, double hi) {
    std::uniform_real_distribution<double> m(lo, hi);
    std::bernoulli_distribution sign(0.5);
    Tensor<double> t(s);
    for (auto& v : t.vec()) v = sign(rng) ? m(rng) : -m(rng);
    return t;
  }
  int pick(std::initializer_list<int> xs) {
    std::uniform_int_distribution<std::size_t> d(0, xs.size() - 1);
    return *(xs.begin() + d(rng));
  }
};

inline void add_layer(std::vector<NamedLeaf>& leaves, Gen& g, const std::string& name,
                      const ConvSpec& spec, bool transpose, bool slope) {
  const Shape ws = transpose ? spec.transpose_weight_shape() : spec.conv_weight_shape();
  leaves.push_back({name + ".weight", g.normal(ws, 0.25)});
  leaves.push_back({name + ".bias", g.normal({spec.out_channels, 1, 1, 1}, 0.1)});
  if (slope) leaves.push_back({name + ".prelu", g.normal({1, 1, 1, 1}, 0.05, 0.25)});
}

// Reassembles an ActivatedLayer from three consecutive leaves.
template <class T>
ActivatedLayer<T> layer_from(const std::vector<Var<T>>& v, std::size_t at, const ConvSpec& spec,
                             bool transpose) {
  return {ConvLayer<T>{spec, transpose, v[at], v[at + 1]}, std::nullopt, v[at + 2]};
}

struct Case {
  std::vector<NamedLeaf> leaves;
  std::function<GradReport(std::vector<NamedLeaf>, const GradcheckOptions&)> run;
};

inline Case conv2d_case(std::uint64_t seed) {
  Gen g(seed);
  ConvSpec spec{g.pick({1, 2}), 2, 3, g.pick({1, 2}), g.pick({0, 1}), true};
  Case c;
  c.leaves.push_back({"x", g.normal({1, spec.in_channels, 3 + g.pick({0, 2}), 5}, 1.0)});
  add_layer(c.leaves, g, "conv", spec, false, false);
  c.run = [spec](std::vector<NamedLeaf> leaves, const GradcheckOptions& o) {
    return gradcheck(
        [spec](auto& tape, auto& v) { return conv2d(tape, v[0], v[1], v[2], spec); },
        std::move(leaves), o);
  };
  return c;
}

inline Case conv2d_transpose_case(std::uint64_t seed) {
  Gen g(seed);
  const bool x4 = seed % 2 == 1;
  ConvSpec spec{2, g.pick({1, 2}), x4 ? 8 : 6, x4 ? 4 : 2, 2, true};
  Case c;
  c.leaves.push_back({"x", g.normal({1, spec.in_channels, x4 ? 2 : 3, 3}, 1.0)});
  add_layer(c.leaves, g, "deconv", spec, true, false);
  c.run = [spec](std::vector<NamedLeaf> leaves, const GradcheckOptions& o) {
    return gradcheck(
        [spec](auto& tape, auto& v) { return conv2d_transpose(tape, v[0], v[1], v[2], spec); },
        std::move(leaves), o);
  };
  return c;
}

inline Case activation_case(std::uint64_t seed) {
  Gen g(seed);
  Case c;
  c.leaves.push_back({"x", g.away_from_zero({1, 2, 3, 3}, 0.05, 1.5)});
  c.leaves.push_back({"prelu", g.normal({1, 1, 1, 1}, 0.05, 0.25)});
  c.run = [](std::vector<NamedLeaf> leaves, const GradcheckOptions& o) {
    return gradcheck(
        [](auto& tape, auto& v) { return add(tape, relu(tape, v[0]), prelu(tape, v[0], v[1])); },
        std::move(leaves), o);
  };
  return c;
}

inline Case residual_block_case(std::uint64_t seed) {
  Gen g(seed);
  const int dc = 4;
  const ConvSpec spec{dc, dc, 3, 1, 1, true};
  Case c;
  c.leaves.push_back({"x", g.normal({1, dc, 6, 6}, 1.0)});
  add_layer(c.leaves, g, "conv1", spec, false, false);
  add_layer(c.leaves, g, "conv2", spec, false, false);
  c.run = [spec, dc](std::vector<NamedLeaf> leaves, const GradcheckOptions& o) {
    return gradcheck(
        [spec, dc](auto& tape, auto& v) {
          using T = typename std::decay_t<decltype(v[0].value())>::value_type;
          ResidualBlock<T> r{dc, {spec, false, v[1], v[2]}, {spec, false, v[3], v[4]}, {}, {}};
          return r(tape, v[0]);
        },
        std::move(leaves), o);
  };
  return c;
}

inline Case up_projection_case(std::uint64_t seed, bool abs_residual = false) {
  Gen g(seed);
  const ProjectionSpec geom{2, 6, 2, 2};
  Case c;
  c.leaves.push_back({"x", g.normal({1, 2, 4, 4}, 1.0)});
  add_layer(c.leaves, g, "deconv", geom.same(), true, true);
  add_layer(c.leaves, g, "conv", geom.same(), false, true);
  add_layer(c.leaves, g, "deconv_e", geom.same(), true, true);
  c.run = [geom, abs_residual](std::vector<NamedLeaf> leaves, const GradcheckOptions& o) {
    return gradcheck(
        [geom, abs_residual](auto& tape, auto& v) {
          using T = typename std::decay_t<decltype(v[0].value())>::value_type;
          UpProjection<T> up{geom, layer_from(v, 1, geom.same(), true),
                             layer_from(v, 4, geom.same(), false),
                             layer_from(v, 7, geom.same(), true), abs_residual};
          return up(tape, v[0]);
        },
        std::move(leaves), o);
  };
  return c;
}

inline Case down_projection_case(std::uint64_t seed) {
  Gen g(seed);
  const ProjectionSpec geom{2, 6, 2, 2};
  Case c;
  c.leaves.push_back({"x", g.normal({1, 2, 8, 8}, 1.0)});
  add_layer(c.leaves, g, "conv", geom.same(), false, true);
  add_layer(c.leaves, g, "deconv", geom.same(), true, true);
  add_layer(c.leaves, g, "conv_e", geom.same(), false, true);
  c.run = [geom](std::vector<NamedLeaf> leaves, const GradcheckOptions& o) {
    return gradcheck(
        [geom](auto& tape, auto& v) {
          using T = typename std::decay_t<decltype(v[0].value())>::value_type;
          DownProjection<T> down{geom, layer_from(v, 1, geom.same(), false),
                                 layer_from(v, 4, geom.same(), true),
                                 layer_from(v, 7, geom.same(), false), false};
          return down(tape, v[0]);
        },
        std::move(leaves), o);
  };
  return c;
}

inline Case l1_loss_case(std::uint64_t seed) {
  Gen g(seed);
  Case c;
  Tensor<double> target = g.normal({1, 1, 4, 4}, 1.0);
  Tensor<double> gap = g.away_from_zero({1, 1, 4, 4}, 0.05, 1.0);
  Tensor<double> pred = target;
  for (std::size_t i = 0; i < pred.size(); ++i) pred[i] += gap[i];
  c.leaves.push_back({"pred", pred});
  c.leaves.push_back({"target", target});
  c.run = [](std::vector<NamedLeaf> leaves, const GradcheckOptions& o) {
    return gradcheck([](auto& tape, auto& v) { return l1_loss(tape, v[0], v[1]); },
                     std::move(leaves), o);
  };
  return c;
}

}  // namespace gradcheck_cases

struct GradcheckRow {
  std::string op;
  int seeds = 0;
  double max_error = 0;
  double tolerance = 0;
  bool passed = false;
  std::string failure;
};

struct GradcheckSummary {
  std::vector<GradcheckRow> rows;
  double seconds = 0;
  bool passed() const {
    for (const auto& r : rows)
      if (!r.passed) return false;
    return !rows.empty();
  }
};

inline double gradcheck_tolerance(bool double_mode) { return double_mode ? 1e-6 : 1e-3; }

// Runs every case family over `seeds` seeds. 32-bit mode checks float
// gradients against the 64-bit difference quotient (tolerance 1e-3);
// 64-bit mode checks double gradients (tolerance 1e-6).
inline GradcheckSummary run_gradcheck_suite(int seeds, bool double_mode,
                                            std::uint64_t base_seed = 1) {
  using namespace gradcheck_cases;
  using Factory = Case (*)(std::uint64_t);
  const std::pair<const char*, Factory> families[] = {
      {"conv2d", &conv2d_case},
      {"conv2d_transpose", &conv2d_transpose_case},
      {"activation", &activation_case},
      {"residual_block", &residual_block_case},
      {"up_projection", [](std::uint64_t s) { return up_projection_case(s); }},
      {"down_projection", &down_projection_case},
      {"l1_loss", &l1_loss_case},
  };
  const auto t0 = std::chrono::steady_clock::now();
  GradcheckSummary summary;
  const double tol = gradcheck_tolerance(double_mode);
  for (const auto& [name, make] : families) {
    GradcheckRow row{name, seeds, 0.0, tol, true, {}};
    for (int i = 0; i < seeds; ++i) {
      const std::uint64_t seed = base_seed + static_cast<std::uint64_t>(i) * 7919u;
      Case c = make(seed);
      GradcheckOptions opt;
      opt.analytic_double = double_mode;
      opt.probe_seed = seed ^ 0x9e3779b97f4a7c15ull;
      const GradReport rep = c.run(c.leaves, opt);
      if (!rep.finite()) {
        row.passed = false;
        row.failure = rep.failure;
        row.max_error = INFINITY;
        break;
      }
      row.max_error = std::max(row.max_error, rep.max_error());
    }
    row.passed = row.passed && row.max_error < tol;
    summary.rows.push_back(row);
  }
  summary.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return summary;
}

// x -> 2x whose backward rule has its sign flipped; the checker must flag it.
template <class T>
Var<T> scale_with_flipped_backward(Tape<T>& tape, const Var<T>& x) {
  Tensor<T> out = x.value();
  for (auto& v : out.vec()) v *= T(2);
  const bool grad = tape.wants_grad(x);
  Var<T> y(std::move(out), grad);
  if (grad)
    tape.record("scale_flipped", [x, y]() {
      const auto g = y.grad().data();
      auto d = x.grad().data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] -= T(2) * g[i];
    });
  return y;
}

inline double mutation_sanity_error(std::uint64_t seed = 3) {
  gradcheck_cases::Gen g(seed);
  std::vector<NamedLeaf> leaves{{"x", g.normal({1, 1, 3, 3}, 1.0)}};
  GradcheckOptions opt;
  opt.analytic_double = true;
  opt.probe_seed = seed;
  return gradcheck([](auto& tape, auto& v) { return scale_with_flipped_backward(tape, v[0]); },
                   leaves, opt)
      .max_error();
}

}  // namespace cprn
