#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "cprn/ops.hpp"

namespace cprn {

struct GradcheckOptions {
  double epsilon = 1e-6;
  // Analytic gradients are taken from a 32-bit run unless this is set; the
  // numeric reference is always a 64-bit central difference at the same point.
  bool analytic_double = false;
  std::uint64_t probe_seed = 0;
  // Retry a coordinate with a smaller step when its one-sided slopes disagree
  // (a ReLU/|x| kink inside the step).
  int kink_retries = 4;
  double kink_threshold = 1e-7;
};

struct LeafError {
  std::string name;
  double max_abs_diff = 0;
  double scale = 0;
  double rel_error = 0;  // max_abs_diff / max(max|analytic|, max|numeric|, 1e-8)
};

struct GradReport {
  std::vector<LeafError> leaves;
  std::string failure;  // non-empty when a non-finite value was seen

  bool finite() const { return failure.empty(); }
  double max_error() const {
    double m = 0;
    for (const auto& l : leaves) m = std::max(m, l.rel_error);
    return finite() ? m : INFINITY;
  }
  bool passed(double tolerance) const { return finite() && max_error() < tolerance; }
};

using NamedLeaf = std::pair<std::string, Tensor<double>>;

namespace detail {

template <class T, class Build>
std::vector<Tensor<double>> analytic_grads(Build& build, const std::vector<NamedLeaf>& leaves,
                                           const Tensor<double>& probe) {
  Tape<T> tape;
  std::vector<Var<T>> vars;
  vars.reserve(leaves.size());
  for (const auto& [name, t] : leaves) vars.push_back(leaf(t.template cast<T>()));
  Var<T> out = build(tape, vars);
  Var<T> loss = dot(tape, out, probe.template cast<T>());
  tape.backward(loss);
  std::vector<Tensor<double>> grads;
  for (auto& v : vars) grads.push_back(v.grad().template cast<double>());
  return grads;
}

template <class Build>
double probe_value(Build& build, const std::vector<NamedLeaf>& leaves,
                   const Tensor<double>& probe) {
  Tape<double> tape(false);
  std::vector<Var<double>> vars;
  vars.reserve(leaves.size());
  for (const auto& [name, t] : leaves) vars.push_back(constant(t));
  Var<double> out = build(tape, vars);
  const auto o = out.value().data();
  double acc = 0;
  for (std::size_t i = 0; i < o.size(); ++i) acc += o[i] * probe[i];
  return acc;
}

}  // namespace detail

// Compares the tape's gradients of <op(leaves), r> (r a seeded random probe)
// against central finite differences, leaf by leaf.
//
// `build` is a generic callable (Tape<T>&, std::vector<Var<T>>&) -> Var<T>
// invoked with T = float or double.
template <class Build>
GradReport gradcheck(Build&& build, std::vector<NamedLeaf> leaves,
                     const GradcheckOptions& opt = {}) {
  if (!(opt.epsilon > 0)) throw ConfigError("gradcheck epsilon must be > 0");
  GradReport report;

  // Evaluate both sides at the same point: round leaves through float first.
  if (!opt.analytic_double)
    for (auto& [name, t] : leaves) t = t.template cast<float>().template cast<double>();

  for (const auto& [name, t] : leaves)
    for (std::size_t i = 0; i < t.size(); ++i)
      if (!std::isfinite(t[i])) {
        report.failure = "non-finite input " + name + "[" + std::to_string(i) + "]";
        return report;
      }

  Tensor<double> probe;
  {
    Tape<double> tape(false);
    std::vector<Var<double>> vars;
    for (const auto& [name, t] : leaves) vars.push_back(constant(t));
    const Shape os = build(tape, vars).shape();
    probe = Tensor<double>(os);
    if (os.numel() == 1) {
      probe[0] = 1.0;
    } else {
      std::mt19937_64 rng(opt.probe_seed);
      std::uniform_real_distribution<double> u(-1.0, 1.0);
      for (auto& v : probe.vec()) v = u(rng);
    }
  }

  const std::vector<Tensor<double>> analytic =
      opt.analytic_double ? detail::analytic_grads<double>(build, leaves, probe)
                          : detail::analytic_grads<float>(build, leaves, probe);

  const double f0 = detail::probe_value(build, leaves, probe);
  if (!std::isfinite(f0)) {
    report.failure = "non-finite forward value";
    return report;
  }

  for (std::size_t li = 0; li < leaves.size(); ++li) {
    const Tensor<double>& a = analytic[li];
    LeafError err;
    err.name = leaves[li].first;
    double amax = 0, nmax = 0;
    for (double v : a.data()) amax = std::max(amax, std::abs(v));
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (!std::isfinite(a[i])) {
        report.failure = "non-finite analytic gradient " + err.name + "[" + std::to_string(i) + "]";
        return report;
      }
      double& x = leaves[li].second[i];
      const double x0 = x;
      double eps = opt.epsilon;
      double numeric = 0;
      for (int attempt = 0; attempt <= opt.kink_retries; ++attempt) {
        x = x0 + eps;
        const double fp = detail::probe_value(build, leaves, probe);
        x = x0 - eps;
        const double fm = detail::probe_value(build, leaves, probe);
        x = x0;
        if (!std::isfinite(fp) || !std::isfinite(fm)) {
          report.failure =
              "non-finite perturbed forward at " + err.name + "[" + std::to_string(i) + "]";
          return report;
        }
        numeric = (fp - fm) / (2 * eps);
        const double slope_gap = std::abs((fp - f0) - (f0 - fm)) / eps;
        if (slope_gap <= opt.kink_threshold * std::max(amax, 1.0)) break;
        eps /= 16;
      }
      nmax = std::max(nmax, std::abs(numeric));
      err.max_abs_diff = std::max(err.max_abs_diff, std::abs(numeric - a[i]));
    }
    err.scale = std::max({amax, nmax, 1e-8});
    err.rel_error = err.max_abs_diff / err.scale;
    report.leaves.push_back(err);
  }
  return report;
}

}  // namespace cprn
