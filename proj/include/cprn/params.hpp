#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "cprn/autodiff.hpp"

namespace cprn {

enum class ParamKind {
  weight,  // conv / deconv kernels; the only kind subject to weight decay
  bias,
  slope,   // PReLU
  bn_scale,
  bn_shift,
  buffer,  // BN running statistics, not trained
};

inline bool trainable(ParamKind k) { return k != ParamKind::buffer; }

template <class T>
struct Parameter {
  std::string name;
  ParamKind kind;
  Var<T> var;
};

// FNV-1a over the seed bytes and a name; gives every parameter its own
// initialization stream so shared sub-graphs initialize identically across
// model variants.
inline std::uint64_t stream_seed(std::uint64_t seed, std::string_view name) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](unsigned char b) {
    h ^= b;
    h *= 1099511628211ull;
  };
  for (int i = 0; i < 8; ++i) mix(static_cast<unsigned char>(seed >> (8 * i)));
  for (char c : name) mix(static_cast<unsigned char>(c));
  return h;
}

// Ordered, name-unique parameter set.
template <class T>
class ParamStore {
 public:
  explicit ParamStore(std::uint64_t seed = 0) : seed_(seed) {}

  std::uint64_t seed() const { return seed_; }

  Var<T> add(const std::string& name, ParamKind kind, Tensor<T> init) {
    if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
    index_[name] = params_.size();
    Var<T> v(std::move(init), trainable(kind));
    params_.push_back({name, kind, v});
    return v;
  }

  // Weights ~ N(0, 2 / fan_in).
  Var<T> gaussian(const std::string& name, Shape shape, double fan_in) {
    Tensor<T> t(shape);
    std::mt19937_64 rng(stream_seed(seed_, name));
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
    for (auto& v : t.vec()) v = static_cast<T>(dist(rng));
    return add(name, ParamKind::weight, std::move(t));
  }

  Var<T> filled(const std::string& name, ParamKind kind, Shape shape, T value) {
    return add(name, kind, Tensor<T>(shape, value));
  }

  const std::vector<Parameter<T>>& params() const { return params_; }
  std::size_t size() const { return params_.size(); }

  const Parameter<T>* find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &params_[it->second];
  }

  void zero_grad() const {
    for (const auto& p : params_) p.var.zero_grad();
  }

  // Trainable scalar count (buffers excluded).
  std::size_t count(std::string_view prefix = {}) const {
    std::size_t n = 0;
    for (const auto& p : params_)
      if (trainable(p.kind) && std::string_view(p.name).starts_with(prefix))
        n += p.var.value().size();
    return n;
  }

 private:
  std::uint64_t seed_;
  std::vector<Parameter<T>> params_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace cprn
