#pragma once

#include <cstdlib>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "cprn/model.hpp"
#include "cprn/optim.hpp"

namespace cprn {

using json = nlohmann::json;

namespace detail {

inline void reject_unknown(const json& j, const std::set<std::string>& known,
                           const std::string& section) {
  if (!j.is_object()) throw ConfigError(section + " must be a JSON object");
  for (const auto& [key, value] : j.items())
    if (!known.count(key))
      throw ConfigError("unknown config key '" + (section.empty() ? key : section + "." + key) +
                        "'");
}

template <class V>
void read_key(const json& j, const char* key, V& out, const std::string& section) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<V>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + section + "." + key + "' has the wrong type");
  }
}

}  // namespace detail

inline json to_json(const ModelConfig& c) {
  return {{"variant", variant_name(c.variant)}, {"scale", c.scale},
          {"N", c.N},                           {"M", c.M},
          {"sc", c.sc},                         {"dc", c.dc},
          {"bn_shallow", c.bn_shallow},         {"bn_deep", c.bn_deep},
          {"abs_residual", c.abs_residual}};
}

// Strict: unknown keys are fatal. Missing keys take the variant's defaults.
inline ModelConfig model_config_from_json(const json& j) {
  detail::reject_unknown(j,
                         {"variant", "scale", "N", "M", "sc", "dc", "bn_shallow", "bn_deep",
                          "abs_residual"},
                         "model");
  std::string variant = "CPRN";
  detail::read_key(j, "variant", variant, "model");
  int scale = 2;
  detail::read_key(j, "scale", scale, "model");
  ModelConfig c = ModelConfig::defaults(parse_variant(variant), scale);
  detail::read_key(j, "N", c.N, "model");
  detail::read_key(j, "M", c.M, "model");
  detail::read_key(j, "sc", c.sc, "model");
  detail::read_key(j, "dc", c.dc, "model");
  detail::read_key(j, "bn_shallow", c.bn_shallow, "model");
  detail::read_key(j, "bn_deep", c.bn_deep, "model");
  detail::read_key(j, "abs_residual", c.abs_residual, "model");
  c.validate();
  return c;
}

inline json to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"epsilon", c.epsilon},
          {"weight_decay", c.weight_decay},
          {"seed", c.seed},
          {"checkpoint_interval", c.checkpoint_interval},
          {"patch_size", c.patch_size},
          {"patches_per_image", c.patches_per_image},
          {"max_steps", c.max_steps}};
}

inline TrainConfig train_config_from_json(const json& j) {
  detail::reject_unknown(j,
                         {"learning_rate", "batch_size", "epochs", "beta1", "beta2", "epsilon",
                          "weight_decay", "seed", "checkpoint_interval", "patch_size",
                          "patches_per_image", "max_steps"},
                         "train");
  TrainConfig c;
  detail::read_key(j, "learning_rate", c.learning_rate, "train");
  detail::read_key(j, "batch_size", c.batch_size, "train");
  detail::read_key(j, "epochs", c.epochs, "train");
  detail::read_key(j, "beta1", c.beta1, "train");
  detail::read_key(j, "beta2", c.beta2, "train");
  detail::read_key(j, "epsilon", c.epsilon, "train");
  detail::read_key(j, "weight_decay", c.weight_decay, "train");
  detail::read_key(j, "seed", c.seed, "train");
  detail::read_key(j, "checkpoint_interval", c.checkpoint_interval, "train");
  detail::read_key(j, "patch_size", c.patch_size, "train");
  detail::read_key(j, "patches_per_image", c.patches_per_image, "train");
  detail::read_key(j, "max_steps", c.max_steps, "train");
  c.validate();
  return c;
}

inline constexpr const char* kOutputDirEnv = "CPRN_OUTPUT_DIR";

// Everything a training run needs. Only data.manifest lacks a default.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  std::string manifest;
  double eval_fraction = 0.2;
  std::string output_dir = "runs/default";
};

inline json to_json(const RunConfig& r) {
  return {{"model", to_json(r.model)},
          {"train", to_json(r.train)},
          {"data", {{"manifest", r.manifest}, {"eval_fraction", r.eval_fraction}}},
          {"output_dir", r.output_dir}};
}

inline std::string default_output_dir() {
  const char* env = std::getenv(kOutputDirEnv);
  return env && *env ? env : "runs/default";
}

inline RunConfig run_config_from_json(const json& j) {
  detail::reject_unknown(j, {"model", "train", "data", "output_dir"}, "");
  RunConfig r;
  r.output_dir = default_output_dir();
  r.model = model_config_from_json(j.value("model", json::object()));
  r.train = train_config_from_json(j.value("train", json::object()));
  const json data = j.value("data", json::object());
  detail::reject_unknown(data, {"manifest", "eval_fraction"}, "data");
  detail::read_key(data, "manifest", r.manifest, "data");
  detail::read_key(data, "eval_fraction", r.eval_fraction, "data");
  detail::read_key(j, "output_dir", r.output_dir, "");
  if (r.manifest.empty()) throw ConfigError("config key 'data.manifest' is required");
  if (r.eval_fraction < 0 || r.eval_fraction >= 1)
    throw ConfigError("data.eval_fraction must lie in [0, 1)");
  return r;
}

// Applies "a.b=value" to a JSON document. The value is parsed as JSON when
// possible (numbers, booleans), otherwise taken as a string.
inline void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("override '" + assignment + "' is not of the form key=value");
  const std::string path = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  json* node = &doc;
  std::size_t start = 0;
  for (;;) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? dot : dot - start);
    if (key.empty()) throw ConfigError("override key '" + path + "' is malformed");
    if (!node->is_object()) *node = json::object();
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError("config file " + path + " is not valid JSON");
  return j;
}

inline RunConfig load_run_config(const std::string& path,
                                 const std::vector<std::string>& overrides = {}) {
  json j = path.empty() ? json::object() : read_json_file(path);
  for (const auto& o : overrides) apply_override(j, o);
  return run_config_from_json(j);
}

}  // namespace cprn
