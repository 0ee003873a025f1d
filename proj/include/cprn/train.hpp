#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cprn/checkpoint.hpp"
#include "cprn/dataset.hpp"
#include "cprn/model.hpp"
#include "cprn/optim.hpp"

namespace cprn {

struct LossRecord {
  std::uint64_t step = 0;
  std::uint64_t epoch = 0;
  double loss = 0;
  double learning_rate = 0;
  double wall_ms = 0;
};

// HR training images and their bicubic LR counterparts.
struct TrainData {
  int scale = 2;
  std::vector<std::string> ids;
  std::vector<GrayImage> hr;
  std::vector<GrayImage> lr;

  void add(std::string id, GrayImage img) {
    lr.push_back(bicubic_resize(img, 1.0 / scale));
    hr.push_back(std::move(img));
    ids.push_back(std::move(id));
  }

  static TrainData from_paths(const std::vector<std::string>& paths, int scale) {
    TrainData d;
    d.scale = scale;
    for (const auto& p : paths) d.add(p, load_pgm(p));
    return d;
  }
};

inline std::string write_loss_csv(const std::vector<LossRecord>& history) {
  std::ostringstream os;
  os << "step,epoch,loss,learning_rate,wall_ms\n";
  char buf[160];
  for (const auto& r : history) {
    std::snprintf(buf, sizeof buf, "%llu,%llu,%.9g,%.6g,%.1f\n",
                  static_cast<unsigned long long>(r.step),
                  static_cast<unsigned long long>(r.epoch), r.loss, r.learning_rate, r.wall_ms);
    os << buf;
  }
  return os.str();
}

// Deterministic L1 + Adam loop. Each epoch draws `patches_per_image` aligned
// patches from every training image with the run's sampler engine, shuffles
// them, and consumes them in batches.
class Trainer {
 public:
  using StepHook = std::function<void(const Trainer&)>;

  // Holds references to model and data; both must outlive the trainer.
  Trainer(Model<float>& model, const TrainData& data, const TrainConfig& cfg)
      : model_(model), data_(data), cfg_(cfg), rng_(cfg.seed) {
    cfg_.validate();
    if (data_.hr.empty()) throw ConfigError("training needs at least one image");
    if (data_.scale != model_.scale())
      throw ConfigError("training data scale " + std::to_string(data_.scale) +
                        " does not match model scale " + std::to_string(model_.scale()));
    optim_ = OptimizerState<float>::zeros_like(model_.params());
    state_.epoch_rng = engine_state();
  }

  // Continue from a checkpointed optimizer and position.
  void restore(const OptimizerState<float>& optim, const TrainingState& state) {
    if (optim.m.size() != model_.params().size())
      throw UsageError("optimizer state does not match the model");
    optim_ = optim;
    state_ = state;
    std::istringstream is(state_.epoch_rng);
    is >> rng_;
    if (!is) throw CheckpointError("checkpoint sampler state is malformed");
    pool_.clear();
  }

  Trainer(Model<float>&, TrainData&&, const TrainConfig&) = delete;

  const TrainConfig& config() const { return cfg_; }
  const TrainingState& state() const { return state_; }
  const OptimizerState<float>& optimizer() const { return optim_; }
  const std::vector<LossRecord>& history() const { return history_; }
  const std::vector<std::string>& warnings() const { return warnings_; }
  std::uint64_t step() const { return state_.step; }

  bool finished() const {
    if (cfg_.max_steps > 0 && state_.step >= static_cast<std::uint64_t>(cfg_.max_steps))
      return true;
    return state_.epoch >= static_cast<std::uint64_t>(cfg_.epochs);
  }

  // Runs until the configured budget is spent, or until `stop_at_step`
  // total steps when non-zero. `on_step` runs after every optimizer step.
  void run(std::uint64_t stop_at_step = 0, const StepHook& on_step = {}) {
    const auto t0 = std::chrono::steady_clock::now();
    while (!finished() && (stop_at_step == 0 || state_.step < stop_at_step)) {
      if (pool_.empty()) begin_epoch();
      const std::size_t batch = batch_size();
      const std::size_t first = state_.in_epoch * batch;
      if (first >= pool_.size()) {
        end_epoch();
        continue;
      }
      const std::size_t count = std::min(batch, pool_.size() - first);
      const double loss = train_batch(first, count);
      state_.in_epoch += 1;
      const double ms =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      history_.push_back({state_.step, state_.epoch, loss, cfg_.learning_rate, ms});
      if (on_step) on_step(*this);
      if (first + count >= pool_.size()) end_epoch();
    }
  }

  std::vector<unsigned char> checkpoint_bytes(const RunConfig* run = nullptr) const {
    return encode_checkpoint(model_, &optim_, state_, run);
  }

 private:
  std::string engine_state() const {
    std::ostringstream os;
    os << rng_;
    return os.str();
  }

  std::size_t batch_size() {
    const auto b = static_cast<std::size_t>(cfg_.batch_size);
    if (b > pool_.size()) {
      if (!warned_clamp_) {
        warnings_.push_back("batch size " + std::to_string(b) + " exceeds the " +
                            std::to_string(pool_.size()) +
                            " available patches; using batches of " +
                            std::to_string(pool_.size()));
        warned_clamp_ = true;
      }
      return pool_.size();
    }
    return b;
  }

  void begin_epoch() {
    std::istringstream is(state_.epoch_rng);
    is >> rng_;
    pool_.clear();
    for (std::size_t i = 0; i < data_.hr.size(); ++i) {
      PatchBatch b = sample_patches(data_.hr[i], data_.lr[i], data_.scale, cfg_.patch_size,
                                    cfg_.patches_per_image, rng_);
      for (auto& w : b.warnings) {
        if (!warned_skip_) warnings_.push_back(data_.ids[i] + ": " + w);
      }
      for (auto& p : b.pairs) pool_.push_back(std::move(p));
    }
    if (pool_.empty())
      throw ConfigError("no training image is large enough for patch size " +
                        std::to_string(cfg_.patch_size));
    warned_skip_ = true;
    std::shuffle(pool_.begin(), pool_.end(), rng_);
  }

  void end_epoch() {
    state_.epoch += 1;
    state_.in_epoch = 0;
    state_.epoch_rng = engine_state();
    pool_.clear();
  }

  double train_batch(std::size_t first, std::size_t count) {
    const int lp = pool_[first].lr.h, hp = pool_[first].hr.h;
    Tensor<float> lr({static_cast<int>(count), 1, lp, lp});
    Tensor<float> hr({static_cast<int>(count), 1, hp, hp});
    for (std::size_t i = 0; i < count; ++i) {
      const PatchPair& p = pool_[first + i];
      std::copy(p.lr.pixels.begin(), p.lr.pixels.end(), &lr.at(static_cast<int>(i), 0, 0, 0));
      std::copy(p.hr.pixels.begin(), p.hr.pixels.end(), &hr.at(static_cast<int>(i), 0, 0, 0));
    }
    model_.params().zero_grad();
    Tape<float> tape;
    auto out = model_.forward(tape, constant(std::move(lr)));
    Var<float> loss = l1_loss(tape, out.sr, constant(std::move(hr)));
    const double value = loss.value()[0];
    if (!std::isfinite(value))
      throw NumericalError("loss became non-finite at step " + std::to_string(state_.step + 1));
    tape.backward(loss);
    adam_step(model_.params(), optim_, cfg_);
    state_.step += 1;
    return value;
  }

  Model<float>& model_;
  const TrainData& data_;
  TrainConfig cfg_;
  std::mt19937_64 rng_;
  OptimizerState<float> optim_;
  TrainingState state_;
  std::vector<PatchPair> pool_;
  std::vector<LossRecord> history_;
  std::vector<std::string> warnings_;
  bool warned_clamp_ = false;
  bool warned_skip_ = false;
};

}  // namespace cprn
