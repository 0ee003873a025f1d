#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "cprn/config.hpp"
#include "cprn/synthetic.hpp"
#include "cprn/train.hpp"

using namespace cprn;

namespace {

ModelConfig smoke_model(Variant v = Variant::CPRN) {
  ModelConfig c = ModelConfig::defaults(v, 2);
  c.N = 2;
  c.M = v == Variant::CPRN_S ? 2 : 4;
  c.sc = 8;
  c.dc = 16;
  return c;
}

TrainConfig quick(long steps) {
  TrainConfig t;
  t.learning_rate = 1e-3;
  t.beta2 = 0.9;
  t.weight_decay = 0;
  t.batch_size = 2;
  t.patch_size = 16;
  t.patches_per_image = 3;
  t.epochs = 1000;
  t.max_steps = steps;
  t.seed = 5;
  return t;
}

TrainData small_data(int count = 2, int size = 40) {
  TrainData d;
  d.scale = 2;
  for (int i = 0; i < count; ++i) d.add("img" + std::to_string(i), synthetic_image(size, size, 30 + i));
  return d;
}

}  // namespace

TEST(Adam, ZeroGradientIsNullUpdate) {
  ParamStore<float> store(1);
  store.gaussian("w", {2, 2, 3, 3}, 18.0);
  store.filled("b", ParamKind::bias, {2, 1, 1, 1}, 0.3f);
  const auto before = store.find("w")->var.value();
  auto st = OptimizerState<float>::zeros_like(store);
  TrainConfig cfg;
  cfg.weight_decay = 0;
  store.zero_grad();
  adam_step(store, st, cfg);
  EXPECT_EQ(store.find("w")->var.value(), before);
  EXPECT_EQ(store.find("b")->var.value()[0], 0.3f);
  EXPECT_EQ(st.step, 1u);
}

TEST(Adam, FirstStepMovesBySignTimesRate) {
  ParamStore<double> store(1);
  store.filled("w", ParamKind::weight, {1, 1, 1, 4}, 1.0);
  auto& g = store.find("w")->var.grad();
  g.vec() = {3.0, -0.5, 1e-3, -200.0};
  auto st = OptimizerState<double>::zeros_like(store);
  TrainConfig cfg;
  cfg.weight_decay = 0;
  cfg.epsilon = 1e-12;
  adam_step(store, st, cfg);
  const auto& w = store.find("w")->var.value();
  const double sign[] = {1, -1, 1, -1};
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(w[i], 1.0 - cfg.learning_rate * sign[i], 1e-12);
}

TEST(Adam, EqualGradientsUpdateIdentically) {
  ParamStore<float> store(1);
  store.filled("a", ParamKind::weight, {1, 1, 2, 2}, 0.7f);
  store.filled("b", ParamKind::weight, {1, 1, 2, 2}, 0.7f);
  auto st = OptimizerState<float>::zeros_like(store);
  TrainConfig cfg;
  for (int k = 0; k < 5; ++k) {
    for (const char* n : {"a", "b"}) store.find(n)->var.grad().vec() = {0.1f, -0.2f, 0.3f, 0.f};
    adam_step(store, st, cfg);
  }
  EXPECT_EQ(store.find("a")->var.value(), store.find("b")->var.value());
}

TEST(Adam, DecayOnlyTouchesWeights) {
  ParamStore<double> store(1);
  store.filled("w", ParamKind::weight, {1, 1, 1, 1}, 2.0);
  store.filled("b", ParamKind::bias, {1, 1, 1, 1}, 2.0);
  store.filled("s", ParamKind::slope, {1, 1, 1, 1}, 2.0);
  auto st = OptimizerState<double>::zeros_like(store);
  TrainConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.weight_decay = 0.5;
  store.zero_grad();
  adam_step(store, st, cfg);
  EXPECT_DOUBLE_EQ(store.find("w")->var.value()[0], 2.0 - 0.1 * 0.5 * 2.0);
  EXPECT_EQ(store.find("b")->var.value()[0], 2.0);
  EXPECT_EQ(store.find("s")->var.value()[0], 2.0);
}

TEST(Adam, NonFiniteGradientNamesParameter) {
  ParamStore<float> store(1);
  store.gaussian("deep.entry.weight", {1, 1, 1, 2}, 1.0);
  store.find("deep.entry.weight")->var.grad()[1] = std::numeric_limits<float>::quiet_NaN();
  auto st = OptimizerState<float>::zeros_like(store);
  const auto before = store.find("deep.entry.weight")->var.value();
  try {
    adam_step(store, st, TrainConfig{});
    FAIL();
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("deep.entry.weight"), std::string::npos);
  }
  EXPECT_EQ(store.find("deep.entry.weight")->var.value(), before);
  EXPECT_EQ(st.step, 0u);
}

TEST(Trainer, LossTrendsDownOnRepeatedPatch) {
  Model<float> m(smoke_model(), 3);
  TrainData d;
  d.scale = 2;
  d.add("one", synthetic_image(24, 24, 7));
  TrainConfig cfg = quick(200);
  cfg.batch_size = 1;
  cfg.patch_size = 24;
  cfg.patches_per_image = 1;
  Trainer t(m, d, cfg);
  t.run();
  const auto& h = t.history();
  ASSERT_EQ(h.size(), 200u);
  const double first = h.front().loss;
  EXPECT_LT(h.back().loss, first);
  std::vector<double> windows;
  for (std::size_t w = 0; w < 10; ++w) {
    double acc = 0;
    for (std::size_t i = 0; i < 20; ++i) acc += h[w * 20 + i].loss;
    windows.push_back(acc / 20);
  }
  for (std::size_t w = 1; w < windows.size(); ++w) EXPECT_LT(windows[w], windows[0]);
  EXPECT_LT(windows.back(), 0.5 * windows.front());
}

TEST(Trainer, BatchClampedWithWarning) {
  Model<float> m(smoke_model(), 1);
  const auto d = small_data(2, 32);
  TrainConfig cfg = quick(1);
  cfg.batch_size = 16;
  cfg.patches_per_image = 4;
  Trainer t(m, d, cfg);
  t.run();
  ASSERT_EQ(t.warnings().size(), 1u);
  EXPECT_NE(t.warnings()[0].find("batches of 8"), std::string::npos) << t.warnings()[0];
  EXPECT_EQ(t.state().epoch, 1u);
}

TEST(Trainer, EpochsConsumeEveryPatch) {
  Model<float> m(smoke_model(), 1);
  const auto d = small_data(2, 32);
  TrainConfig cfg = quick(0);
  cfg.epochs = 2;
  cfg.batch_size = 4;
  cfg.patches_per_image = 5;  // 10 patches: batches of 4, 4, 2
  Trainer t(m, d, cfg);
  t.run();
  EXPECT_EQ(t.step(), 6u);
  EXPECT_TRUE(t.finished());
  EXPECT_EQ(t.history()[2].epoch, 0u);
  EXPECT_EQ(t.history()[3].epoch, 1u);
}

TEST(Trainer, ScaleMismatchRejected) {
  Model<float> m(smoke_model(), 1);
  TrainData d;
  d.scale = 4;
  d.add("x", synthetic_image(32, 32, 1));
  EXPECT_THROW(Trainer(m, d, quick(1)), ConfigError);
}

TEST(Trainer, ResumeIsBitExact) {
  const auto d = small_data(2, 36);
  const TrainConfig cfg = quick(10);

  Model<float> straight(smoke_model(Variant::CPRN_S), 9);
  Trainer a(straight, d, cfg);
  a.run();

  Model<float> first(smoke_model(Variant::CPRN_S), 9);
  Trainer b(first, d, cfg);
  b.run(5);
  const auto bytes = b.checkpoint_bytes();

  auto loaded = decode_checkpoint(bytes);
  Trainer c(loaded.model, d, cfg);
  c.restore(*loaded.meta.optimizer, loaded.meta.state);
  c.run();

  ASSERT_EQ(c.step(), 10u);
  EXPECT_EQ(c.history().back().loss, a.history().back().loss);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(c.history()[i].loss, a.history()[5 + i].loss);
  EXPECT_EQ(c.checkpoint_bytes(), a.checkpoint_bytes());
}

TEST(Trainer, LossCsvFormat) {
  const std::string csv = write_loss_csv({{1, 0, 0.25, 1e-4, 12.5}, {2, 0, 0.125, 1e-4, 20.0}});
  EXPECT_EQ(csv, "step,epoch,loss,learning_rate,wall_ms\n1,0,0.25,0.0001,12.5\n2,0,0.125,0.0001,20.0\n");
}

TEST(Config, DefaultsNeedOnlyManifest) {
  EXPECT_THROW(run_config_from_json(json::object()), ConfigError);
  const auto r = run_config_from_json({{"data", {{"manifest", "m.txt"}}}});
  EXPECT_EQ(r.model.N, 6);
  EXPECT_EQ(r.model.M, 16);
  EXPECT_EQ(r.train.learning_rate, 1e-4);
  EXPECT_EQ(r.train.batch_size, 16);
  EXPECT_EQ(r.train.epochs, 300);
  EXPECT_EQ(r.train.weight_decay, 1e-4);
  EXPECT_EQ(r.train.patch_size, 48);
}

TEST(Config, UnknownKeysRejected) {
  try {
    run_config_from_json({{"data", {{"manifest", "m"}}}, {"model", {{"NN", 3}}}});
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("model.NN"), std::string::npos) << e.what();
  }
  EXPECT_THROW(run_config_from_json({{"data", {{"manifest", "m"}}}, {"extra", 1}}), ConfigError);
  EXPECT_THROW(run_config_from_json({{"data", {{"manifest", "m"}}}, {"train", {{"lr", 1}}}}),
               ConfigError);
}

TEST(Config, OverridesAndRoundTrip) {
  json doc = {{"data", {{"manifest", "m.txt"}}}};
  apply_override(doc, "model.M=6");
  apply_override(doc, "model.variant=CPRN_S");
  apply_override(doc, "train.learning_rate=0.001");
  const auto r = run_config_from_json(doc);
  EXPECT_EQ(r.model.variant, Variant::CPRN_S);
  EXPECT_EQ(r.model.M, 6);
  EXPECT_EQ(r.train.learning_rate, 1e-3);
  const auto again = run_config_from_json(to_json(r));
  EXPECT_TRUE(again.model == r.model);
  EXPECT_TRUE(again.train == r.train);
  EXPECT_EQ(again.manifest, r.manifest);
  EXPECT_EQ(to_json(again), to_json(r));
  EXPECT_THROW(apply_override(doc, "novalue"), ConfigError);
  json bad = doc;
  apply_override(bad, "model.variant=CPRN_X");
  EXPECT_THROW(run_config_from_json(bad), ConfigError);
  apply_override(doc, "model.M=9");
  EXPECT_THROW(run_config_from_json(doc), ConfigError);
}
