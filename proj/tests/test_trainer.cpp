#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "tsbench/pipeline.hpp"
#include "tsbench/trainer.hpp"

using namespace tsbench;

namespace {

// Sinusoids obey y_t = 2 cos(w) y_{t-1} - y_{t-2}, so a linear map of the
// lookback forecasts them exactly.
PreparedData sine_data(std::size_t n_series = 6, std::size_t T = 400) {
  std::vector<Series> series;
  Rng rng(17);
  for (std::size_t i = 0; i < n_series; ++i) {
    const double amp = rng.uniform(0.5, 2.0), phase = rng.uniform(0, 6.28), level = rng.uniform(-1, 1);
    std::vector<double> v(T);
    for (std::size_t t = 0; t < T; ++t) v[t] = level + amp * std::sin(2 * std::numbers::pi * double(t) / 24.0 + phase);
    series.push_back(oracle::make_series("s" + std::to_string(i), v));
  }
  DatasetProfile p;
  p.lookback = 24;
  p.horizon = 6;
  p.transform_kind = TransformKind::kZ;
  SplitSpec split;
  split.val_steps = 48;
  split.test_steps = 48;
  return prepare_data(TimeSeriesDataset(series, p), p, split, true);
}

TrainConfig quick_config() {
  TrainConfig c;
  c.loss = LossKind::mse();
  c.learning_rate = 1e-2;
  c.batch_size = 32;
  c.max_epochs = 5;
  c.patience = 3;
  c.seed = 5;
  return c;
}

}  // namespace

TEST(EarlyStop, HandTrace) {
  EarlyStopper s(2);
  EXPECT_FALSE(s.observe(3.0));
  EXPECT_FALSE(s.observe(2.0));
  EXPECT_FALSE(s.observe(2.1));
  EXPECT_TRUE(s.observe(2.2));
  EXPECT_EQ(s.epochs(), 4u);
  EXPECT_EQ(s.best_epoch(), 2u);
  EXPECT_EQ(s.best(), 2.0);
}

TEST(EarlyStop, TiesAreNotImprovements) {
  EarlyStopper s(1);
  EXPECT_FALSE(s.observe(1.0));
  EXPECT_TRUE(s.observe(1.0));
  EXPECT_EQ(s.best_epoch(), 1u);
  EXPECT_THROW(EarlyStopper(0), Error);
}

TEST(Ema, OneStepArithmetic) {
  std::vector<double> ema{0.0};
  ema_update(ema, {1.0}, 0.9);
  EXPECT_NEAR(ema[0], 0.1, 1e-16);
  std::vector<double> same{0.4, -2.0};
  ema_update(same, {0.4, -2.0}, 0.99);
  EXPECT_EQ(same, (std::vector<double>{0.4, -2.0}));
  std::vector<double> track{5.0};
  ema_update(track, {-3.0}, 0.0);
  EXPECT_EQ(track[0], -3.0);
  EXPECT_THROW(ema_update(track, {1.0, 2.0}, 0.5), Error);
}

TEST(Ema, StaysInsideEnvelope) {
  Rng rng(2);
  for (int c = 0; c < 50; ++c) {
    const double decay = rng.uniform(0.0, 1.0);
    std::vector<double> ema{rng.normal()};
    double lo = ema[0], hi = ema[0];
    for (int s = 0; s < 100; ++s) {
      const double x = rng.normal();
      lo = std::min(lo, x);
      hi = std::max(hi, x);
      ema_update(ema, {x}, decay);
      ASSERT_GE(ema[0], lo - 1e-15);
      ASSERT_LE(ema[0], hi + 1e-15);
    }
  }
}

TEST(Curriculum, Schedule) {
  EXPECT_EQ(curriculum_horizon(0, 12, 100), 1u);
  EXPECT_EQ(curriculum_horizon(250, 12, 100), 3u);
  EXPECT_EQ(curriculum_horizon(1100, 12, 100), 12u);
  EXPECT_EQ(curriculum_horizon(1'000'000, 12, 100), 12u);
  Rng rng(3);
  for (int c = 0; c < 1000; ++c) {
    const std::uint64_t step = rng.below(100000);
    const std::size_t h = 1 + rng.below(48), cl = 1 + rng.below(500);
    EXPECT_EQ(curriculum_horizon(step, h, cl), std::min<std::uint64_t>(h, 1 + step / cl));
    EXPECT_LE(curriculum_horizon(step, h, cl), curriculum_horizon(step + 1, h, cl));
  }
}

TEST(Train, ZeroEpochsKeepsInitialWeights) {
  const auto data = sine_data(2, 200);
  auto m = build_model(ModelKind::kGlobalLinear, {}, 24, 6, LossKind::mse(), 1);
  const auto before = m->params().values();
  auto cfg = quick_config();
  cfg.max_epochs = 0;
  const auto out = train(*m, data.splits.train, data.splits.val, cfg);
  EXPECT_EQ(m->params().values(), before);
  EXPECT_EQ(out.convergence_epoch, 0u);
  EXPECT_EQ(out.epochs_run, 0u);
}

TEST(Train, GlobalLinearFitsNoiselessLinearData) {
  const auto data = sine_data();
  auto m = build_model(ModelKind::kGlobalLinear, {}, 24, 6, LossKind::mse(), 1);
  auto cfg = quick_config();
  cfg.max_epochs = 200;
  cfg.patience = 200;
  const auto out = train(*m, data.splits.train, data.splits.val, cfg);
  EXPECT_LE(out.best_val_loss, 1e-4);
  EXPECT_LE(out.epochs_run, 200u);
}

TEST(Train, ReturnedWeightsReproduceBestLoss) {
  const auto data = sine_data(3, 300);
  for (bool ema : {false, true}) {
    auto m = build_model(ModelKind::kNBeatsLite,
                         {{"stack0_hidden_size", 16}, {"stack1_hidden_size", 16}}, 24, 6, LossKind::mse(), 2);
    auto cfg = quick_config();
    cfg.ema_enabled = ema;
    cfg.ema_decay = 0.9;
    const auto out = train(*m, data.splits.train, data.splits.val, cfg);
    const auto windows = enumerate_windows(data.splits.val, 24, 6);
    EXPECT_EQ(validation_loss(*m, make_batch(data.splits.val, windows, 24, 6)), out.best_val_loss);
    EXPECT_EQ(out.params.values(), m->params().values());
    double best = INFINITY;
    for (const auto& r : out.history) best = std::min(best, r.val_loss);
    EXPECT_EQ(best, out.best_val_loss);
    EXPECT_EQ(out.history[out.convergence_epoch - 1].val_loss, best);
    EXPECT_LE(out.convergence_epoch, out.epochs_run);
    EXPECT_GT(out.wall_time_seconds, 0.0);
    for (const auto& r : out.history) EXPECT_EQ(r.ema_enabled, ema);
  }
}

TEST(Train, SeededRunsAreIdentical) {
  const auto data = sine_data(3, 300);
  auto run = [&] {
    auto m = build_model(ModelKind::kNBeatsLite,
                         {{"stack0_hidden_size", 16}, {"stack1_hidden_size", 16}, {"dropout", 0.1}}, 24, 6,
                         LossKind::l1(), 9);
    auto cfg = quick_config();
    cfg.ema_enabled = true;
    cfg.max_windows_per_epoch = 200;
    return train(*m, data.splits.train, data.splits.val, cfg);
  };
  const auto a = run(), b = run();
  EXPECT_EQ(a.params.values(), b.params.values());
  ASSERT_EQ(a.history.size(), b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    EXPECT_EQ(a.history[i].train_loss, b.history[i].train_loss);
    EXPECT_EQ(a.history[i].val_loss, b.history[i].val_loss);
  }
}

TEST(Train, CurriculumGrowsEffectiveHorizon) {
  const auto data = sine_data(2, 300);
  auto m = build_model(ModelKind::kGlobalLinear, {}, 24, 6, LossKind::mse(), 1);
  auto cfg = quick_config();
  cfg.cl_enabled = true;
  cfg.cl_step = 5;
  cfg.patience = 10;
  std::vector<std::size_t> horizons;
  train(*m, data.splits.train, data.splits.val, cfg, [&](const EpochRecord& r) { horizons.push_back(r.effective_horizon); });
  ASSERT_EQ(horizons.size(), 5u);
  EXPECT_TRUE(std::is_sorted(horizons.begin(), horizons.end()));
  EXPECT_LT(horizons.front(), 6u);
  auto plain = quick_config();
  train(*m, data.splits.train, data.splits.val, plain, [&](const EpochRecord& r) { EXPECT_EQ(r.effective_horizon, 6u); });
}

TEST(Train, NonParametricIsOnlyScored) {
  const auto data = sine_data(2, 300);
  auto m = build_model(ModelKind::kSeasonalNaive, {{"period", 24}}, 24, 6, LossKind::mse(), 1);
  const auto out = train(*m, data.splits.train, data.splits.val, quick_config());
  EXPECT_EQ(out.epochs_run, 0u);
  EXPECT_NEAR(out.best_val_loss, 0.0, 1e-20);
}

TEST(Train, DivergenceIsTrialFailure) {
  const auto data = sine_data(2, 300);
  auto m = build_model(ModelKind::kGlobalLinear, {}, 24, 6, LossKind::mse(), 1);
  m->update_params([](std::vector<double>& v) { v[0] = std::numeric_limits<double>::infinity(); });
  try {
    train(*m, data.splits.train, data.splits.val, quick_config());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kTrialFailed);
  }
}

TEST(Train, RefitOnUnionUsesConvergenceEpochs) {
  const auto data = sine_data(2, 300);
  auto m = build_model(ModelKind::kGlobalLinear, {}, 24, 6, LossKind::mse(), 1);
  auto cfg = quick_config();
  cfg.refit_on_union = true;
  const auto out = train(*m, data.splits.train, data.splits.val, cfg);
  EXPECT_GE(out.convergence_epoch, 1u);
  EXPECT_TRUE(m->params().all_finite());
}

TEST(Train, EpochLogFields) {
  const EpochRecord r{3, 0.5, 0.25, 1e-3, 4, true};
  const auto j = to_json(r);
  for (const char* k : {"epoch", "train_loss", "val_loss", "lr", "effective_horizon", "ema_enabled"})
    EXPECT_TRUE(j.contains(k)) << k;
}

TEST(TrainConfig, RejectsBadFields) {
  auto c = quick_config();
  c.patience = 0;
  EXPECT_THROW(c.validate(), Error);
  c = quick_config();
  c.learning_rate = -1;
  EXPECT_THROW(c.validate(), Error);
}
