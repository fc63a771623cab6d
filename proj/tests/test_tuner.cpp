#include <gtest/gtest.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <thread>

#include "tsbench/tuner.hpp"

using namespace tsbench;

namespace {

HyperparameterSpace quadratic_space() {
  HyperparameterSpace s;
  s.add_uniform("x", 0.0, 1.0);
  return s;
}

TrialExecutor quadratic() {
  return [](const nlohmann::json& l, std::size_t) { return TrialResult{std::pow(l["x"].get<double>() - 0.3, 2), {}}; };
}

double branin(double x, double y) {
  const double pi = std::numbers::pi;
  const double b = 5.1 / (4 * pi * pi), c = 5 / pi, t = 1 / (8 * pi);
  return std::pow(y - b * x * x + c * x - 6, 2) + 10 * (1 - t) * std::cos(x) + 10;
}

double best_of(const HyperparameterSpace& space, const TrialExecutor& ex, SearchStrategy strat, std::uint64_t seed,
               std::size_t n = 50) {
  SweepOptions o;
  o.strategy = strat;
  o.budget = Budget::trial_count(n);
  o.seed = seed;
  return run_sweep(space, ex, o).best_objective;
}

HyperparameterSpace mixed_space() {
  HyperparameterSpace s;
  s.add_categorical("lookback", {24, 48, 96});
  s.add_log_uniform("lr", 1e-5, 1e-2);
  s.add_uniform("dropout", 0.0, 0.5, DimensionGroup::kModel);
  s.add_bool("ema");
  return s;
}

}  // namespace

TEST(Space, SingletonCategorical) {
  HyperparameterSpace s;
  s.add_categorical("k", {"a"});
  for (std::size_t i = 0; i < 20; ++i) EXPECT_EQ(sample_random(s, 3, i)["k"], "a");
}

TEST(Space, InvalidDimensions) {
  HyperparameterSpace s;
  EXPECT_THROW(s.add_uniform("x", 1.0, 1.0), Error);
  EXPECT_THROW(s.add_log_uniform("x", 0.0, 1.0), Error);
  s.add_uniform("x", 0.0, 1.0);
  EXPECT_THROW(s.add_bool("x"), Error);
  EXPECT_THROW(s.add_categorical("y", {}), Error);
}

TEST(Space, ParseAndMembership) {
  const auto d = HyperparameterSpace::parse_dimension("lr", {{"type", "log_uniform"}, {"low", 1e-4}, {"high", 1e-2}},
                                                      DimensionGroup::kPipeline);
  EXPECT_EQ(d.kind, DimensionKind::kLogUniform);
  EXPECT_TRUE(HyperparameterSpace::contains(d, 1e-3));
  EXPECT_FALSE(HyperparameterSpace::contains(d, 1.0));
  EXPECT_EQ(HyperparameterSpace::dimension_json(d)["type"], "log_uniform");
  EXPECT_THROW(HyperparameterSpace::parse_dimension("z", {{"type", "gaussian"}}, DimensionGroup::kModel), Error);
}

TEST(Random, LogUniformThirds) {
  HyperparameterSpace s;
  s.add_log_uniform("lr", 1e-5, 1e-2);
  std::array<int, 3> bins{};
  for (std::size_t i = 0; i < 10000; ++i) {
    const double v = std::log10(sample_random(s, 99, i)["lr"].get<double>());
    ASSERT_GE(v, -5.0);
    ASSERT_LE(v, -2.0);
    ++bins[std::min(2, static_cast<int>(v + 5.0))];
  }
  for (int b : bins) EXPECT_NEAR(b / 10000.0, 1.0 / 3.0, 0.02);
}

TEST(Random, PureFunctionOfSeedAndIndex) {
  const auto s = mixed_space();
  for (std::size_t i = 0; i < 10; ++i) {
    EXPECT_EQ(sample_random(s, 5, i), sample_random(s, 5, i));
    for (const auto& d : s.dimensions()) EXPECT_TRUE(HyperparameterSpace::contains(d, sample_random(s, 5, i)[d.name]));
  }
  EXPECT_NE(sample_random(s, 5, 0), sample_random(s, 6, 0));
}

TEST(Tpe, DegenerateHistoryFallsBackToRandom) {
  const auto s = quadratic_space();
  std::vector<Trial> hist;
  for (std::size_t i = 0; i < 20; ++i) {
    Trial t;
    t.index = i;
    t.lambda = sample_random(s, 1, i);
    t.objective = 1.0;
    hist.push_back(t);
  }
  EXPECT_EQ(sample_tpe(s, hist, 1), sample_random(s, 1, hist.size()));
}

TEST(Tpe, QuadraticOptimumFound) {
  int hits = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    SweepOptions o;
    o.strategy = SearchStrategy::kTpe;
    o.budget = Budget::trial_count(50);
    o.seed = seed;
    const auto r = run_sweep(quadratic_space(), quadratic(), o);
    if (std::fabs(r.lambda_top["x"].get<double>() - 0.3) <= 0.05) ++hits;
  }
  EXPECT_GE(hits, 18);
}

TEST(Tpe, MedianNoWorseThanRandom) {
  HyperparameterSpace b;
  b.add_uniform("x", -5, 10).add_uniform("y", 0, 15);
  const TrialExecutor br = [](const nlohmann::json& l, std::size_t) {
    return TrialResult{branin(l["x"].get<double>(), l["y"].get<double>()), {}};
  };
  for (const auto& [space, ex] : {std::pair{quadratic_space(), quadratic()}, std::pair{b, br}}) {
    std::vector<double> tpe, rnd;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      tpe.push_back(best_of(space, ex, SearchStrategy::kTpe, seed));
      rnd.push_back(best_of(space, ex, SearchStrategy::kRandom, seed));
    }
    std::nth_element(tpe.begin(), tpe.begin() + 10, tpe.end());
    std::nth_element(rnd.begin(), rnd.begin() + 10, rnd.end());
    EXPECT_LE(tpe[10], rnd[10]);
  }
}

TEST(Tpe, PrefersDominantCategory) {
  HyperparameterSpace s;
  s.add_categorical("c", {"a", "b", "c", "d"});
  std::vector<Trial> hist;
  for (std::size_t i = 0; i < 40; ++i) {
    Trial t;
    t.index = i;
    t.lambda = {{"c", std::string(1, char('a' + i % 4))}};
    t.objective = i % 4 == 0 ? 0.1 : 1.0 + 0.01 * double(i);
    hist.push_back(t);
  }
  int a = 0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) a += sample_tpe(s, hist, seed)["c"] == "a";
  EXPECT_GT(a, 250);
}

TEST(Sweep, TrialBudgetExact) {
  for (std::size_t n : {1u, 8u, 50u}) {
    SweepOptions o;
    o.budget = Budget::trial_count(n);
    o.seed = 4;
    std::size_t calls = 0;
    const auto r = run_sweep(mixed_space(), [&](const nlohmann::json&, std::size_t i) {
      ++calls;
      return TrialResult{double(i % 7), {}};
    }, o);
    EXPECT_EQ(r.trials.size(), n);
    EXPECT_EQ(calls, n);
  }
}

TEST(Sweep, ArgminIsExhaustiveMinimum) {
  SweepOptions o;
  o.budget = Budget::trial_count(30);
  o.seed = 8;
  const auto r = run_sweep(mixed_space(), [](const nlohmann::json& l, std::size_t) {
    if (l["ema"].get<bool>()) throw std::runtime_error("boom");
    return TrialResult{l["dropout"].get<double>(), {}};
  }, o);
  double best = INFINITY;
  for (const auto& t : r.trials)
    if (t.status == TrialStatus::kOk) best = std::min(best, t.objective);
  EXPECT_EQ(r.best_objective, best);
  EXPECT_EQ(r.trials[r.best_index].lambda, r.lambda_top);
}

TEST(Sweep, AllFailedIsSweepFailed) {
  SweepOptions o;
  o.budget = Budget::trial_count(3);
  try {
    run_sweep(quadratic_space(), [](const nlohmann::json&, std::size_t) -> TrialResult { throw std::runtime_error("nan loss"); }, o);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kSweepFailed);
    EXPECT_NE(std::string(e.what()).find("nan loss"), std::string::npos);
  }
}

TEST(Sweep, EmptySpaceIsNothingToTune) {
  try {
    run_sweep(HyperparameterSpace{}, quadratic(), SweepOptions{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("nothing to tune"), std::string::npos);
  }
}

TEST(Sweep, FailuresDoNotPerturbSampling) {
  SweepOptions o;
  o.budget = Budget::trial_count(12);
  o.seed = 21;
  const auto clean = run_sweep(mixed_space(), [](const nlohmann::json&, std::size_t) { return TrialResult{1.0, {}}; }, o);
  const auto faulty = run_sweep(mixed_space(), [](const nlohmann::json&, std::size_t i) {
    if (i % 3 == 1) throw std::runtime_error("diverged");
    return TrialResult{1.0, {}};
  }, o);
  for (std::size_t i = 0; i < 12; ++i) {
    EXPECT_EQ(clean.trials[i].lambda, faulty.trials[i].lambda);
    EXPECT_EQ(faulty.trials[i].status, i % 3 == 1 ? TrialStatus::kFailed : TrialStatus::kOk);
  }
}

TEST(Sweep, ResumeMatchesUninterrupted) {
  auto ex = [](const nlohmann::json& l, std::size_t) { return TrialResult{l["lr"].get<double>(), {}}; };
  SweepOptions o;
  o.budget = Budget::trial_count(8);
  o.seed = 13;
  const auto full = run_sweep(mixed_space(), ex, o);
  SweepOptions first = o;
  first.budget = Budget::trial_count(5);
  const auto head = run_sweep(mixed_space(), ex, first);
  SweepOptions rest = o;
  for (const auto& t : head.trials) rest.completed.push_back(trial_from_json(to_json(t)));
  std::size_t fresh = 0;
  rest.on_trial = [&](const Trial&) { ++fresh; };
  const auto resumed = run_sweep(mixed_space(), ex, rest);
  EXPECT_EQ(fresh, 3u);
  ASSERT_EQ(resumed.trials.size(), 8u);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(to_json(resumed.trials[i]).dump(), to_json(full.trials[i]).dump());
  EXPECT_EQ(resumed.lambda_top, full.lambda_top);
}

TEST(Sweep, ParallelRandomMatchesSequential) {
  auto ex = [](const nlohmann::json& l, std::size_t i) {
    std::this_thread::sleep_for(std::chrono::milliseconds((i * 7) % 5));
    return TrialResult{l["dropout"].get<double>(), {}};
  };
  SweepOptions o;
  o.budget = Budget::trial_count(16);
  o.seed = 2;
  const auto seq = run_sweep(mixed_space(), ex, o);
  o.jobs = 4;
  std::vector<std::size_t> order;
  o.on_trial = [&](const Trial& t) { order.push_back(t.index); };
  const auto par = run_sweep(mixed_space(), ex, o);
  for (std::size_t i = 0; i < 16; ++i) {
    EXPECT_EQ(order[i], i);
    EXPECT_EQ(to_json(seq.trials[i]).dump(), to_json(par.trials[i]).dump());
  }
}

TEST(Sweep, WallClockNeverStartsLate) {
  SweepOptions o;
  o.budget = Budget::wall_clock(0.2);
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<double> starts;
  const auto r = run_sweep(quadratic_space(), [&](const nlohmann::json& l, std::size_t) {
    starts.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    std::this_thread::sleep_for(std::chrono::milliseconds(30));
    return TrialResult{l["x"].get<double>(), {}};
  }, o);
  EXPECT_GE(r.trials.size(), 2u);
  for (double s : starts) EXPECT_LT(s, 0.2);
}

TEST(Trials, JsonOmitsWallTime) {
  Trial t;
  t.index = 3;
  t.lambda = {{"x", 0.5}};
  t.objective = 0.25;
  t.wall_time_seconds = 12.0;
  const auto j = to_json(t);
  EXPECT_FALSE(j.dump().find("wall") != std::string::npos);
  const auto back = trial_from_json(j);
  EXPECT_EQ(back.index, 3u);
  EXPECT_EQ(back.objective, 0.25);
  EXPECT_EQ(back.lambda, t.lambda);
}
