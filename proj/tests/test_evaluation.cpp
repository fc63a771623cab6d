#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "tsbench/evaluation.hpp"

using namespace tsbench;
using oracle::random_matrix;

namespace {

ModelStats fake_stats(const std::string& name, std::vector<double> mae, double offset = 0.0) {
  const RunExecutor ex = [&](std::size_t run, std::uint64_t seed) {
    RunRecord r;
    r.run = run;
    r.seed = seed;
    r.metrics = {mae[run] + offset, 2 * mae[run], 10 * mae[run], 24};
    r.convergence_epoch = run + 1;
    return r;
  };
  return evaluate_k_runs(name, {mae.size(), 100, 1, VarianceKind::kPopulation}, ex);
}

nlohmann::json report_of(const ModelStats& s, const std::string& fingerprint = "abc") {
  ReportInputs in;
  in.models = {s};
  in.model_configs = {{{"ema_enabled", true}}};
  in.dataset_fingerprint = fingerprint;
  return build_report(in);
}

}  // namespace

TEST(Summarize, HandArithmetic) {
  const auto s = summarize({1, 2, 3, 4});
  EXPECT_EQ(s.mean, 2.5);
  EXPECT_EQ(s.variance, 1.25);
  EXPECT_NEAR(summarize({1, 2, 3, 4}, VarianceKind::kSample).variance, 5.0 / 3.0, 1e-15);
}

TEST(Summarize, RecomputedFromSamplesExactly) {
  Rng rng(1);
  std::vector<double> v(16);
  for (auto& x : v) x = rng.uniform(0, 3);
  const auto stats = fake_stats("m", v);
  const auto j = to_json(stats);
  const auto again = summarize(j["metrics"]["mae"]["samples"].get<std::vector<double>>());
  EXPECT_EQ(again.mean, j["metrics"]["mae"]["mean"].get<double>());
  EXPECT_EQ(again.variance, j["metrics"]["mae"]["variance"].get<double>());
}

TEST(KRuns, SeedsAndDeterministicModel) {
  std::vector<std::uint64_t> seeds;
  const RunExecutor ex = [&](std::size_t run, std::uint64_t seed) {
    seeds.push_back(seed);
    RunRecord r;
    r.run = run;
    r.metrics = {0.7, 0.9, 12.0, 1};
    return r;
  };
  const auto s = evaluate_k_runs("naive", {4, 40, 1}, ex);
  EXPECT_EQ(seeds, (std::vector<std::uint64_t>{40, 41, 42, 43}));
  EXPECT_EQ(s.k(), 4u);
  for (const char* m : {"mae", "rmse", "smape"}) EXPECT_EQ(s.metrics.at(m).variance, 0.0);
}

TEST(KRuns, FailedRunsExcludedWithWarning) {
  const RunExecutor ex = [](std::size_t run, std::uint64_t) -> RunRecord {
    if (run == 1) throw std::runtime_error("diverged");
    RunRecord r;
    r.run = run;
    r.metrics = {double(run), 1, 1, 1};
    return r;
  };
  std::vector<std::string> warnings;
  const auto s = evaluate_k_runs("m", {4, 0, 2}, ex, &warnings);
  EXPECT_EQ(s.k(), 3u);
  EXPECT_EQ(s.runs.size(), 4u);
  EXPECT_FALSE(s.runs[1].ok);
  EXPECT_EQ(warnings.size(), 1u);
  EXPECT_EQ(s.metrics.at("mae").samples, (std::vector<double>{0, 2, 3}));
  const RunExecutor all_but_one = [](std::size_t run, std::uint64_t) -> RunRecord {
    if (run != 0) throw std::runtime_error("x");
    return RunRecord{};
  };
  EXPECT_THROW(evaluate_k_runs("m", {3, 0, 1}, all_but_one), Error);
}

TEST(KRuns, ParallelMatchesSequential) {
  Rng rng(2);
  std::vector<double> v(8);
  for (auto& x : v) x = rng.uniform();
  const RunExecutor ex = [&](std::size_t run, std::uint64_t) {
    RunRecord r;
    r.run = run;
    r.metrics = {v[run], v[run], v[run], 1};
    return r;
  };
  const auto a = evaluate_k_runs("m", {8, 0, 1}, ex), b = evaluate_k_runs("m", {8, 0, 4}, ex);
  EXPECT_EQ(to_json(a).dump(), to_json(b).dump());
}

TEST(Compare, HandArithmeticT) {
  const auto c = compare(1.0, 0.04, 1.1, 0.04, 256, {0.05, Denominator::kPaper});
  EXPECT_NEAR(c.t, -0.1 / (std::sqrt(0.08) / 256.0), 1e-9);
  EXPECT_NEAR(c.t, -90.51, 0.01);
  EXPECT_EQ(c.verdict, Verdict::kM1Better);
  EXPECT_EQ(c.df, 510u);
  const auto w = compare(1.0, 0.04, 1.1, 0.04, 256, {0.05, Denominator::kWelch});
  EXPECT_NEAR(w.t, -0.1 / std::sqrt(0.08 / 256.0), 1e-9);
}

TEST(Compare, EqualMeansNoDifference) {
  const auto c = compare(0.5, 0.1, 0.5, 0.3, 16, {});
  EXPECT_EQ(c.t, 0.0);
  EXPECT_EQ(c.verdict, Verdict::kNoDifference);
}

TEST(Compare, ZeroVariances) {
  const auto a = compare(1.0, 0.0, 2.0, 0.0, 4, {});
  EXPECT_TRUE(std::isinf(a.t));
  EXPECT_LT(a.t, 0.0);
  EXPECT_EQ(a.verdict, Verdict::kM1Better);
  EXPECT_EQ(compare(2.0, 0.0, 1.0, 0.0, 4, {}).verdict, Verdict::kM2Better);
  EXPECT_EQ(compare(1.0, 0.0, 1.0, 0.0, 4, {}).verdict, Verdict::kNoDifference);
  EXPECT_EQ(to_json(a)["t"], "-inf");
}

TEST(Compare, CriticalValues) {
  EXPECT_NEAR(t_critical(0.05, 30), 2.042272, 1e-5);
  EXPECT_NEAR(t_critical(0.05, 1'000'000), 1.959966, 1e-4);
  EXPECT_GT(t_critical(0.01, 10), t_critical(0.05, 10));
  EXPECT_THROW(compare(1, 1, 1, 1, 1, {}), Error);
}

TEST(Compare, Antisymmetric) {
  Rng rng(3);
  for (int c = 0; c < 200; ++c) {
    const double m1 = rng.uniform(0, 2), m2 = rng.uniform(0, 2), v1 = rng.uniform(0, 0.5), v2 = rng.uniform(0, 0.5);
    const std::size_t k = 2 + rng.below(30);
    for (auto d : {Denominator::kPaper, Denominator::kWelch}) {
      const auto ab = compare(m1, v1, m2, v2, k, {0.05, d}), ba = compare(m2, v2, m1, v1, k, {0.05, d});
      EXPECT_EQ(ab.t, -ba.t);
      const auto mirror = ab.verdict == Verdict::kM1Better   ? Verdict::kM2Better
                          : ab.verdict == Verdict::kM2Better ? Verdict::kM1Better
                                                             : Verdict::kNoDifference;
      EXPECT_EQ(ba.verdict, mirror);
    }
  }
}

TEST(Compare, MonotoneInK) {
  Rng rng(4);
  for (int c = 0; c < 100; ++c) {
    const double m1 = rng.uniform(0, 1), m2 = rng.uniform(0, 1), v1 = rng.uniform(0.01, 1), v2 = rng.uniform(0.01, 1);
    for (auto d : {Denominator::kPaper, Denominator::kWelch}) {
      bool rejected = false;
      double last = 0.0;
      for (std::size_t k = 2; k < 60; ++k) {
        const auto r = compare(m1, v1, m2, v2, k, {0.05, d});
        EXPECT_GE(std::fabs(r.t), last);
        last = std::fabs(r.t);
        if (rejected) {
          EXPECT_NE(r.verdict, Verdict::kNoDifference);
        }
        rejected = r.verdict != Verdict::kNoDifference;
      }
    }
  }
}

TEST(Ensemble, ElementwiseMean) {
  Matrix a(1, 2), b(1, 2);
  a << 0, 2;
  b << 2, 0;
  EXPECT_EQ(ensemble_mean({a, b}), Matrix::Ones(1, 2));
  EXPECT_EQ(ensemble_mean({a}), a);
  EXPECT_EQ(ensemble_mean({a, a, a}), a);
  EXPECT_THROW(ensemble_mean({a, Matrix::Ones(2, 2)}), Error);
  EXPECT_THROW(ensemble_mean({}), Error);
}

TEST(Ensemble, JensenForMse) {
  Rng rng(5);
  for (int batch = 0; batch < 50; ++batch) {
    const std::size_t B = 1 + rng.below(8), h = 1 + rng.below(6), m = 2 + rng.below(6);
    const Matrix y = random_matrix(rng, B, h, -3, 3);
    std::vector<Matrix> members;
    double mean_member = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      members.push_back(random_matrix(rng, B, h, -3, 3));
      mean_member += (members.back() - y).squaredNorm() / double(m);
    }
    EXPECT_LE((ensemble_mean(members) - y).squaredNorm(), mean_member + 1e-12);
  }
}

TEST(Ensemble, PredictUsesMeanHead) {
  auto a = build_model(ModelKind::kGlobalLinear, {}, 3, 2, LossKind::gll(), 1);
  auto b = build_model(ModelKind::kGlobalLinear, {}, 3, 2, LossKind::gll(), 2);
  Rng rng(6);
  const Matrix enc = random_matrix(rng, 4, 3);
  const Matrix e = ensemble_predict({a.get(), b.get()}, enc);
  EXPECT_EQ(e, (a->predict(enc).mean + b->predict(enc).mean) / 2.0);
}

TEST(Report, SingleModelHasNoComparisons) {
  const auto r = report_of(fake_stats("m", {1, 2, 3, 4}));
  EXPECT_TRUE(r["comparisons"].empty());
  ASSERT_EQ(r["models"].size(), 1u);
  EXPECT_EQ(r["models"][0]["ema_enabled"], true);
  EXPECT_EQ(r["models"][0]["cl_enabled"], false);
  EXPECT_EQ(report_samples(r, "mae").samples, (std::vector<double>{1, 2, 3, 4}));
  const auto md = render_markdown(r);
  EXPECT_NE(md.find("| m |"), std::string::npos);
  EXPECT_NE(md.find("2.5"), std::string::npos);
}

TEST(Report, TwoModelsCompareUnderBothConventions) {
  ReportInputs in;
  in.models = {fake_stats("a", {1, 1.1, 0.9, 1}), fake_stats("b", {2, 2.1, 1.9, 2})};
  in.model_configs = {{}, {}};
  const auto r = build_report(in);
  ASSERT_EQ(r["comparisons"].size(), 3u);
  EXPECT_EQ(r["comparisons"][0]["paper"]["verdict"], "M1_BETTER");
  EXPECT_EQ(r["comparisons"][0]["welch"]["verdict"], "M1_BETTER");
}

TEST(Report, CompareReports) {
  const auto a = report_of(fake_stats("a", {1, 2, 3, 4}));
  const auto self = compare_reports(a, a, 0.05);
  for (const auto& row : self["comparisons"]) {
    EXPECT_EQ(row["paper"]["verdict"], "NO_DIFFERENCE");
    EXPECT_EQ(row["paper"]["t"], 0.0);
  }
  EXPECT_THROW(compare_reports(a, report_of(fake_stats("b", {1, 2, 3, 4}), "zzz"), 0.05), Error);
  EXPECT_THROW(compare_reports(a, report_of(fake_stats("b", {1, 2, 3})), 0.05), Error);
  const auto better = compare_reports(report_of(fake_stats("b", {1, 2, 3, 4}, -100.0)), a, 0.05);
  EXPECT_EQ(better["comparisons"][0]["paper"]["verdict"], "M1_BETTER");
}
