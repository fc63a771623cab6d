#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>

#include "oracles.hpp"
#include "tsbench/objective.hpp"

using namespace tsbench;
using oracle::random_matrix;

namespace {

Matrix row(std::initializer_list<double> v) {
  Matrix m(1, static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) m(0, i++) = x;
  return m;
}

Forecast point(const Matrix& m) { return Forecast{m, Matrix()}; }

}  // namespace

TEST(Metrics, IdentityIsZero) {
  Rng rng(1);
  const Matrix y = random_matrix(rng, 4, 6);
  const auto m = compute_metrics(y, y);
  EXPECT_EQ(m.mae, 0.0);
  EXPECT_EQ(m.rmse, 0.0);
  EXPECT_EQ(m.smape, 0.0);
}

TEST(Metrics, HandExample) {
  const auto m = compute_metrics(row({1, 2, 3}), row({2, 2, 5}));
  EXPECT_NEAR(m.mae, 1.0, 1e-15);
  EXPECT_NEAR(m.rmse, std::sqrt(5.0 / 3.0), 1e-15);
  EXPECT_NEAR(m.smape, (2.0 / 3.0 + 0.0 + 0.5) / 3.0 * 100.0, 1e-12);
  EXPECT_NEAR(m.rmse, 1.29099, 1e-5);
  EXPECT_NEAR(m.smape, 38.889, 1e-3);
  EXPECT_EQ(m.count, 3.0);
}

TEST(Metrics, MaskedPrefixCarriesNoWeight) {
  const auto m = compute_metrics(row({5, 5, 1, 1}), row({0, 0, 0, 0}), row({0, 0, 1, 1}));
  EXPECT_DOUBLE_EQ(m.mae, 1.0);
  EXPECT_DOUBLE_EQ(m.count, 2.0);
}

TEST(Metrics, ZeroOverZeroSmapeTermIsZero) {
  const auto m = compute_metrics(row({0, 2}), row({0, 2}));
  EXPECT_EQ(m.smape, 0.0);
  const auto n = compute_metrics(row({0, 1}), row({0, 3}));
  EXPECT_NEAR(n.smape, 100.0 * (2.0 / 2.0) / 2.0, 1e-12);
}

TEST(Metrics, MatchesDirectSummation) {
  Rng rng(42);
  for (int c = 0; c < 300; ++c) {
    const std::size_t b = 1 + rng.below(6), h = 1 + rng.below(9);
    const Matrix y = random_matrix(rng, b, h, -5, 5), p = random_matrix(rng, b, h, -5, 5);
    Matrix w = random_matrix(rng, b, h, 0, 1);
    w(0, 0) += 0.1;
    const auto m = compute_metrics(y, p, w);
    const auto r = oracle::direct_metrics(y, p, w);
    EXPECT_LE(oracle::rel_diff(m.mae, r.mae), 1e-12);
    EXPECT_LE(oracle::rel_diff(m.rmse, r.rmse), 1e-12);
    EXPECT_LE(oracle::rel_diff(m.smape, r.smape), 1e-12);
  }
}

TEST(Metrics, SmapeBoundedAndSymmetric) {
  Rng rng(7);
  for (int c = 0; c < 200; ++c) {
    const Matrix y = random_matrix(rng, 3, 5, -10, 10), p = random_matrix(rng, 3, 5, -10, 10);
    const auto a = compute_metrics(y, p), b = compute_metrics(p, y);
    EXPECT_GE(a.smape, 0.0);
    EXPECT_LE(a.smape, 200.0);
    EXPECT_DOUBLE_EQ(a.smape, b.smape);
  }
  EXPECT_NEAR(compute_metrics(row({1, -1}), row({-1, 1})).smape, 200.0, 1e-12);
}

TEST(Metrics, ScaleBehaviour) {
  Rng rng(8);
  for (int c = 0; c < 100; ++c) {
    const Matrix y = random_matrix(rng, 2, 7, -3, 3), p = random_matrix(rng, 2, 7, -3, 3);
    const double k = rng.uniform(0.1, 20.0);
    const auto a = compute_metrics(y, p), b = compute_metrics(k * y, k * p);
    EXPECT_NEAR(b.mae, k * a.mae, 1e-12 * k * a.mae + 1e-15);
    EXPECT_NEAR(b.rmse, k * a.rmse, 1e-12 * k * a.rmse + 1e-15);
    EXPECT_NEAR(b.smape, a.smape, 1e-10);
  }
}

TEST(Metrics, RejectsBadInput) {
  EXPECT_THROW(compute_metrics(row({1, 2}), row({1, 2}), row({0, 0})), Error);
  EXPECT_THROW(compute_metrics(row({1, std::nan("")}), row({1, 2})), Error);
  EXPECT_THROW(compute_metrics(row({1, 2}), row({1, 2, 3})), Error);
}

TEST(Losses, ClosedForms) {
  const Matrix y = row({1.5});
  EXPECT_NEAR(loss_value(LossKind::gll(), y, Forecast{y, row({1.0})}), 0.5 * std::log(2 * std::numbers::pi), 1e-15);
  EXPECT_NEAR(loss_value(LossKind::gll(), y, Forecast{y, row({1.0})}), 0.918939, 1e-6);
  EXPECT_NEAR(loss_value(LossKind::tweedie(1.5), row({0.0}), point(row({1.0}))), 2.0, 1e-15);
  EXPECT_EQ(loss_value(LossKind::mse(), y, point(y)), 0.0);
  EXPECT_NEAR(loss_value(LossKind::l1(), row({1, 2}), point(row({0, 4}))), 1.5, 1e-15);
  EXPECT_NEAR(loss_value(LossKind::mse(), row({1, 2}), point(row({0, 4}))), 2.5, 1e-15);
}

TEST(Losses, StationaryPoints) {
  const auto tw = loss_gradient(LossKind::tweedie(1.5), row({1.0}), point(row({1.0})));
  EXPECT_NEAR(tw.mean(0, 0), 0.0, 1e-15);
  const auto g = loss_gradient(LossKind::gll(), row({0.3}), Forecast{row({0.3}), row({2.0})});
  EXPECT_EQ(g.mean(0, 0), 0.0);
  const auto l1 = loss_gradient(LossKind::l1(), row({0.3}), point(row({0.3})));
  EXPECT_EQ(l1.mean(0, 0), 0.0);
}

TEST(Losses, DomainErrors) {
  EXPECT_THROW(loss_value(LossKind::tweedie(), row({1.0}), point(row({0.0}))), Error);
  EXPECT_THROW(loss_value(LossKind::tweedie(), row({-1.0}), point(row({1.0}))), Error);
  EXPECT_THROW(loss_value(LossKind::gll(), row({1.0}), Forecast{row({1.0}), row({0.0})}), Error);
  EXPECT_THROW(LossKind::tweedie(2.0), Error);
  EXPECT_THROW(LossKind::tweedie(1.0), Error);
}

TEST(Losses, ParseRoundTrip) {
  for (const auto& k : {LossKind::l1(), LossKind::mse(), LossKind::gll(), LossKind::tweedie(1.3)}) {
    EXPECT_EQ(parse_loss_kind(to_string(k)), k);
  }
  EXPECT_EQ(parse_loss_kind("TWEEDIE").tweedie_power, 1.5);
  EXPECT_THROW(parse_loss_kind("HUBER"), Error);
}

// Central differences of the loss in the output coordinates.
TEST(Losses, GradientsMatchFiniteDifferences) {
  Rng rng(99);
  for (const auto& kind : {LossKind::l1(), LossKind::mse(), LossKind::gll(), LossKind::tweedie(1.3)}) {
    for (int c = 0; c < 25; ++c) {
      const std::size_t b = 1 + rng.below(4), h = 1 + rng.below(5);
      const Matrix y = oracle::random_truth(rng, b, h, kind);
      Forecast out;
      out.mean = kind.type == LossType::kTweedie ? random_matrix(rng, b, h, 0.2, 3.0) : random_matrix(rng, b, h, -2, 2);
      if (kind.needs_scale()) out.scale = random_matrix(rng, b, h, 0.3, 2.0);
      Matrix w = random_matrix(rng, b, h, 0.1, 1.0);
      const Forecast g = loss_gradient(kind, y, out, &w);
      std::vector<double> flat(out.mean.data(), out.mean.data() + out.mean.size());
      std::vector<double> grad(g.mean.data(), g.mean.data() + g.mean.size());
      if (kind.needs_scale()) {
        flat.insert(flat.end(), out.scale.data(), out.scale.data() + out.scale.size());
        grad.insert(grad.end(), g.scale.data(), g.scale.data() + g.scale.size());
      }
      const auto f = [&](std::span<const double> v) {
        Forecast o = out;
        std::copy(v.begin(), v.begin() + o.mean.size(), o.mean.data());
        if (kind.needs_scale()) std::copy(v.begin() + o.mean.size(), v.end(), o.scale.data());
        return loss_value(kind, y, o, &w);
      };
      EXPECT_LE(finite_difference_check(f, flat, grad), 1e-4) << to_string(kind);
    }
  }
}

TEST(Losses, ConvexInPrediction) {
  Rng rng(5);
  for (const auto& kind : {LossKind::l1(), LossKind::mse(), LossKind::tweedie(1.5)}) {
    for (int c = 0; c < 200; ++c) {
      const double y = rng.uniform(0.1, 4.0), m = rng.uniform(0.1, 4.0);
      EXPECT_GE(loss_value(kind, row({y}), point(row({m}))), loss_value(kind, row({y}), point(row({y}))) - 1e-12);
    }
  }
}

TEST(Metrics, KindParsing) {
  EXPECT_EQ(parse_metric_kind("mae"), MetricKind::kMae);
  EXPECT_EQ(parse_metric_kind("smape"), MetricKind::kSmape);
  EXPECT_THROW(parse_metric_kind("mape"), Error);
  const MetricResult r{1, 2, 3, 4};
  EXPECT_EQ(metric_value(r, MetricKind::kRmse), 2.0);
}
