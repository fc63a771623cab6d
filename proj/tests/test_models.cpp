#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "oracles.hpp"
#include "tsbench/models.hpp"

using namespace tsbench;
using oracle::random_matrix;

namespace {

Matrix row(std::initializer_list<double> v) {
  Matrix m(1, static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) m(0, i++) = x;
  return m;
}

nlohmann::json small_nbeats(const std::string& t0 = "TREND", const std::string& t1 = "SEASONALITY") {
  return {{"stack0_type", t0}, {"stack1_type", t1}, {"stack0_hidden_size", 16}, {"stack1_hidden_size", 16},
          {"stack0_theta_dim", 4}, {"stack1_theta_dim", 4}};
}

void zero_params(Forecaster& m) {
  m.update_params([](std::vector<double>& v) { std::fill(v.begin(), v.end(), 0.0); });
}

}  // namespace

TEST(SeasonalNaive, RepeatsLastSeason) {
  SeasonalNaive m(6, 3, 3, LossKind::mse());
  EXPECT_EQ(m.predict(row({1, 2, 3, 1, 2, 3})).mean, row({1, 2, 3}));
  EXPECT_FALSE(m.parametric());
  EXPECT_TRUE(m.params().empty());
  SeasonalNaive naive(4, 5, 1, LossKind::mse());
  EXPECT_EQ(naive.predict(row({9, 8, 7, 6})).mean, row({6, 6, 6, 6, 6}));
  SeasonalNaive wrap(4, 5, 2, LossKind::mse());
  EXPECT_EQ(wrap.predict(row({0, 0, 4, 5})).mean, row({4, 5, 4, 5, 4}));
}

TEST(SeasonalNaive, PeriodicSeriesIsExact) {
  Matrix enc(10, 48);
  for (Eigen::Index r = 0; r < 10; ++r)
    for (Eigen::Index c = 0; c < 48; ++c) enc(r, c) = std::sin(2 * std::numbers::pi * double(c + r) / 24.0);
  SeasonalNaive m(48, 24, 24, LossKind::mse());
  const Matrix pred = m.predict(enc).mean;
  for (Eigen::Index r = 0; r < 10; ++r)
    for (Eigen::Index c = 0; c < 24; ++c)
      EXPECT_NEAR(pred(r, c), std::sin(2 * std::numbers::pi * double(48 + c + r) / 24.0), 1e-12);
}

TEST(SeasonalNaive, LookbackShorterThanPeriod) {
  EXPECT_THROW(SeasonalNaive(3, 2, 4, LossKind::mse()), Error);
  EXPECT_THROW(build_model(ModelKind::kSeasonalNaive, {{"period", 0}}, 3, 2, LossKind::mse(), 0), Error);
}

TEST(GlobalLinear, ConstructedNaiveWeights) {
  GlobalLinear m(4, 3, LossKind::mse());
  m.update_params([&](std::vector<double>& v) {
    std::fill(v.begin(), v.end(), 0.0);
    for (std::size_t j = 0; j < 3; ++j) v[3 * 3 + j] = 1.0;  // last encoder row feeds every step
  });
  EXPECT_EQ(m.predict(row({1, 2, 3, 7})).mean, row({7, 7, 7}));
  zero_params(m);
  EXPECT_TRUE(m.predict(row({1, 2, 3, 7})).mean.isZero());
  EXPECT_THROW(m.predict(row({1, 2, 3})), Error);
}

TEST(GlobalLinear, ParamLayout) {
  const auto m = build_model(ModelKind::kGlobalLinear, {}, 12, 4, LossKind::gll(), 1);
  EXPECT_EQ(m->params().size(), 12u * 8u + 8u);
  EXPECT_THROW(build_model(ModelKind::kGlobalLinear, {{"hidden", 3}}, 12, 4, LossKind::mse(), 1), Error);
}

TEST(NBeats, TrendBasisIsVandermonde) {
  for (std::size_t n : {1u, 5u, 24u}) {
    for (bool back : {false, true}) {
      const Matrix b = trend_basis(4, n, back);
      for (std::size_t j = 0; j < n; ++j) {
        const double t = back ? (double(j) - double(n)) / double(n) : double(j) / double(n);
        for (int p = 0; p < 4; ++p) EXPECT_NEAR(b(p, Eigen::Index(j)), std::pow(t, p), 1e-15);
      }
    }
  }
}

TEST(NBeats, FourierBasisOrthogonal) {
  for (std::size_t n : {12u, 24u, 48u}) {
    for (bool back : {false, true}) {
      const Matrix b = seasonality_basis(8, n, back);
      const Matrix g = b * b.transpose();
      for (Eigen::Index i = 0; i < g.rows(); ++i)
        for (Eigen::Index j = 0; j < g.cols(); ++j)
          EXPECT_NEAR(g(i, j), i == j ? double(n) / 2.0 : 0.0, 1e-10);
    }
  }
}

TEST(NBeats, TrendConstantTheta) {
  const double c = 1.75;
  auto m = build_model(ModelKind::kNBeatsLite, small_nbeats(), 8, 5, LossKind::mse(), 3);
  const std::size_t off = m->params().slice("stack0.block0.theta_f.bias").offset;
  m->update_params([&](std::vector<double>& v) {
    std::fill(v.begin(), v.end(), 0.0);
    v[off] = c;
  });
  Rng rng(1);
  const Matrix pred = m->predict(random_matrix(rng, 3, 8)).mean;
  for (Eigen::Index i = 0; i < pred.size(); ++i) EXPECT_DOUBLE_EQ(pred.data()[i], c);
}

TEST(NBeats, ZeroGenericBlocksPassResidualThrough) {
  auto m = build_model(ModelKind::kNBeatsLite, small_nbeats("GENERIC", "GENERIC"), 8, 5, LossKind::mse(), 3);
  zero_params(*m);
  Rng rng(2);
  const Matrix enc = random_matrix(rng, 4, 8);
  const auto* nb = dynamic_cast<const NBeatsLite*>(m.get());
  const auto d = nb->decompose(enc);
  for (std::size_t b = 0; b < d.backcasts.size(); ++b) {
    EXPECT_TRUE(d.backcasts[b].isZero());
    EXPECT_TRUE(d.forecasts[b].isZero());
  }
  EXPECT_EQ(d.residual, enc);
  EXPECT_TRUE(m->predict(enc).mean.isZero());
}

TEST(NBeats, ResidualTelescopes) {
  Rng rng(3);
  for (int c = 0; c < 30; ++c) {
    std::size_t l = 0;
    auto m = oracle::random_zoo_model(rng, ModelKind::kNBeatsLite, LossKind::mse(), &l);
    const Matrix enc = random_matrix(rng, 5, l, -3, 3);
    const auto d = dynamic_cast<const NBeatsLite&>(*m).decompose(enc);
    Matrix sum = d.residual;
    for (const auto& b : d.backcasts) sum += b;
    EXPECT_LE((sum - enc).cwiseAbs().maxCoeff(), 1e-10);
    Matrix fsum = Matrix::Zero(5, Eigen::Index(m->horizon()));
    for (const auto& f : d.forecasts) fsum += f;
    EXPECT_LE((fsum - m->predict(enc).mean).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(NBeats, ParamCountClosedForm) {
  const nlohmann::json lm = {{"stack0_hidden_size", 256}, {"stack1_hidden_size", 256}, {"stack0_blocks", 2},
                             {"stack1_blocks", 2}};
  const auto m = build_model(ModelKind::kNBeatsLite, lm, 48, 24, LossKind::mse(), 0);
  // Per block: 4 dense layers of the MLP plus the two theta heads.
  const std::size_t l = 48, H = 256;
  const std::size_t mlp = (l * H + H) + 3 * (H * H + H);
  const std::size_t trend = mlp + 2 * (H * 4 + 4), season = mlp + 2 * (H * 8 + 8);
  EXPECT_EQ(m->params().size(), 2 * trend + 2 * season);
  EXPECT_EQ(nbeats_param_count(NBeatsConfig::from_json(lm), 48, 24, 1), m->params().size());
  Rng rng(4);
  for (int c = 0; c < 20; ++c) {
    std::size_t lb = 0;
    const auto& loss = oracle::all_losses()[rng.below(4)];
    auto r = oracle::random_zoo_model(rng, ModelKind::kNBeatsLite, loss, &lb);
    const auto& cfg = dynamic_cast<const NBeatsLite&>(*r).config();
    EXPECT_EQ(nbeats_param_count(cfg, lb, r->horizon(), r->channels()), r->params().size());
  }
}

TEST(NBeats, InvalidHyperparameters) {
  EXPECT_THROW(build_model(ModelKind::kNBeatsLite, {{"stack0_hidden_size", 100}}, 8, 4, LossKind::mse(), 0), Error);
  EXPECT_THROW(build_model(ModelKind::kNBeatsLite, {{"stack1_theta_dim", 0}}, 8, 4, LossKind::mse(), 0), Error);
  EXPECT_THROW(build_model(ModelKind::kNBeatsLite, {{"stack1_type", "TREND"}}, 8, 4, LossKind::mse(), 0), Error);
  try {
    build_model(ModelKind::kNBeatsLite, {{"stack0_blocks", 3}}, 8, 4, LossKind::mse(), 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("stack0_blocks"), std::string::npos);
  }
}

TEST(Zoo, SameSeedSameInit) {
  for (auto kind : {ModelKind::kGlobalLinear, ModelKind::kNBeatsLite}) {
    const auto a = build_model(kind, kind == ModelKind::kNBeatsLite ? small_nbeats() : nlohmann::json{}, 8, 4,
                               LossKind::mse(), 77);
    const auto b = build_model(kind, kind == ModelKind::kNBeatsLite ? small_nbeats() : nlohmann::json{}, 8, 4,
                               LossKind::mse(), 77);
    const auto c = build_model(kind, kind == ModelKind::kNBeatsLite ? small_nbeats() : nlohmann::json{}, 8, 4,
                               LossKind::mse(), 78);
    EXPECT_EQ(a->params().values(), b->params().values());
    EXPECT_NE(a->params().values(), c->params().values());
  }
}

TEST(Zoo, ShapeContract) {
  Rng rng(5);
  for (int c = 0; c < 60; ++c) {
    const auto kind = static_cast<ModelKind>(c % 3);
    const auto& loss = oracle::all_losses()[rng.below(4)];
    std::size_t l = 0;
    auto m = oracle::random_zoo_model(rng, kind, loss, &l);
    const std::size_t B = 1 + rng.below(6);
    const Forecast f = m->predict(random_matrix(rng, B, l));
    EXPECT_EQ(std::size_t(f.mean.rows()), B);
    EXPECT_EQ(std::size_t(f.mean.cols()), m->horizon());
    EXPECT_EQ(f.has_scale(), loss.needs_scale());
    if (f.has_scale()) {
      EXPECT_EQ(f.scale.rows(), f.mean.rows());
      EXPECT_EQ(f.scale.cols(), f.mean.cols());
      EXPECT_GT(f.scale.minCoeff(), 0.0);
    }
    if (loss.needs_positive_mean()) {
      EXPECT_GT(f.mean.minCoeff(), 0.0);
    }
  }
}

TEST(Zoo, RowPermutationCommutes) {
  Rng rng(6);
  for (int c = 0; c < 30; ++c) {
    const auto kind = static_cast<ModelKind>(c % 3);
    std::size_t l = 0;
    auto m = oracle::random_zoo_model(rng, kind, LossKind::mse(), &l);
    const std::size_t B = 6;
    const Matrix enc = random_matrix(rng, B, l);
    std::vector<Eigen::Index> perm(B);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = B - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
    Matrix shuffled(B, l);
    for (std::size_t i = 0; i < B; ++i) shuffled.row(Eigen::Index(i)) = enc.row(perm[i]);
    const Matrix a = m->predict(enc).mean, b = m->predict(shuffled).mean;
    // Edge rows of a GEMM block may be summed in a different order.
    for (std::size_t i = 0; i < B; ++i) {
      const double err = (b.row(Eigen::Index(i)) - a.row(perm[i])).cwiseAbs().maxCoeff();
      EXPECT_LE(err, 1e-12 * (1.0 + a.cwiseAbs().maxCoeff()));
    }
  }
}

TEST(Zoo, PredictIsPure) {
  Rng rng(7);
  std::size_t l = 0;
  auto m = oracle::random_zoo_model(rng, ModelKind::kNBeatsLite, LossKind::mse(), &l);
  const Matrix enc = random_matrix(rng, 3, l);
  const Matrix first = m->predict(enc).mean;
  m->predict(random_matrix(rng, 5, l));
  EXPECT_EQ(m->predict(enc).mean, first);
}

TEST(Zoo, GradientsMatchFiniteDifferences) {
  Rng rng(8);
  for (int c = 0; c < 24; ++c) {
    const auto kind = static_cast<ModelKind>(1 + c % 2);
    const auto& loss = oracle::all_losses()[(c / 2) % 4];
    std::size_t l = 0;
    std::unique_ptr<Forecaster> m;
    Matrix enc;
    bool drawn = false;
    for (int attempt = 0; attempt < 20 && !drawn; ++attempt) {
      m = oracle::random_zoo_model(rng, kind, loss, &l);
      drawn = oracle::draw_smooth_input(rng, *m, 3, &enc);
    }
    ASSERT_TRUE(drawn);
    const Matrix y = oracle::random_truth(rng, 3, m->horizon(), loss);
    EXPECT_LE(oracle::model_gradient_error(*m, enc, y, loss), 1e-4) << to_string(kind) << " " << to_string(loss);
  }
}

TEST(Zoo, StaleTapeRejected) {
  auto m = build_model(ModelKind::kGlobalLinear, {}, 4, 2, LossKind::mse(), 1);
  ForwardTape tape;
  const Matrix enc = Matrix::Ones(2, 4);
  const auto out = m->forward(enc, &tape, nullptr);
  const auto g = loss_gradient(LossKind::mse(), Matrix::Zero(2, 2), out);
  EXPECT_NO_THROW(m->backward(tape, g));
  m->update_params([](std::vector<double>& v) { v[0] += 1.0; });
  EXPECT_THROW(m->backward(tape, g), Error);
  auto other = m->clone();
  EXPECT_THROW(other->backward(tape, g), Error);
  EXPECT_THROW(m->backward(ForwardTape{}, g), Error);
}

TEST(Zoo, KindNames) {
  for (auto k : {ModelKind::kSeasonalNaive, ModelKind::kGlobalLinear, ModelKind::kNBeatsLite})
    EXPECT_EQ(parse_model_kind(to_string(k)), k);
  EXPECT_THROW(parse_model_kind("TFT"), Error);
}
