#include "tsbench/objective.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <numbers>

namespace tsbench {

namespace {

void check_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    fail(ErrorCode::kShapeMismatch,
         std::string(what) + ": shape " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
             " vs " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
}

void check_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) fail(ErrorCode::kNonFinite, std::string(what) + " contains NaN or infinity");
}

}  // namespace

MetricResult compute_metrics(const Matrix& truth, const Matrix& pred, const Matrix& weights) {
  check_same_shape(truth, pred, "compute_metrics");
  check_same_shape(truth, weights, "compute_metrics weights");
  check_finite(truth, "truth");
  check_finite(pred, "prediction");
  check_finite(weights, "weights");
  if ((weights.array() < 0.0).any()) fail(ErrorCode::kInvalidArgument, "metric weights must be >= 0");

  double wsum = 0.0, abs_sum = 0.0, sq_sum = 0.0, smape_sum = 0.0;
  for (Eigen::Index i = 0; i < truth.size(); ++i) {
    const double w = weights.data()[i];
    if (w == 0.0) continue;
    const double y = truth.data()[i];
    const double yhat = pred.data()[i];
    const double e = std::abs(y - yhat);
    const double denom = (std::abs(y) + std::abs(yhat)) / 2.0;
    wsum += w;
    abs_sum += w * e;
    sq_sum += w * e * e;
    if (denom > 0.0) smape_sum += w * e / denom;
  }
  if (wsum <= 0.0) fail(ErrorCode::kInvalidArgument, "metric weights are all zero");
  MetricResult m;
  m.count = wsum;
  m.mae = abs_sum / wsum;
  m.rmse = std::sqrt(sq_sum / wsum);
  m.smape = std::clamp(100.0 * smape_sum / wsum, 0.0, 200.0);
  return m;
}

MetricResult compute_metrics(const Matrix& truth, const Matrix& pred) {
  return compute_metrics(truth, pred, Matrix::Ones(truth.rows(), truth.cols()));
}

std::string_view to_string(MetricKind kind) {
  switch (kind) {
    case MetricKind::kMae: return "mae";
    case MetricKind::kRmse: return "rmse";
    case MetricKind::kSmape: return "smape";
  }
  return "mae";
}

MetricKind parse_metric_kind(std::string_view text) {
  if (text == "mae" || text == "MAE") return MetricKind::kMae;
  if (text == "rmse" || text == "RMSE") return MetricKind::kRmse;
  if (text == "smape" || text == "SMAPE") return MetricKind::kSmape;
  fail(ErrorCode::kInvalidArgument, "unknown metric '" + std::string(text) + "'");
}

double metric_value(const MetricResult& m, MetricKind kind) {
  switch (kind) {
    case MetricKind::kMae: return m.mae;
    case MetricKind::kRmse: return m.rmse;
    case MetricKind::kSmape: return m.smape;
  }
  return m.mae;
}

LossKind LossKind::tweedie(double rho) {
  require(rho > 1.0 && rho < 2.0, ErrorCode::kInvalidArgument,
          "Tweedie power must lie strictly inside (1, 2)");
  return {LossType::kTweedie, rho};
}

std::string to_string(const LossKind& kind) {
  switch (kind.type) {
    case LossType::kL1: return "L1";
    case LossType::kMse: return "MSE";
    case LossType::kGll: return "GLL";
    case LossType::kTweedie: {
      if (kind.tweedie_power == 1.5) return "TWEEDIE";
      char buf[48];
      std::snprintf(buf, sizeof buf, "TWEEDIE(%.17g)", kind.tweedie_power);
      return buf;
    }
  }
  return "MSE";
}

LossKind parse_loss_kind(std::string_view text) {
  if (text == "L1") return LossKind::l1();
  if (text == "MSE") return LossKind::mse();
  if (text == "GLL") return LossKind::gll();
  if (text == "TWEEDIE") return LossKind::tweedie();
  if (text.starts_with("TWEEDIE(") && text.ends_with(")")) {
    const std::string inner(text.substr(8, text.size() - 9));
    char* end = nullptr;
    const double rho = std::strtod(inner.c_str(), &end);
    if (end == inner.c_str() + inner.size()) return LossKind::tweedie(rho);
  }
  fail(ErrorCode::kInvalidArgument, "unknown loss kind '" + std::string(text) + "'");
}

namespace {

struct LossInputs {
  const Matrix& truth;
  const Forecast& out;
  Matrix weights;
  double wsum;
};

LossInputs prepare(const LossKind& kind, const Matrix& truth, const Forecast& output,
                   const Matrix* weights) {
  check_same_shape(truth, output.mean, "loss");
  if (kind.needs_scale()) {
    require(output.has_scale(), ErrorCode::kInvalidArgument, "GLL loss needs a scale output");
    check_same_shape(truth, output.scale, "loss scale");
  }
  Matrix w = weights ? *weights : Matrix::Ones(truth.rows(), truth.cols());
  check_same_shape(truth, w, "loss weights");
  const double wsum = w.sum();
  require(wsum > 0.0, ErrorCode::kInvalidArgument, "loss weights are all zero");
  if (kind.type == LossType::kTweedie) {
    require(kind.tweedie_power > 1.0 && kind.tweedie_power < 2.0, ErrorCode::kInvalidArgument,
            "Tweedie power must lie strictly inside (1, 2)");
  }
  for (Eigen::Index i = 0; i < truth.size(); ++i) {
    if (w.data()[i] == 0.0) continue;
    if (kind.type == LossType::kTweedie) {
      require(output.mean.data()[i] > 0.0, ErrorCode::kInvalidArgument,
              "Tweedie loss requires a strictly positive mean");
      require(truth.data()[i] >= 0.0, ErrorCode::kInvalidArgument,
              "Tweedie loss requires nonnegative targets");
    }
    if (kind.type == LossType::kGll) {
      require(output.scale.data()[i] > 0.0, ErrorCode::kInvalidArgument,
              "GLL loss requires a strictly positive scale");
    }
  }
  return {truth, output, std::move(w), wsum};
}

}  // namespace

double loss_value(const LossKind& kind, const Matrix& truth, const Forecast& output,
                  const Matrix* weights) {
  const auto in = prepare(kind, truth, output, weights);
  const double rho = kind.tweedie_power;
  double total = 0.0;
  for (Eigen::Index i = 0; i < truth.size(); ++i) {
    const double w = in.weights.data()[i];
    if (w == 0.0) continue;
    const double y = truth.data()[i];
    const double m = output.mean.data()[i];
    double l = 0.0;
    switch (kind.type) {
      case LossType::kL1: l = std::abs(y - m); break;
      case LossType::kMse: l = (y - m) * (y - m); break;
      case LossType::kGll: {
        const double s = output.scale.data()[i];
        l = 0.5 * std::log(2.0 * std::numbers::pi * s * s) + (y - m) * (y - m) / (2.0 * s * s);
        break;
      }
      case LossType::kTweedie:
        l = -y * std::pow(m, 1.0 - rho) / (1.0 - rho) + std::pow(m, 2.0 - rho) / (2.0 - rho);
        break;
    }
    total += w * l;
  }
  return total / in.wsum;
}

Forecast loss_gradient(const LossKind& kind, const Matrix& truth, const Forecast& output,
                       const Matrix* weights) {
  const auto in = prepare(kind, truth, output, weights);
  const double rho = kind.tweedie_power;
  Forecast g;
  g.mean = Matrix::Zero(truth.rows(), truth.cols());
  if (kind.needs_scale()) g.scale = Matrix::Zero(truth.rows(), truth.cols());
  for (Eigen::Index i = 0; i < truth.size(); ++i) {
    const double w = in.weights.data()[i] / in.wsum;
    if (w == 0.0) continue;
    const double y = truth.data()[i];
    const double m = output.mean.data()[i];
    switch (kind.type) {
      case LossType::kL1: g.mean.data()[i] = w * (m > y ? 1.0 : (m < y ? -1.0 : 0.0)); break;
      case LossType::kMse: g.mean.data()[i] = w * 2.0 * (m - y); break;
      case LossType::kGll: {
        const double s = output.scale.data()[i];
        g.mean.data()[i] = w * (m - y) / (s * s);
        g.scale.data()[i] = w * (1.0 / s - (y - m) * (y - m) / (s * s * s));
        break;
      }
      case LossType::kTweedie:
        g.mean.data()[i] = w * (-y * std::pow(m, -rho) + std::pow(m, 1.0 - rho));
        break;
    }
  }
  return g;
}

}  // namespace tsbench
