#pragma once

#include <optional>
#include <string>

#include "tsbench/common.hpp"

namespace tsbench {

struct MetricResult {
  double mae = 0.0;
  double rmse = 0.0;
  double smape = 0.0;  // percent, in [0, 200]
  double count = 0.0;  // sum of weights
};

/// Pointwise weighted MAE / RMSE / SMAPE over every entry of the B x h
/// matrices. A SMAPE term with |y| + |yhat| = 0 contributes 0.
MetricResult compute_metrics(const Matrix& truth, const Matrix& pred, const Matrix& weights);
MetricResult compute_metrics(const Matrix& truth, const Matrix& pred);

enum class MetricKind { kMae, kRmse, kSmape };
std::string_view to_string(MetricKind kind);
MetricKind parse_metric_kind(std::string_view text);
double metric_value(const MetricResult& m, MetricKind kind);

enum class LossType { kL1, kMse, kGll, kTweedie };

struct LossKind {
  LossType type = LossType::kMse;
  double tweedie_power = 1.5;

  static LossKind l1() { return {LossType::kL1}; }
  static LossKind mse() { return {LossType::kMse}; }
  static LossKind gll() { return {LossType::kGll}; }
  static LossKind tweedie(double rho = 1.5);

  /// GLL heads emit a scale next to every mean; Tweedie heads emit a strictly
  /// positive mean.
  bool needs_scale() const { return type == LossType::kGll; }
  bool needs_positive_mean() const { return type == LossType::kTweedie; }
  bool operator==(const LossKind&) const = default;
};

std::string to_string(const LossKind& kind);
/// Accepts "L1", "MSE", "GLL", "TWEEDIE" and "TWEEDIE(1.3)".
LossKind parse_loss_kind(std::string_view text);

/// Model output. `scale` is empty unless the head is Gaussian.
struct Forecast {
  Matrix mean;
  Matrix scale;

  bool has_scale() const { return scale.size() > 0; }
};

/// Weighted mean of the per-point loss: sum(w * l) / sum(w). Weights default
/// to ones. Throws on invalid inputs for the loss family.
double loss_value(const LossKind& kind, const Matrix& truth, const Forecast& output,
                  const Matrix* weights = nullptr);

/// Analytic gradient of loss_value with respect to output.mean (and
/// output.scale for GLL). The L1 subgradient at zero residual is 0.
Forecast loss_gradient(const LossKind& kind, const Matrix& truth, const Forecast& output,
                       const Matrix* weights = nullptr);

}  // namespace tsbench
