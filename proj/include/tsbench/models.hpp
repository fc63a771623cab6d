#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tsbench/dataset.hpp"
#include "tsbench/nn.hpp"
#include "tsbench/objective.hpp"

namespace tsbench {

enum class ModelKind { kSeasonalNaive, kGlobalLinear, kNBeatsLite };
std::string_view to_string(ModelKind kind);
ModelKind parse_model_kind(std::string_view text);

/// Everything recorded by a training-mode forward pass that backward needs.
/// A tape is bound to the model instance and parameter version that wrote it.
struct ForwardTape {
  const void* owner = nullptr;
  std::uint64_t version = 0;
  bool recorded = false;
  Matrix head_raw;
  std::vector<MlpTape> mlps;
  std::vector<DenseCache> dense;
  std::vector<Matrix> values;
};

/// M(X') -> X^+ over the lookback window. Prediction is a pure function of
/// (params, encoder input).
class Forecaster {
 public:
  virtual ~Forecaster() = default;

  virtual ModelKind kind() const = 0;
  virtual std::unique_ptr<Forecaster> clone() const = 0;

  std::size_t lookback() const { return lookback_; }
  std::size_t horizon() const { return horizon_; }
  const LossKind& loss() const { return loss_; }
  const nlohmann::json& hyperparams() const { return hyperparams_; }
  /// Number of h-wide output channels: 2 for Gaussian heads, else 1.
  std::size_t channels() const { return loss_.needs_scale() ? 2 : 1; }

  bool parametric() const { return !params_.empty(); }
  const ParamVector& params() const { return params_; }
  void set_params(const ParamVector& params);
  /// Applies `update` to the raw parameter values and invalidates tapes.
  template <typename F>
  void update_params(F&& update) {
    update(params_.values());
    ++version_;
  }

  Forecast predict(const WindowBatch& batch) const { return predict(batch.encoder_target); }
  Forecast predict(const Matrix& encoder) const { return forward(encoder, nullptr, nullptr); }

  /// Training-mode forward when `tape` is given; dropout is active only when
  /// an Rng is supplied.
  Forecast forward(const Matrix& encoder, ForwardTape* tape, Rng* dropout_rng) const;
  /// Exact gradient of the loss w.r.t. every parameter, given dL/d(output).
  ParamVector backward(const ForwardTape& tape, const Forecast& grad_output) const;

 protected:
  Forecaster(std::size_t lookback, std::size_t horizon, LossKind loss, nlohmann::json hyperparams);
  Forecaster(const Forecaster&) = default;

  /// Produces the B x (channels * h) pre-head output.
  virtual Matrix forward_raw(const Matrix& encoder, ForwardTape* tape, Rng* dropout_rng) const = 0;
  virtual void backward_raw(const ForwardTape& tape, const Matrix& grad_raw, ParamVector& grads) const;

  ParamVector params_;

 private:
  std::size_t lookback_;
  std::size_t horizon_;
  LossKind loss_;
  nlohmann::json hyperparams_;
  std::uint64_t version_ = 0;
};

class SeasonalNaive final : public Forecaster {
 public:
  SeasonalNaive(std::size_t lookback, std::size_t horizon, std::size_t period, LossKind loss);
  ModelKind kind() const override { return ModelKind::kSeasonalNaive; }
  std::unique_ptr<Forecaster> clone() const override { return std::make_unique<SeasonalNaive>(*this); }
  std::size_t period() const { return period_; }

 protected:
  Matrix forward_raw(const Matrix& encoder, ForwardTape* tape, Rng* rng) const override;

 private:
  std::size_t period_;
};

/// One linear map shared by every series: forecast = encoder * W + b.
class GlobalLinear final : public Forecaster {
 public:
  GlobalLinear(std::size_t lookback, std::size_t horizon, LossKind loss);
  ModelKind kind() const override { return ModelKind::kGlobalLinear; }
  std::unique_ptr<Forecaster> clone() const override { return std::make_unique<GlobalLinear>(*this); }
  const DenseLayer& layer() const { return layer_; }

 protected:
  Matrix forward_raw(const Matrix& encoder, ForwardTape* tape, Rng* rng) const override;
  void backward_raw(const ForwardTape& tape, const Matrix& grad_raw, ParamVector& grads) const override;

 private:
  DenseLayer layer_;
};

enum class StackType { kTrend, kSeasonality, kGeneric };
std::string_view to_string(StackType type);

struct StackConfig {
  StackType type = StackType::kGeneric;
  std::size_t num_blocks = 2;
  std::size_t theta_dim = 4;
  bool share_weights = false;
  std::size_t hidden_size = 256;
};

struct NBeatsConfig {
  std::array<StackConfig, 2> stacks{StackConfig{StackType::kTrend, 2, 4, false, 256},
                                    StackConfig{StackType::kSeasonality, 2, 8, false, 256}};
  double dropout = 0.0;
  static constexpr std::size_t kMlpDepth = 4;

  static NBeatsConfig from_json(const nlohmann::json& lambda_m);
  nlohmann::json to_json() const;
};

/// Rows are basis functions evaluated on the normalized grid: t = j/n for the
/// forecast grid and t = (j - n)/n for the backcast grid.
Matrix trend_basis(std::size_t theta_dim, std::size_t points, bool backcast);
Matrix seasonality_basis(std::size_t theta_dim, std::size_t points, bool backcast);

/// Closed-form parameter count of an N-BEATS configuration.
std::size_t nbeats_param_count(const NBeatsConfig& config, std::size_t lookback, std::size_t horizon,
                               std::size_t channels);

/// Doubly-residual trend / seasonality / generic stacks.
class NBeatsLite final : public Forecaster {
 public:
  NBeatsLite(std::size_t lookback, std::size_t horizon, const NBeatsConfig& config, LossKind loss);
  ModelKind kind() const override { return ModelKind::kNBeatsLite; }
  std::unique_ptr<Forecaster> clone() const override { return std::make_unique<NBeatsLite>(*this); }
  const NBeatsConfig& config() const { return config_; }

  struct Block {
    std::size_t stack = 0;
    Mlp mlp;
    DenseLayer theta_backcast;
    DenseLayer theta_forecast;
    ParamSlice basis_backcast;  // generic blocks only
    ParamSlice basis_forecast;
  };
  const std::vector<Block>& blocks() const { return blocks_; }

  struct Decomposition {
    std::vector<Matrix> backcasts;
    std::vector<Matrix> forecasts;  // raw head output per block
    Matrix residual;
  };
  /// Evaluation-mode pass that keeps every block's contribution.
  Decomposition decompose(const Matrix& encoder) const;

 protected:
  Matrix forward_raw(const Matrix& encoder, ForwardTape* tape, Rng* rng) const override;
  void backward_raw(const ForwardTape& tape, const Matrix& grad_raw, ParamVector& grads) const override;

 private:
  Matrix basis_matrix(const Block& block, bool backcast) const;

  NBeatsConfig config_;
  std::vector<Block> blocks_;
  std::array<Matrix, 2> fixed_backcast_;
  std::array<Matrix, 2> fixed_forecast_;
};

/// Builds a model from its hyperparameters, validating them against the
/// kind's declared space, and initializes weights deterministically from
/// `seed`. `default_period` seeds SeasonalNaive when lambda_m omits it.
std::unique_ptr<Forecaster> build_model(ModelKind kind, const nlohmann::json& lambda_m,
                                        std::size_t lookback, std::size_t horizon, LossKind loss,
                                        std::uint64_t seed, std::size_t default_period = 1);

/// Softplus floor applied by positive heads.
inline constexpr double kPositiveHeadFloor = 1e-6;

}  // namespace tsbench
