#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include <nlohmann/json.hpp>

#include "tsbench/dataset.hpp"
#include "tsbench/models.hpp"

namespace tsbench {

struct TrainConfig {
  LossKind loss;
  double learning_rate = 1e-3;
  std::size_t batch_size = 64;
  std::size_t max_epochs = 100;
  std::size_t patience = 5;
  bool ema_enabled = false;
  double ema_decay = 0.99;
  bool cl_enabled = false;
  std::size_t cl_step = 100;
  std::uint64_t seed = 0;
  /// Stride of the training windows; validation always uses stride 1.
  std::size_t stride = 1;
  /// Caps the shuffled windows visited per epoch; 0 visits all of them.
  std::size_t max_windows_per_epoch = 0;
  /// Retrain from the initial weights on train + val for the convergence
  /// epoch count once early stopping has picked it.
  bool refit_on_union = false;

  /// Throws kInvalidArgument naming the first out-of-range field.
  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
  std::size_t effective_horizon = 0;
  bool ema_enabled = false;
};
nlohmann::json to_json(const EpochRecord& record);

struct TrainOutcome {
  ParamVector params;
  double best_val_loss = 0.0;
  std::size_t convergence_epoch = 0;
  std::size_t epochs_run = 0;
  double wall_time_seconds = 0.0;
  std::vector<EpochRecord> history;
};

/// Patience-based stopping on strict improvement. Epochs are numbered from 1.
class EarlyStopper {
 public:
  explicit EarlyStopper(std::size_t patience);

  /// Records one validation loss; returns true when training should stop.
  bool observe(double val_loss);
  bool improved_last() const { return improved_last_; }
  double best() const { return best_; }
  std::size_t best_epoch() const { return best_epoch_; }
  std::size_t epochs() const { return epoch_; }

 private:
  std::size_t patience_;
  std::size_t epoch_ = 0;
  std::size_t best_epoch_ = 0;
  std::size_t since_best_ = 0;
  double best_;
  bool improved_last_ = false;
};

/// ema <- decay * ema + (1 - decay) * current.
void ema_update(std::vector<double>& ema, const std::vector<double>& current, double decay);

/// min(h, 1 + floor(step / cl_step)).
std::size_t curriculum_horizon(std::uint64_t step, std::size_t horizon, std::size_t cl_step);

/// Weighted mean loss of `model` over the batch, in transformed space.
double validation_loss(const Forecaster& model, const WindowBatch& batch);

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Mini-batch Adam training with early stopping on `val`. On return the model
/// holds the selected weights (EMA weights when enabled). Non-parametric
/// models are only scored. Throws kTrialFailed on a non-finite loss.
TrainOutcome train(Forecaster& model, const SplitView& train_view, const SplitView& val_view,
                   const TrainConfig& config, const EpochCallback& on_epoch = {});

}  // namespace tsbench
