#include "tsbench/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

namespace tsbench {

void TrainConfig::validate() const {
  auto bad = [](const std::string& msg) { fail(ErrorCode::kInvalidArgument, msg); };
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) bad("training.learning_rate must be positive");
  if (batch_size < 1) bad("training.batch_size must be >= 1");
  if (patience < 1) bad("training.patience must be >= 1");
  if (!(ema_decay >= 0.0 && ema_decay <= 1.0)) bad("training.ema_decay must lie in [0, 1]");
  if (cl_step < 1) bad("training.cl_step must be >= 1");
  if (stride < 1) bad("training.stride must be >= 1");
}

nlohmann::json to_json(const EpochRecord& r) {
  return {{"epoch", r.epoch},
          {"train_loss", r.train_loss},
          {"val_loss", r.val_loss},
          {"lr", r.lr},
          {"effective_horizon", r.effective_horizon},
          {"ema_enabled", r.ema_enabled}};
}

EarlyStopper::EarlyStopper(std::size_t patience)
    : patience_(patience), best_(std::numeric_limits<double>::infinity()) {
  require(patience >= 1, ErrorCode::kInvalidArgument, "patience must be >= 1");
}

bool EarlyStopper::observe(double val_loss) {
  ++epoch_;
  improved_last_ = val_loss < best_;
  if (improved_last_) {
    best_ = val_loss;
    best_epoch_ = epoch_;
    since_best_ = 0;
  } else {
    ++since_best_;
  }
  return since_best_ >= patience_;
}

void ema_update(std::vector<double>& ema, const std::vector<double>& current, double decay) {
  require(ema.size() == current.size(), ErrorCode::kShapeMismatch, "EMA length differs from parameters");
  require(decay >= 0.0 && decay <= 1.0, ErrorCode::kInvalidArgument, "EMA decay must lie in [0, 1]");
  for (std::size_t i = 0; i < ema.size(); ++i) ema[i] = decay * ema[i] + (1.0 - decay) * current[i];
}

std::size_t curriculum_horizon(std::uint64_t step, std::size_t horizon, std::size_t cl_step) {
  require(cl_step >= 1, ErrorCode::kInvalidArgument, "cl_step must be >= 1");
  const std::uint64_t grown = 1 + step / cl_step;
  return static_cast<std::size_t>(std::min<std::uint64_t>(horizon, grown));
}

namespace {

constexpr Eigen::Index kEvalChunk = 2048;

Forecast slice_forecast(const Forecast& f, Eigen::Index begin, Eigen::Index n) {
  Forecast out;
  out.mean = f.mean.middleRows(begin, n);
  if (f.has_scale()) out.scale = f.scale.middleRows(begin, n);
  return out;
}

double checked(double loss, const char* where) {
  if (!std::isfinite(loss)) fail(ErrorCode::kTrialFailed, std::string("non-finite ") + where + " loss");
  return loss;
}

/// Batch restricted to the rows a model consumes during training.
struct TrainRows {
  Matrix encoder;
  Matrix target;
  Matrix weight;
};

void gather(const WindowBatch& all, std::span<const std::size_t> rows, TrainRows& out) {
  const auto n = static_cast<Eigen::Index>(rows.size());
  out.encoder.resize(n, all.encoder_target.cols());
  out.target.resize(n, all.decoder_target.cols());
  out.weight.resize(n, all.decoder_weight.cols());
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto src = static_cast<Eigen::Index>(rows[static_cast<std::size_t>(r)]);
    out.encoder.row(r) = all.encoder_target.row(src);
    out.target.row(r) = all.decoder_target.row(src);
    out.weight.row(r) = all.decoder_weight.row(src);
  }
}

WindowBatch materialize(const SplitView& view, std::size_t l, std::size_t h, std::size_t stride) {
  const auto windows = enumerate_windows(view, l, h, stride);
  if (windows.empty()) {
    fail(ErrorCode::kEmptySplit, std::string(to_string(view.kind())) + " split yields no windows for lookback " +
                                     std::to_string(l) + " and horizon " + std::to_string(h));
  }
  return make_batch(view, windows, l, h);
}

SplitView union_view(const SplitView& train, const SplitView& val) {
  std::vector<SeriesSpan> spans;
  for (const auto& t : train.spans()) {
    SeriesSpan s = t;
    for (const auto& v : val.spans()) {
      if (v.series_index == t.series_index) s.target_end = std::max(s.target_end, v.target_end);
    }
    spans.push_back(s);
  }
  return SplitView(train.dataset_ptr(), SplitKind::kTrain, std::move(spans));
}

struct EpochLoopResult {
  std::vector<double> best_params;
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t best_epoch = 0;
  std::size_t epochs_run = 0;
  std::vector<EpochRecord> history;
};

/// Runs up to `epochs` epochs. With a validation batch it early-stops and
/// tracks the best weights; without one it returns the final weights.
EpochLoopResult run_epochs(Forecaster& model, const WindowBatch& train_rows, const WindowBatch* val,
                           const TrainConfig& cfg, std::size_t epochs, const EpochCallback& on_epoch) {
  const std::size_t h = model.horizon();
  const std::size_t n_windows = train_rows.rows();
  const std::vector<double> initial = model.params().values();
  EpochLoopResult res;
  res.best_params = initial;

  AdamState adam = AdamState::for_size(initial.size(), cfg.learning_rate);
  std::vector<double> raw = initial;
  std::vector<double> ema = initial;
  Rng dropout_rng(mix_seed(cfg.seed, 0x64726f70ULL));
  EarlyStopper stopper(cfg.patience);
  std::uint64_t step = 0;
  std::vector<std::size_t> order(n_windows);
  TrainRows rows;
  ForwardTape tape;

  auto load = [&model](const std::vector<double>& values) {
    model.update_params([&values](std::vector<double>& p) { p = values; });
  };

  for (std::size_t epoch = 1; epoch <= epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng(mix_seed(cfg.seed, epoch));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<std::size_t>(shuffle_rng.below(i))]);
    }
    const std::size_t visit =
        cfg.max_windows_per_epoch ? std::min(cfg.max_windows_per_epoch, n_windows) : n_windows;
    load(raw);
    double loss_sum = 0.0;
    double weight_sum = 0.0;
    std::size_t h_eff = h;
    for (std::size_t begin = 0; begin < visit; begin += cfg.batch_size) {
      const std::size_t n = std::min(cfg.batch_size, visit - begin);
      gather(train_rows, std::span(order).subspan(begin, n), rows);
      h_eff = cfg.cl_enabled ? curriculum_horizon(step, h, cfg.cl_step) : h;
      if (h_eff < h) rows.weight.rightCols(static_cast<Eigen::Index>(h - h_eff)).setZero();
      const double wsum = rows.weight.sum();
      ++step;
      if (wsum <= 0.0) continue;
      const Forecast out = model.forward(rows.encoder, &tape, &dropout_rng);
      const double loss = checked(loss_value(model.loss(), rows.target, out, &rows.weight), "training");
      const Forecast grad = loss_gradient(model.loss(), rows.target, out, &rows.weight);
      const ParamVector g = model.backward(tape, grad);
      try {
        model.update_params([&](std::vector<double>& p) { adam_step(p, g.values(), adam); });
      } catch (const Error& e) {
        fail(ErrorCode::kTrialFailed, e.what());
      }
      raw = model.params().values();
      if (cfg.ema_enabled) ema_update(ema, raw, cfg.ema_decay);
      loss_sum += loss * wsum;
      weight_sum += wsum;
    }

    const std::vector<double>& selected = cfg.ema_enabled ? ema : raw;
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = weight_sum > 0.0 ? loss_sum / weight_sum : 0.0;
    rec.lr = cfg.learning_rate;
    rec.effective_horizon = h_eff;
    rec.ema_enabled = cfg.ema_enabled;
    checked(rec.train_loss, "training");
    bool stop = false;
    if (val) {
      load(selected);
      rec.val_loss = checked(validation_loss(model, *val), "validation");
      stop = stopper.observe(rec.val_loss);
      if (stopper.improved_last()) {
        res.best_params = selected;
        res.best_val = rec.val_loss;
        res.best_epoch = epoch;
      }
    } else {
      res.best_params = selected;
      res.best_epoch = epoch;
    }
    res.history.push_back(rec);
    res.epochs_run = epoch;
    if (on_epoch) on_epoch(rec);
    if (stop) break;
  }
  load(res.best_params);
  return res;
}

}  // namespace

double validation_loss(const Forecaster& model, const WindowBatch& batch) {
  require(batch.rows() > 0, ErrorCode::kEmptySplit, "validation batch is empty");
  double total = 0.0, wsum = 0.0;
  const auto B = static_cast<Eigen::Index>(batch.rows());
  for (Eigen::Index begin = 0; begin < B; begin += kEvalChunk) {
    const Eigen::Index n = std::min(kEvalChunk, B - begin);
    const Matrix w = batch.decoder_weight.middleRows(begin, n);
    const double ws = w.sum();
    if (ws <= 0.0) continue;
    const Forecast out = model.predict(Matrix(batch.encoder_target.middleRows(begin, n)));
    const Matrix truth = batch.decoder_target.middleRows(begin, n);
    total += loss_value(model.loss(), truth, slice_forecast(out, 0, n), &w) * ws;
    wsum += ws;
  }
  require(wsum > 0.0, ErrorCode::kEmptySplit, "validation weights are all zero");
  return total / wsum;
}

TrainOutcome train(Forecaster& model, const SplitView& train_view, const SplitView& val_view,
                   const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t l = model.lookback();
  const std::size_t h = model.horizon();
  const WindowBatch val = materialize(val_view, l, h, 1);

  TrainOutcome outcome;
  if (!model.parametric() || config.max_epochs == 0) {
    outcome.params = model.params();
    outcome.best_val_loss = checked(validation_loss(model, val), "validation");
  } else {
    const std::vector<double> initial = model.params().values();
    const WindowBatch train_rows = materialize(train_view, l, h, config.stride);
    auto res = run_epochs(model, train_rows, &val, config, config.max_epochs, on_epoch);
    outcome.best_val_loss = res.best_val;
    outcome.convergence_epoch = res.best_epoch;
    outcome.epochs_run = res.epochs_run;
    outcome.history = std::move(res.history);
    if (config.refit_on_union && outcome.convergence_epoch > 0) {
      model.update_params([&initial](std::vector<double>& p) { p = initial; });
      const WindowBatch union_rows = materialize(union_view(train_view, val_view), l, h, config.stride);
      run_epochs(model, union_rows, nullptr, config, outcome.convergence_epoch, {});
    }
    outcome.params = model.params();
  }
  const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - t0;
  outcome.wall_time_seconds = std::max(elapsed.count(), 1e-9);
  return outcome;
}

}  // namespace tsbench
