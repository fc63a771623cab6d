#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tsbench/common.hpp"

namespace tsbench {

enum class DimensionKind { kCategorical, kUniform, kLogUniform, kBool };
enum class DimensionGroup { kModel, kPipeline };

std::string_view to_string(DimensionKind kind);
std::string_view to_string(DimensionGroup group);

struct Dimension {
  std::string name;
  DimensionKind kind = DimensionKind::kUniform;
  DimensionGroup group = DimensionGroup::kPipeline;
  std::vector<nlohmann::json> values;  // categorical choices
  double low = 0.0;
  double high = 1.0;

  /// Number of discrete choices (2 for BOOL); 0 for continuous dimensions.
  std::size_t choices() const;
  nlohmann::json choice(std::size_t i) const;
  bool continuous() const { return kind == DimensionKind::kUniform || kind == DimensionKind::kLogUniform; }
};

/// The search space A: named dimensions partitioned into model and pipeline
/// groups. An assignment is a JSON object keyed by dimension name.
class HyperparameterSpace {
 public:
  HyperparameterSpace& add_categorical(std::string name, std::vector<nlohmann::json> values,
                                       DimensionGroup group = DimensionGroup::kPipeline);
  HyperparameterSpace& add_uniform(std::string name, double low, double high,
                                   DimensionGroup group = DimensionGroup::kPipeline);
  HyperparameterSpace& add_log_uniform(std::string name, double low, double high,
                                       DimensionGroup group = DimensionGroup::kPipeline);
  HyperparameterSpace& add_bool(std::string name, DimensionGroup group = DimensionGroup::kPipeline);

  const std::vector<Dimension>& dimensions() const { return dims_; }
  bool empty() const { return dims_.empty(); }
  std::size_t size() const { return dims_.size(); }
  const Dimension* find(std::string_view name) const;

  /// True when `value` is a member of the dimension's domain.
  static bool contains(const Dimension& dim, const nlohmann::json& value);

  /// Parses {"type": "categorical", "values": [...]}, {"type": "uniform",
  /// "low": a, "high": b}, {"type": "log_uniform", ...} or {"type": "bool"}.
  static Dimension parse_dimension(const std::string& name, const nlohmann::json& spec,
                                   DimensionGroup group);
  static nlohmann::json dimension_json(const Dimension& dim);

 private:
  HyperparameterSpace& add(Dimension dim);
  std::vector<Dimension> dims_;
};

enum class TrialStatus { kOk, kFailed };
std::string_view to_string(TrialStatus status);

struct Trial {
  std::size_t index = 0;
  nlohmann::json lambda = nlohmann::json::object();
  double objective = 0.0;
  TrialStatus status = TrialStatus::kOk;
  double wall_time_seconds = 0.0;
  nlohmann::json telemetry = nlohmann::json::object();
  std::string error;
};

/// Deterministic record: everything except wall time, which varies between
/// otherwise identical runs.
nlohmann::json to_json(const Trial& trial);
Trial trial_from_json(const nlohmann::json& j);

struct Budget {
  enum class Mode { kTrials, kWallClock };
  Mode mode = Mode::kTrials;
  std::size_t trials = 50;
  double seconds = 0.0;

  static Budget trial_count(std::size_t n) { return {Mode::kTrials, n, 0.0}; }
  static Budget wall_clock(double seconds) { return {Mode::kWallClock, 0, seconds}; }
};

enum class SearchStrategy { kRandom, kTpe };
std::string_view to_string(SearchStrategy s);
SearchStrategy parse_search_strategy(std::string_view text);

struct TpeOptions {
  double gamma = 0.25;
  std::size_t n_startup = 10;
  std::size_t n_candidates = 24;
  double bandwidth_floor = 1e-3;  // fraction of the dimension's range
};

/// Independent draw per dimension; a pure function of (seed, trial_index).
nlohmann::json sample_random(const HyperparameterSpace& space, std::uint64_t seed, std::size_t trial_index);

/// Tree-structured Parzen estimator proposal. Falls back to sample_random
/// until `n_startup` OK trials exist or when every objective is equal.
nlohmann::json sample_tpe(const HyperparameterSpace& space, const std::vector<Trial>& history,
                          std::uint64_t seed, const TpeOptions& options = {});

struct TrialResult {
  double objective = 0.0;
  nlohmann::json telemetry = nlohmann::json::object();
};

/// Maps an assignment to its objective V. Throwing marks the trial FAILED.
using TrialExecutor = std::function<TrialResult(const nlohmann::json& lambda, std::size_t trial_index)>;

struct SweepOptions {
  SearchStrategy strategy = SearchStrategy::kRandom;
  Budget budget;
  std::uint64_t seed = 0;
  /// Concurrent trials for the random strategy; TPE always runs sequentially.
  std::size_t jobs = 1;
  TpeOptions tpe;
  /// Trials replayed from an earlier, interrupted sweep.
  std::vector<Trial> completed;
  /// Called once per finished trial, in index order.
  std::function<void(const Trial&)> on_trial;
};

struct SweepResult {
  nlohmann::json lambda_top;
  std::size_t best_index = 0;
  double best_objective = 0.0;
  std::vector<Trial> trials;
};

/// Index of the OK trial with the smallest objective (lowest index on ties).
std::optional<std::size_t> argmin_trial(const std::vector<Trial>& trials);

/// Samples, executes and records trials until the budget is spent. Throws
/// kSweepFailed when no trial succeeded.
SweepResult run_sweep(const HyperparameterSpace& space, const TrialExecutor& executor,
                      const SweepOptions& options);

}  // namespace tsbench
