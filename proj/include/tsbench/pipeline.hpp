#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tsbench/dataset.hpp"
#include "tsbench/evaluation.hpp"
#include "tsbench/models.hpp"
#include "tsbench/trainer.hpp"
#include "tsbench/tuner.hpp"

namespace tsbench {

// ---------------------------------------------------------------------------
// Synthetic data

enum class Generator { kAr1, kTrendSeasonal, kConstant };
std::string_view to_string(Generator g);
Generator parse_generator(std::string_view text);

struct SyntheticSpec {
  Generator generator = Generator::kTrendSeasonal;
  std::size_t n = 20;
  std::size_t length = 600;
  std::uint64_t seed = 0;
  double phi = 0.5;        // AR1
  double noise = 0.1;      // sigma of the Gaussian innovation
  double slope = 0.0;      // TREND_SEASONAL
  double period = 24.0;    // TREND_SEASONAL
  double amplitude = 1.0;  // TREND_SEASONAL
  double level = 0.0;      // constant offset added to every value
  std::int64_t start = 1577836800;  // 2020-01-01T00:00:00Z
  std::int64_t sample_rate_seconds = 3600;

  static SyntheticSpec from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

/// AR1: y_t = phi y_{t-1} + e_t (stationary start); TREND_SEASONAL:
/// y_t = slope t + amplitude sin(2 pi t / period) + e_t; CONSTANT: e_t.
/// `level` is added afterwards. Deterministic in the seed.
std::vector<Series> generate_series(const SyntheticSpec& spec);

/// Long-format CSV (series_id,timestamp,value) with round-trip precision.
std::string synthetic_csv(const SyntheticSpec& spec);

// ---------------------------------------------------------------------------
// Run configuration

struct SplitSpec {
  std::size_t val_steps = 0;
  std::size_t test_steps = 0;
  std::optional<SplitBoundaries> explicit_ranges;
};

struct RunConfig {
  // dataset
  std::optional<SyntheticSpec> synthetic;
  std::optional<std::string> csv_path;
  CsvSchema schema;
  nlohmann::json profile = nlohmann::json::object();
  SplitSpec split;
  bool context_bleed = true;
  nlohmann::json dataset_search = nlohmann::json::object();
  // model
  ModelKind model_kind = ModelKind::kGlobalLinear;
  nlohmann::json model_fixed = nlohmann::json::object();
  nlohmann::json model_search = nlohmann::json::object();
  // training
  nlohmann::json training_fixed = nlohmann::json::object();
  nlohmann::json training_search = nlohmann::json::object();
  // tuner
  SearchStrategy strategy = SearchStrategy::kRandom;
  Budget budget = Budget::trial_count(50);
  std::uint64_t tuner_seed = 0;
  MetricKind selection_metric = MetricKind::kMae;
  std::size_t objective_repeats = 1;
  // evaluation
  std::size_t eval_k = 16;
  double alpha = 0.05;
  std::uint64_t eval_base_seed = 0;
  bool ensemble = false;
  Denominator denominator = Denominator::kPaper;
  std::size_t eval_stride = 1;
  // output
  std::string output_dir = "run";
  /// Directory the config was loaded from; relative CSV paths resolve here.
  std::filesystem::path base_dir;

  /// Parses and type-checks. Structural problems throw kConfig naming the
  /// config path; semantic checks are left to violations().
  static RunConfig parse(const nlohmann::json& j);
  nlohmann::json to_json() const;

  /// Every semantic problem, each prefixed with its config path.
  std::vector<std::string> violations() const;
  /// Throws kConfig listing all violations.
  void validate() const;

  HyperparameterSpace search_space() const;
  bool has_search() const;

  /// Overrides the tuner, evaluation and generator seeds.
  void set_seed(std::uint64_t seed);
  /// Stable hash of the canonical serialization.
  std::string hash() const;
};

RunConfig load_config(const std::filesystem::path& path);

/// Fully resolved settings for one assignment of the search space.
struct ResolvedRun {
  DatasetProfile profile;
  ModelKind kind = ModelKind::kGlobalLinear;
  nlohmann::json lambda_m = nlohmann::json::object();
  TrainConfig train;
  nlohmann::json describe() const;
};

DatasetProfile parse_profile(const nlohmann::json& j);
nlohmann::json profile_to_json(const DatasetProfile& p);
TrainConfig parse_train_config(const nlohmann::json& fixed);

ResolvedRun resolve_run(const RunConfig& config, const nlohmann::json& lambda);

// ---------------------------------------------------------------------------
// Data preparation

/// Raw series as loaded (synthetic generation or CSV ingest).
TimeSeriesDataset load_raw_dataset(const RunConfig& config);

struct PreparedData {
  std::shared_ptr<const TimeSeriesDataset> dataset;  // filtered, split, fitted
  DatasetSplits splits;
  FilterReport filter;
};

/// Profile filters, split, transform fit on train, and the three views.
PreparedData prepare_data(const TimeSeriesDataset& raw, const DatasetProfile& profile, const SplitSpec& split,
                          bool context_bleed);

/// Metrics of `model` over every window of `view` in original units.
MetricResult score_view(const Forecaster& model, const SplitView& view, std::size_t stride = 1);

/// Transformed-space mean forecasts of `view`'s windows plus the matching
/// batch (for ensembling and post-processing).
struct ViewForecast {
  WindowBatch batch;
  Matrix mean;
};
ViewForecast forecast_view(const Forecaster& model, const SplitView& view, std::size_t stride = 1);
MetricResult score_forecast(const ViewForecast& f, const SplitView& view, const Matrix& mean);

std::size_t default_seasonal_period(std::int64_t sample_rate_seconds);

// ---------------------------------------------------------------------------
// Orchestration

struct RunOptions {
  std::filesystem::path output_dir;
  std::size_t jobs = 1;
  bool resume = false;
  bool keep_checkpoints = false;
  std::optional<std::filesystem::path> lambda_path;
  std::function<void(const std::string&)> log;
};

/// Writes the synthetic CSV to <output>/data.csv and returns its path.
std::filesystem::path cmd_generate(const RunConfig& config, const RunOptions& options);

/// Runs the sweep; writes config.json, trials.jsonl, lambda_top.json and
/// tune_timing.jsonl. Returns the lambda_top document.
nlohmann::json cmd_tune(const RunConfig& config, const RunOptions& options);

/// Trains one model (lambda_top when the config searches) and writes its
/// checkpoint, epoch log and metrics.
nlohmann::json cmd_train(const RunConfig& config, const RunOptions& options);

/// K-run evaluation plus optional ensemble; writes report.json, report.md
/// and eval_timing.json. Returns the report.
nlohmann::json cmd_evaluate(const RunConfig& config, const RunOptions& options);

/// Averages the checkpoints left by `evaluate --keep-checkpoints`.
nlohmann::json cmd_ensemble(const RunConfig& config, const RunOptions& options);

/// Markdown of a verdict table produced by compare_reports.
std::string render_comparison(const nlohmann::json& comparison);

nlohmann::json read_json_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace tsbench
