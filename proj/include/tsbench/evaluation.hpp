#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tsbench/models.hpp"
#include "tsbench/objective.hpp"

namespace tsbench {

enum class VarianceKind { kPopulation, kSample };

struct SampleStats {
  std::vector<double> samples;
  double mean = 0.0;
  double variance = 0.0;

  double stddev() const;
};

/// Mean and variance of `samples`; population variance divides by K.
SampleStats summarize(std::vector<double> samples, VarianceKind kind = VarianceKind::kPopulation);

struct RunRecord {
  std::size_t run = 0;
  std::uint64_t seed = 0;
  bool ok = true;
  std::string error;
  MetricResult metrics;
  std::size_t convergence_epoch = 0;
  double wall_time_seconds = 0.0;
};

struct ModelStats {
  std::string name;
  std::vector<RunRecord> runs;  // every run, failed ones included
  std::map<std::string, SampleStats> metrics;  // "mae", "rmse", "smape"
  VarianceKind variance_kind = VarianceKind::kPopulation;

  /// Number of successful runs that enter the statistics.
  std::size_t k() const;
  const SampleStats& metric(MetricKind kind) const;
};

struct EvaluationPlan {
  std::size_t k = 16;
  std::uint64_t base_seed = 0;
  std::size_t jobs = 1;
  VarianceKind variance_kind = VarianceKind::kPopulation;
};

/// Trains and tests one seeded instance; throwing marks the run failed.
using RunExecutor = std::function<RunRecord(std::size_t run, std::uint64_t seed)>;

/// Executes runs with seeds base_seed + 0..K-1 (concurrently when jobs > 1)
/// and aggregates per-metric samples. Failed runs are excluded; fewer than
/// two survivors throws kTrialFailed.
ModelStats evaluate_k_runs(const std::string& name, const EvaluationPlan& plan, const RunExecutor& executor,
                           std::vector<std::string>* warnings = nullptr);

/// Recomputes the aggregate statistics from the successful runs.
void aggregate(ModelStats& stats);

enum class Verdict { kM1Better, kM2Better, kNoDifference };
enum class Denominator { kPaper, kWelch };
std::string_view to_string(Verdict v);
std::string_view to_string(Denominator d);
Denominator parse_denominator(std::string_view text);

struct ComparisonConfig {
  double alpha = 0.05;
  Denominator denominator = Denominator::kPaper;
};

/// Two-sided critical value of Student's t at the given degrees of freedom.
double t_critical(double alpha, std::size_t df);

struct Comparison {
  double t = 0.0;
  double t_crit = 0.0;
  std::size_t k = 0;
  std::size_t df = 0;
  double alpha = 0.05;
  Denominator denominator = Denominator::kPaper;
  Verdict verdict = Verdict::kNoDifference;
};

/// t = (E1 - E2) / d with d = sqrt(v1 + v2) / K (PAPER) or sqrt((v1 + v2) / K)
/// (WELCH); h0 is rejected when |t| > t_crit(alpha, 2K - 2).
Comparison compare(double mean1, double var1, double mean2, double var2, std::size_t k,
                   const ComparisonConfig& config);
Comparison compare(const SampleStats& a, const SampleStats& b, const ComparisonConfig& config);
nlohmann::json to_json(const Comparison& c);

/// Elementwise mean of member point forecasts (the mean component of
/// Gaussian heads).
Matrix ensemble_mean(const std::vector<Matrix>& members);
Matrix ensemble_predict(const std::vector<const Forecaster*>& models, const Matrix& encoder);

nlohmann::json to_json(const MetricResult& m);
nlohmann::json to_json(const ModelStats& stats);

struct ReportInputs {
  std::vector<ModelStats> models;
  /// Per-model configuration echoed into the report (lambda_top, EMA/CL).
  std::vector<nlohmann::json> model_configs;
  /// Ensemble metrics per model name, when ensembling ran.
  std::map<std::string, MetricResult> ensembles;
  std::map<std::string, std::vector<MetricResult>> ensemble_members;
  std::vector<std::string> metrics{"mae", "rmse", "smape"};
  ComparisonConfig comparison;
  nlohmann::json trial_summary;
  nlohmann::json provenance;
  std::string dataset_fingerprint;
};

/// Assembles the report: mean +- std per metric per model, ensemble rows,
/// pairwise verdicts under both denominators, EMA/CL flags, telemetry.
nlohmann::json build_report(const ReportInputs& inputs);

/// Markdown rendering of a report produced by build_report.
std::string render_markdown(const nlohmann::json& report);

/// Compares two reports metric by metric under both conventions. Throws
/// kInvalidArgument on mismatched dataset fingerprints or K.
nlohmann::json compare_reports(const nlohmann::json& a, const nlohmann::json& b, double alpha);

/// Extracts the per-run samples of `metric` for the first model of a report.
SampleStats report_samples(const nlohmann::json& report, const std::string& metric, std::size_t model_index = 0);

}  // namespace tsbench
