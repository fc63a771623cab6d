#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tsbench/common.hpp"

namespace tsbench {

enum class TransformKind { kNone, kZ, kLog1p, kZLog1p };
enum class TransformScope { kPerSeries, kGlobal };
enum class Postprocess { kNone, kClipZeroRound };

std::string_view to_string(TransformKind kind);
std::string_view to_string(TransformScope scope);
std::string_view to_string(Postprocess post);
TransformKind parse_transform_kind(std::string_view text);
TransformScope parse_transform_scope(std::string_view text);
Postprocess parse_postprocess(std::string_view text);

struct DatasetProfile {
  std::string name = "custom";
  std::int64_t sample_rate_seconds = 3600;
  std::size_t lookback = 1;
  std::size_t horizon = 1;
  bool zero_prefix_trim = false;
  /// Minimum number of training-range observations a series must keep. 0
  /// disables length filtering.
  std::size_t min_train_length = 0;
  TransformKind transform_kind = TransformKind::kNone;
  TransformScope transform_scope = TransformScope::kPerSeries;
  Postprocess postprocess = Postprocess::kNone;
  /// Zero weight is assigned to the first N target points of the test split.
  std::size_t test_mask_prefix = 0;
};

/// Throws kInvalidArgument naming the first violated profile invariant.
void validate_profile(const DatasetProfile& profile);

struct Series {
  std::string id;
  std::vector<std::int64_t> timestamps;  // epoch seconds, strictly increasing
  std::vector<double> target;
  Matrix observed_covariates;  // T x k_o
  Matrix known_covariates;     // T x k_k
  std::vector<double> statics;
  std::vector<double> weight_mask;  // T entries in [0, 1]

  std::size_t length() const { return target.size(); }
};

/// Half-open timestamp range [begin, end).
struct TimeRange {
  std::int64_t begin = 0;
  std::int64_t end = 0;
  bool contains(std::int64_t t) const { return t >= begin && t < end; }
};

struct SplitBoundaries {
  TimeRange train;
  TimeRange val;
  TimeRange test;
};

/// Throws kInvalidArgument unless train < val < test with no overlap.
void validate_boundaries(const SplitBoundaries& b);

struct TransformStats {
  double mean = 0.0;
  double stddev = 1.0;
};

struct FittedTransform {
  TransformKind kind = TransformKind::kNone;
  TransformScope scope = TransformScope::kPerSeries;
  std::map<std::string, TransformStats> per_series;
  TransformStats global;

  static constexpr double kStdFloor = 1e-8;

  const TransformStats& stats_for(std::string_view series_id) const;
};

class TimeSeriesDataset {
 public:
  TimeSeriesDataset() = default;
  TimeSeriesDataset(std::vector<Series> series, DatasetProfile profile);

  const std::vector<Series>& series() const { return series_; }
  const DatasetProfile& profile() const { return profile_; }
  const std::optional<SplitBoundaries>& splits() const { return splits_; }
  const std::optional<FittedTransform>& transform() const { return transform_; }
  std::size_t size() const { return series_.size(); }

  TimeSeriesDataset with_profile(DatasetProfile profile) const;
  TimeSeriesDataset with_splits(SplitBoundaries splits) const;
  TimeSeriesDataset with_transform(FittedTransform transform) const;
  TimeSeriesDataset with_series(std::vector<Series> series) const;

  /// Content hash over ids, timestamps and target bit patterns.
  std::string fingerprint() const;

 private:
  std::vector<Series> series_;
  DatasetProfile profile_;
  std::optional<SplitBoundaries> splits_;
  std::optional<FittedTransform> transform_;
};

// ---------------------------------------------------------------------------
// Ingest

enum class TimestampFormat { kIso8601, kEpochSeconds };

struct CsvSchema {
  std::string id_column = "series_id";
  std::string timestamp_column = "timestamp";
  std::string target_column = "value";
  TimestampFormat timestamp_format = TimestampFormat::kEpochSeconds;
  std::vector<std::string> observed_covariates;
  std::vector<std::string> known_covariates;
  std::vector<std::string> statics;
  std::string weight_column;  // empty: all-ones mask
  /// Expected spacing between consecutive timestamps; 0 infers it from the
  /// first series and enforces it everywhere.
  std::int64_t sample_rate_seconds = 0;
};

/// Parses "YYYY-MM-DD", "YYYY-MM-DD HH:MM[:SS]" or "YYYY-MM-DDTHH:MM[:SS][Z]"
/// as UTC epoch seconds.
std::optional<std::int64_t> parse_iso8601(std::string_view text);
std::string format_iso8601(std::int64_t epoch_seconds);

TimeSeriesDataset ingest_csv(const std::filesystem::path& path, const CsvSchema& schema,
                             const DatasetProfile& profile = {});
TimeSeriesDataset ingest_csv_text(std::string_view text, const CsvSchema& schema,
                                  const DatasetProfile& profile = {});

// ---------------------------------------------------------------------------
// Profile filtering and splitting

struct FilterReport {
  std::size_t dropped = 0;
  std::size_t trimmed_points = 0;
};

/// Trims leading zeros (when enabled) and drops series with fewer than
/// min_train_length observations inside the training range (the whole series
/// when the dataset is unsplit). Throws kEmptyDataset when nothing survives.
TimeSeriesDataset apply_profile_filters(const TimeSeriesDataset& dataset,
                                        FilterReport* report = nullptr);

/// Boundaries that hold out the final `val_steps` and `test_steps` samples of
/// the longest series for validation and test.
SplitBoundaries boundaries_from_counts(const TimeSeriesDataset& dataset, std::size_t val_steps,
                                       std::size_t test_steps);

enum class SplitKind { kTrain, kVal, kTest };
std::string_view to_string(SplitKind kind);

/// Per-series index window of a split: targets in [target_begin, target_end)
/// may be forecast; encoder reads start no earlier than context_begin.
struct SeriesSpan {
  std::size_t series_index = 0;
  std::size_t context_begin = 0;
  std::size_t target_begin = 0;
  std::size_t target_end = 0;
  std::size_t target_count() const { return target_end - target_begin; }
};

class SplitView {
 public:
  SplitView(std::shared_ptr<const TimeSeriesDataset> dataset, SplitKind kind,
            std::vector<SeriesSpan> spans);

  const TimeSeriesDataset& dataset() const { return *dataset_; }
  const std::shared_ptr<const TimeSeriesDataset>& dataset_ptr() const { return dataset_; }
  SplitKind kind() const { return kind_; }
  const std::vector<SeriesSpan>& spans() const { return spans_; }
  std::size_t total_targets() const;

 private:
  std::shared_ptr<const TimeSeriesDataset> dataset_;
  SplitKind kind_;
  std::vector<SeriesSpan> spans_;
};

struct DatasetSplits {
  SplitView train;
  SplitView val;
  SplitView test;
};

/// Builds the three split views over the dataset's boundaries. With
/// context_bleed, val/test encoders may read data preceding the split start.
/// Throws kEmptySplit naming the split when no series has data in it.
DatasetSplits split_by_time(std::shared_ptr<const TimeSeriesDataset> dataset,
                            bool context_bleed = true);

// ---------------------------------------------------------------------------
// Transforms

/// Fits on the training span of every series. Requires targets >= 0 for the
/// log variants.
FittedTransform fit_transform(const SplitView& train, const DatasetProfile& profile);

double apply_transform(double value, const TransformStats& stats, TransformKind kind);
double inverse_transform(double value, const TransformStats& stats, TransformKind kind);
std::vector<double> apply_transform(std::span<const double> values, const FittedTransform& fitted,
                                    std::string_view series_id);
std::vector<double> inverse_transform(std::span<const double> values, const FittedTransform& fitted,
                                      std::string_view series_id);

// ---------------------------------------------------------------------------
// Windowing

struct WindowRef {
  std::size_t series_index = 0;
  std::size_t start = 0;  // first encoder index
};

struct WindowBatch {
  Matrix encoder_target;  // B x l, transformed space
  Matrix decoder_target;  // B x h, transformed space
  Matrix decoder_raw;     // B x h, original space
  Matrix decoder_weight;  // B x h
  std::vector<Matrix> observed_covariates;  // per row: l x k_o
  std::vector<Matrix> known_covariates;     // per row: (l + h) x k_k
  Matrix statics;                           // B x s
  std::vector<std::size_t> series_index;
  std::vector<std::size_t> window_start;

  std::size_t rows() const { return static_cast<std::size_t>(encoder_target.rows()); }
};

/// Enumerates every valid window of the view in (series, start) order. Series
/// too short for one window are skipped and counted in `skipped`.
std::vector<WindowRef> enumerate_windows(const SplitView& view, std::size_t lookback,
                                         std::size_t horizon, std::size_t stride = 1,
                                         std::size_t* skipped = nullptr);

/// Deterministic Fisher-Yates shuffle.
void shuffle_windows(std::vector<WindowRef>& windows, std::uint64_t seed);

/// Materializes the given windows. Targets are transformed with the
/// dataset's fitted transform when one is present.
WindowBatch make_batch(const SplitView& view, std::span<const WindowRef> windows,
                       std::size_t lookback, std::size_t horizon);

/// Window enumeration, optional shuffle and batching in one pass.
std::vector<WindowBatch> generate_windows(const SplitView& view, std::size_t lookback,
                                          std::size_t horizon, std::size_t stride,
                                          std::size_t batch_size,
                                          std::optional<std::uint64_t> shuffle_seed = std::nullopt);

// ---------------------------------------------------------------------------
// Post-processing

/// Maps a B x h forecast from transformed space back to original units, then
/// applies the profile's clip-and-round rule. Throws kNonFinite on NaN.
Matrix postprocess_forecast(const Matrix& raw, const FittedTransform& fitted,
                            const DatasetProfile& profile, const WindowBatch& batch,
                            const TimeSeriesDataset& dataset);
/// Scalar form used when the series id is known directly.
double postprocess_value(double raw, const TransformStats& stats, TransformKind kind,
                         Postprocess post);

}  // namespace tsbench
