#include "tsbench/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>

namespace tsbench {

// ---------------------------------------------------------------------------
// Enum names

std::string_view to_string(TransformKind kind) {
  switch (kind) {
    case TransformKind::kNone: return "NONE";
    case TransformKind::kZ: return "Z";
    case TransformKind::kLog1p: return "LOG1P";
    case TransformKind::kZLog1p: return "Z_LOG1P";
  }
  return "NONE";
}

std::string_view to_string(TransformScope scope) {
  return scope == TransformScope::kGlobal ? "GLOBAL" : "PER_SERIES";
}

std::string_view to_string(Postprocess post) {
  return post == Postprocess::kClipZeroRound ? "CLIP_ZERO_ROUND" : "NONE";
}

std::string_view to_string(SplitKind kind) {
  switch (kind) {
    case SplitKind::kTrain: return "train";
    case SplitKind::kVal: return "val";
    case SplitKind::kTest: return "test";
  }
  return "train";
}

TransformKind parse_transform_kind(std::string_view text) {
  if (text == "NONE") return TransformKind::kNone;
  if (text == "Z") return TransformKind::kZ;
  if (text == "LOG1P") return TransformKind::kLog1p;
  if (text == "Z_LOG1P") return TransformKind::kZLog1p;
  fail(ErrorCode::kInvalidArgument, "unknown transform kind '" + std::string(text) + "'");
}

TransformScope parse_transform_scope(std::string_view text) {
  if (text == "PER_SERIES") return TransformScope::kPerSeries;
  if (text == "GLOBAL") return TransformScope::kGlobal;
  fail(ErrorCode::kInvalidArgument, "unknown transform scope '" + std::string(text) + "'");
}

Postprocess parse_postprocess(std::string_view text) {
  if (text == "NONE") return Postprocess::kNone;
  if (text == "CLIP_ZERO_ROUND") return Postprocess::kClipZeroRound;
  fail(ErrorCode::kInvalidArgument, "unknown postprocess '" + std::string(text) + "'");
}

void validate_profile(const DatasetProfile& p) {
  require(p.lookback >= 1, ErrorCode::kInvalidArgument, "lookback must be >= 1");
  require(p.horizon >= 1, ErrorCode::kInvalidArgument, "horizon must be >= 1");
  require(p.sample_rate_seconds > 0, ErrorCode::kInvalidArgument,
          "sample_rate_seconds must be > 0");
  require(p.min_train_length == 0 || p.min_train_length >= p.lookback + p.horizon,
          ErrorCode::kInvalidArgument, "min_train_length must be 0 or >= lookback + horizon");
}

void validate_boundaries(const SplitBoundaries& b) {
  require(b.train.begin < b.train.end, ErrorCode::kInvalidArgument, "train range is empty");
  require(b.val.begin < b.val.end, ErrorCode::kInvalidArgument, "val range is empty");
  require(b.test.begin < b.test.end, ErrorCode::kInvalidArgument, "test range is empty");
  require(b.train.end <= b.val.begin, ErrorCode::kInvalidArgument,
          "train and val ranges overlap or are out of order");
  require(b.val.end <= b.test.begin, ErrorCode::kInvalidArgument,
          "val and test ranges overlap or are out of order");
}

const TransformStats& FittedTransform::stats_for(std::string_view series_id) const {
  if (scope == TransformScope::kGlobal || kind == TransformKind::kNone ||
      kind == TransformKind::kLog1p) {
    return global;
  }
  auto it = per_series.find(std::string(series_id));
  if (it == per_series.end()) {
    fail(ErrorCode::kUnknownSeries, "no fitted statistics for series '" + std::string(series_id) + "'");
  }
  return it->second;
}

// ---------------------------------------------------------------------------
// TimeSeriesDataset

namespace {

void check_series(const Series& s) {
  const std::size_t n = s.target.size();
  require(s.timestamps.size() == n, ErrorCode::kShapeMismatch,
          "series '" + s.id + "': timestamp count differs from target length");
  require(s.weight_mask.size() == n, ErrorCode::kShapeMismatch,
          "series '" + s.id + "': weight mask length differs from target length");
  require(static_cast<std::size_t>(s.observed_covariates.rows()) == n ||
              s.observed_covariates.cols() == 0,
          ErrorCode::kShapeMismatch, "series '" + s.id + "': observed covariate rows differ");
  require(static_cast<std::size_t>(s.known_covariates.rows()) == n ||
              s.known_covariates.cols() == 0,
          ErrorCode::kShapeMismatch, "series '" + s.id + "': known covariate rows differ");
  for (std::size_t i = 1; i < n; ++i) {
    if (s.timestamps[i] <= s.timestamps[i - 1]) {
      fail(ErrorCode::kDuplicateTimestamp,
           "series '" + s.id + "': timestamps not strictly increasing at index " + std::to_string(i));
    }
  }
  for (double w : s.weight_mask) {
    require(w >= 0.0 && w <= 1.0, ErrorCode::kInvalidArgument,
            "series '" + s.id + "': weight mask outside [0, 1]");
  }
}

}  // namespace

TimeSeriesDataset::TimeSeriesDataset(std::vector<Series> series, DatasetProfile profile)
    : series_(std::move(series)), profile_(std::move(profile)) {
  for (auto& s : series_) {
    if (s.weight_mask.empty()) s.weight_mask.assign(s.target.size(), 1.0);
    check_series(s);
  }
}

TimeSeriesDataset TimeSeriesDataset::with_profile(DatasetProfile profile) const {
  TimeSeriesDataset out = *this;
  out.profile_ = std::move(profile);
  return out;
}

TimeSeriesDataset TimeSeriesDataset::with_splits(SplitBoundaries splits) const {
  validate_boundaries(splits);
  TimeSeriesDataset out = *this;
  out.splits_ = splits;
  return out;
}

TimeSeriesDataset TimeSeriesDataset::with_transform(FittedTransform transform) const {
  TimeSeriesDataset out = *this;
  out.transform_ = std::move(transform);
  return out;
}

TimeSeriesDataset TimeSeriesDataset::with_series(std::vector<Series> series) const {
  TimeSeriesDataset out(std::move(series), profile_);
  out.splits_ = splits_;
  out.transform_ = transform_;
  return out;
}

std::string TimeSeriesDataset::fingerprint() const {
  Fnv1a h;
  h.update_u64(series_.size());
  for (const auto& s : series_) {
    h.update_str(s.id);
    h.update_u64(s.length());
    for (auto t : s.timestamps) h.update_u64(static_cast<std::uint64_t>(t));
    for (double v : s.target) h.update_f64(v);
  }
  return h.hex();
}

// ---------------------------------------------------------------------------
// Timestamps

std::optional<std::int64_t> parse_iso8601(std::string_view text) {
  using namespace std::chrono;
  auto num = [&](std::size_t pos, std::size_t len) -> std::optional<int> {
    if (pos + len > text.size()) return std::nullopt;
    int v = 0;
    auto [ptr, ec] = std::from_chars(text.data() + pos, text.data() + pos + len, v);
    if (ec != std::errc{} || ptr != text.data() + pos + len) return std::nullopt;
    return v;
  };
  if (text.size() < 10 || text[4] != '-' || text[7] != '-') return std::nullopt;
  auto y = num(0, 4), mo = num(5, 2), d = num(8, 2);
  if (!y || !mo || !d) return std::nullopt;
  const year_month_day ymd{year{*y}, month{static_cast<unsigned>(*mo)}, day{static_cast<unsigned>(*d)}};
  if (!ymd.ok()) return std::nullopt;
  int hh = 0, mm = 0, ss = 0;
  std::size_t pos = 10;
  if (pos < text.size()) {
    if (text[pos] != 'T' && text[pos] != ' ') return std::nullopt;
    auto h = num(pos + 1, 2), m = num(pos + 4, 2);
    if (!h || !m || pos + 3 >= text.size() || text[pos + 3] != ':') return std::nullopt;
    hh = *h;
    mm = *m;
    pos += 6;
    if (pos < text.size() && text[pos] == ':') {
      auto s = num(pos + 1, 2);
      if (!s) return std::nullopt;
      ss = *s;
      pos += 3;
    }
    if (pos < text.size() && text[pos] == 'Z') ++pos;
    if (pos != text.size()) return std::nullopt;
    if (hh > 23 || mm > 59 || ss > 60) return std::nullopt;
  }
  const auto days = sys_days{ymd}.time_since_epoch().count();
  return static_cast<std::int64_t>(days) * 86400 + hh * 3600 + mm * 60 + ss;
}

std::string format_iso8601(std::int64_t epoch_seconds) {
  using namespace std::chrono;
  std::int64_t days = epoch_seconds / 86400;
  std::int64_t rem = epoch_seconds % 86400;
  if (rem < 0) {
    rem += 86400;
    --days;
  }
  const year_month_day ymd{sys_days{std::chrono::days{days}}};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<int>(rem / 3600), static_cast<int>((rem / 60) % 60),
                static_cast<int>(rem % 60));
  return buf;
}

// ---------------------------------------------------------------------------
// CSV ingest

namespace {

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else {
      field.push_back(c);
    }
  }
  fields.push_back(std::move(field));
  return fields;
}

std::optional<double> parse_double(std::string_view s) {
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
  if (s.empty()) return std::nullopt;
  std::string tmp(s);
  char* end = nullptr;
  const double v = std::strtod(tmp.c_str(), &end);
  if (end != tmp.c_str() + tmp.size()) return std::nullopt;
  return v;
}

std::optional<std::int64_t> parse_int(std::string_view s) {
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

struct Row {
  std::int64_t timestamp;
  double target;
  std::vector<double> observed;
  std::vector<double> known;
  std::vector<double> statics;
  double weight;
  std::size_t line;
};

}  // namespace

TimeSeriesDataset ingest_csv_text(std::string_view text, const CsvSchema& schema,
                                  const DatasetProfile& profile) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  auto next_line = [&](std::string_view& out) {
    while (pos < text.size()) {
      std::size_t end = text.find('\n', pos);
      if (end == std::string_view::npos) end = text.size();
      out = text.substr(pos, end - pos);
      pos = end + 1;
      ++line_no;
      if (!out.empty() && out.back() == '\r') out.remove_suffix(1);
      if (!out.empty()) return true;
    }
    return false;
  };

  std::string_view line;
  if (!next_line(line)) fail(ErrorCode::kEmptyDataset, "CSV has no header row");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.remove_prefix(3);
  const auto header = split_csv_line(line);
  auto column = [&](const std::string& name) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) fail(ErrorCode::kMalformedRow, "CSV header lacks column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t id_col = column(schema.id_column);
  const std::size_t ts_col = column(schema.timestamp_column);
  const std::size_t y_col = column(schema.target_column);
  std::vector<std::size_t> obs_cols, known_cols, static_cols;
  for (const auto& c : schema.observed_covariates) obs_cols.push_back(column(c));
  for (const auto& c : schema.known_covariates) known_cols.push_back(column(c));
  for (const auto& c : schema.statics) static_cols.push_back(column(c));
  const std::optional<std::size_t> w_col =
      schema.weight_column.empty() ? std::nullopt : std::optional{column(schema.weight_column)};

  // Categorical statics are encoded by first-seen order per column.
  std::vector<std::unordered_map<std::string, double>> static_codes(static_cols.size());

  std::vector<std::string> order;
  std::unordered_map<std::string, std::vector<Row>> rows;
  while (next_line(line)) {
    const auto fields = split_csv_line(line);
    const std::string where = "line " + std::to_string(line_no);
    if (fields.size() != header.size()) {
      fail(ErrorCode::kMalformedRow, where + ": expected " + std::to_string(header.size()) +
                                         " fields, found " + std::to_string(fields.size()));
    }
    Row row{};
    row.line = line_no;
    const auto& ts_text = fields[ts_col];
    auto ts = schema.timestamp_format == TimestampFormat::kIso8601 ? parse_iso8601(ts_text)
                                                                    : parse_int(ts_text);
    if (!ts) fail(ErrorCode::kMalformedRow, where + ": bad timestamp '" + ts_text + "'");
    row.timestamp = *ts;
    auto y = parse_double(fields[y_col]);
    if (!y) fail(ErrorCode::kMalformedRow, where + ": bad target '" + fields[y_col] + "'");
    row.target = *y;
    auto numeric = [&](std::size_t col) {
      auto v = parse_double(fields[col]);
      if (!v) fail(ErrorCode::kMalformedRow, where + ": bad number in column '" + header[col] + "'");
      return *v;
    };
    for (auto c : obs_cols) row.observed.push_back(numeric(c));
    for (auto c : known_cols) row.known.push_back(numeric(c));
    for (std::size_t k = 0; k < static_cols.size(); ++k) {
      const auto& f = fields[static_cols[k]];
      if (auto v = parse_double(f)) {
        row.statics.push_back(*v);
      } else {
        auto& codes = static_codes[k];
        auto [it, inserted] = codes.emplace(f, static_cast<double>(codes.size()));
        row.statics.push_back(it->second);
      }
    }
    row.weight = w_col ? numeric(*w_col) : 1.0;
    const auto& id = fields[id_col];
    auto [it, inserted] = rows.try_emplace(id);
    if (inserted) order.push_back(id);
    it->second.push_back(std::move(row));
  }
  if (order.empty()) fail(ErrorCode::kEmptyDataset, "CSV contains no data rows");

  std::int64_t rate = schema.sample_rate_seconds;
  std::vector<Series> series;
  series.reserve(order.size());
  for (const auto& id : order) {
    auto& rs = rows[id];
    std::stable_sort(rs.begin(), rs.end(),
                     [](const Row& a, const Row& b) { return a.timestamp < b.timestamp; });
    for (std::size_t i = 1; i < rs.size(); ++i) {
      if (rs[i].timestamp == rs[i - 1].timestamp) {
        fail(ErrorCode::kDuplicateTimestamp,
             "series '" + id + "' has duplicate timestamp " + std::to_string(rs[i].timestamp) +
                 " (lines " + std::to_string(rs[i - 1].line) + " and " + std::to_string(rs[i].line) + ")");
      }
      const std::int64_t gap = rs[i].timestamp - rs[i - 1].timestamp;
      if (rate == 0) rate = gap;
      if (gap != rate) {
        fail(ErrorCode::kIrregularSampling,
             "series '" + id + "' is not sampled every " + std::to_string(rate) + "s near line " +
                 std::to_string(rs[i].line));
      }
    }
    Series s;
    s.id = id;
    const auto n = static_cast<Eigen::Index>(rs.size());
    s.observed_covariates.resize(n, static_cast<Eigen::Index>(obs_cols.size()));
    s.known_covariates.resize(n, static_cast<Eigen::Index>(known_cols.size()));
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& r = rs[static_cast<std::size_t>(i)];
      s.timestamps.push_back(r.timestamp);
      s.target.push_back(r.target);
      s.weight_mask.push_back(r.weight);
      for (std::size_t k = 0; k < r.observed.size(); ++k) s.observed_covariates(i, static_cast<Eigen::Index>(k)) = r.observed[k];
      for (std::size_t k = 0; k < r.known.size(); ++k) s.known_covariates(i, static_cast<Eigen::Index>(k)) = r.known[k];
    }
    s.statics = rs.front().statics;
    series.push_back(std::move(s));
  }
  DatasetProfile p = profile;
  if (rate > 0 && schema.sample_rate_seconds == 0 && p.sample_rate_seconds == 0) p.sample_rate_seconds = rate;
  return TimeSeriesDataset(std::move(series), std::move(p));
}

TimeSeriesDataset ingest_csv(const std::filesystem::path& path, const CsvSchema& schema,
                             const DatasetProfile& profile) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return ingest_csv_text(buf.str(), schema, profile);
}

// ---------------------------------------------------------------------------
// Filtering and splitting

namespace {

Series slice_series(const Series& s, std::size_t begin) {
  Series out;
  out.id = s.id;
  out.statics = s.statics;
  out.timestamps.assign(s.timestamps.begin() + static_cast<std::ptrdiff_t>(begin), s.timestamps.end());
  out.target.assign(s.target.begin() + static_cast<std::ptrdiff_t>(begin), s.target.end());
  out.weight_mask.assign(s.weight_mask.begin() + static_cast<std::ptrdiff_t>(begin), s.weight_mask.end());
  const auto rows = static_cast<Eigen::Index>(s.length() - begin);
  out.observed_covariates = s.observed_covariates.cols() ? Matrix(s.observed_covariates.bottomRows(rows))
                                                         : Matrix(rows, 0);
  out.known_covariates = s.known_covariates.cols() ? Matrix(s.known_covariates.bottomRows(rows))
                                                   : Matrix(rows, 0);
  return out;
}

std::size_t lower_index(const std::vector<std::int64_t>& ts, std::int64_t t) {
  return static_cast<std::size_t>(std::lower_bound(ts.begin(), ts.end(), t) - ts.begin());
}

}  // namespace

TimeSeriesDataset apply_profile_filters(const TimeSeriesDataset& dataset, FilterReport* report) {
  const auto& profile = dataset.profile();
  FilterReport local;
  std::vector<Series> kept;
  for (const auto& s : dataset.series()) {
    std::size_t first = 0;
    if (profile.zero_prefix_trim) {
      while (first < s.length() && s.target[first] == 0.0) ++first;
      local.trimmed_points += first;
      if (first == s.length()) {
        ++local.dropped;
        continue;
      }
    }
    Series trimmed = first == 0 ? s : slice_series(s, first);
    if (profile.min_train_length > 0) {
      std::size_t train_len = trimmed.length();
      if (dataset.splits()) {
        const auto& r = dataset.splits()->train;
        train_len = lower_index(trimmed.timestamps, r.end) - lower_index(trimmed.timestamps, r.begin);
      }
      if (train_len < profile.min_train_length) {
        ++local.dropped;
        continue;
      }
    }
    kept.push_back(std::move(trimmed));
  }
  if (report) *report = local;
  if (kept.empty()) fail(ErrorCode::kEmptyDataset, "every series was removed by the profile filters");
  return dataset.with_series(std::move(kept));
}

SplitBoundaries boundaries_from_counts(const TimeSeriesDataset& dataset, std::size_t val_steps,
                                       std::size_t test_steps) {
  require(dataset.size() > 0, ErrorCode::kEmptyDataset, "dataset is empty");
  std::int64_t first = dataset.series().front().timestamps.front();
  std::int64_t last = dataset.series().front().timestamps.back();
  for (const auto& s : dataset.series()) {
    first = std::min(first, s.timestamps.front());
    last = std::max(last, s.timestamps.back());
  }
  const std::int64_t rate = dataset.profile().sample_rate_seconds;
  SplitBoundaries b;
  b.test.end = last + rate;
  b.test.begin = b.test.end - static_cast<std::int64_t>(test_steps) * rate;
  b.val.end = b.test.begin;
  b.val.begin = b.val.end - static_cast<std::int64_t>(val_steps) * rate;
  b.train.end = b.val.begin;
  b.train.begin = first;
  return b;
}

SplitView::SplitView(std::shared_ptr<const TimeSeriesDataset> dataset, SplitKind kind,
                     std::vector<SeriesSpan> spans)
    : dataset_(std::move(dataset)), kind_(kind), spans_(std::move(spans)) {}

std::size_t SplitView::total_targets() const {
  std::size_t n = 0;
  for (const auto& s : spans_) n += s.target_count();
  return n;
}

DatasetSplits split_by_time(std::shared_ptr<const TimeSeriesDataset> dataset, bool context_bleed) {
  require(dataset != nullptr, ErrorCode::kInvalidArgument, "null dataset");
  require(dataset->splits().has_value(), ErrorCode::kInvalidArgument,
          "dataset has no split boundaries");
  const auto& b = *dataset->splits();
  auto make = [&](SplitKind kind, const TimeRange& range, bool bleed) {
    std::vector<SeriesSpan> spans;
    for (std::size_t i = 0; i < dataset->size(); ++i) {
      const auto& ts = dataset->series()[i].timestamps;
      SeriesSpan span;
      span.series_index = i;
      span.target_begin = lower_index(ts, range.begin);
      span.target_end = lower_index(ts, range.end);
      span.context_begin = bleed ? 0 : span.target_begin;
      if (span.target_end > span.target_begin) spans.push_back(span);
    }
    if (spans.empty()) {
      fail(ErrorCode::kEmptySplit, std::string(to_string(kind)) + " split is empty for every series");
    }
    return SplitView(dataset, kind, std::move(spans));
  };
  return DatasetSplits{make(SplitKind::kTrain, b.train, false),
                       make(SplitKind::kVal, b.val, context_bleed),
                       make(SplitKind::kTest, b.test, context_bleed)};
}

// ---------------------------------------------------------------------------
// Transforms

namespace {

bool uses_log(TransformKind k) { return k == TransformKind::kLog1p || k == TransformKind::kZLog1p; }
bool uses_z(TransformKind k) { return k == TransformKind::kZ || k == TransformKind::kZLog1p; }

TransformStats fit_stats(std::span<const double> values) {
  TransformStats st;
  if (values.empty()) return st;
  double sum = 0.0;
  for (double v : values) sum += v;
  st.mean = sum / static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - st.mean) * (v - st.mean);
  st.stddev = std::max(std::sqrt(ss / static_cast<double>(values.size())), FittedTransform::kStdFloor);
  return st;
}

}  // namespace

FittedTransform fit_transform(const SplitView& train, const DatasetProfile& profile) {
  FittedTransform fitted;
  fitted.kind = profile.transform_kind;
  fitted.scope = profile.transform_scope;
  require(train.total_targets() > 0, ErrorCode::kEmptySplit, "training split is empty");
  const auto& data = train.dataset();
  std::vector<double> pooled;
  for (const auto& span : train.spans()) {
    const auto& s = data.series()[span.series_index];
    std::vector<double> values(s.target.begin() + static_cast<std::ptrdiff_t>(span.target_begin),
                               s.target.begin() + static_cast<std::ptrdiff_t>(span.target_end));
    if (uses_log(fitted.kind)) {
      for (double& v : values) {
        require(v >= 0.0, ErrorCode::kInvalidArgument,
                "series '" + s.id + "' has negative values; log1p transforms require targets >= 0");
        v = std::log1p(v);
      }
    }
    if (!uses_z(fitted.kind)) continue;
    if (fitted.scope == TransformScope::kPerSeries) {
      fitted.per_series[s.id] = fit_stats(values);
    } else {
      pooled.insert(pooled.end(), values.begin(), values.end());
    }
  }
  if (uses_z(fitted.kind) && fitted.scope == TransformScope::kGlobal) fitted.global = fit_stats(pooled);
  return fitted;
}

double apply_transform(double x, const TransformStats& st, TransformKind kind) {
  switch (kind) {
    case TransformKind::kNone: return x;
    case TransformKind::kZ: return (x - st.mean) / st.stddev;
    case TransformKind::kLog1p: return std::log1p(x);
    case TransformKind::kZLog1p: return (std::log1p(x) - st.mean) / st.stddev;
  }
  return x;
}

double inverse_transform(double z, const TransformStats& st, TransformKind kind) {
  switch (kind) {
    case TransformKind::kNone: return z;
    case TransformKind::kZ: return z * st.stddev + st.mean;
    case TransformKind::kLog1p: return std::expm1(z);
    case TransformKind::kZLog1p: return std::expm1(z * st.stddev + st.mean);
  }
  return z;
}

std::vector<double> apply_transform(std::span<const double> values, const FittedTransform& fitted,
                                    std::string_view series_id) {
  const auto& st = fitted.stats_for(series_id);
  std::vector<double> out;
  out.reserve(values.size());
  for (double v : values) {
    if (uses_log(fitted.kind) && v < 0.0) {
      fail(ErrorCode::kInvalidArgument, "log1p transform applied to a negative value");
    }
    out.push_back(apply_transform(v, st, fitted.kind));
  }
  return out;
}

std::vector<double> inverse_transform(std::span<const double> values, const FittedTransform& fitted,
                                      std::string_view series_id) {
  const auto& st = fitted.stats_for(series_id);
  std::vector<double> out;
  out.reserve(values.size());
  for (double v : values) out.push_back(inverse_transform(v, st, fitted.kind));
  return out;
}

// ---------------------------------------------------------------------------
// Windowing

std::vector<WindowRef> enumerate_windows(const SplitView& view, std::size_t lookback,
                                         std::size_t horizon, std::size_t stride,
                                         std::size_t* skipped) {
  require(lookback >= 1 && horizon >= 1, ErrorCode::kInvalidArgument,
          "lookback and horizon must be >= 1");
  require(stride >= 1, ErrorCode::kInvalidArgument, "stride must be >= 1");
  std::vector<WindowRef> out;
  std::size_t skip_count = 0;
  for (const auto& span : view.spans()) {
    const std::size_t earliest_decoder = span.target_begin;
    std::size_t first = span.context_begin;
    if (earliest_decoder > lookback) first = std::max(first, earliest_decoder - lookback);
    if (span.target_end < lookback + horizon || span.target_end - lookback - horizon < first) {
      ++skip_count;
      continue;
    }
    const std::size_t last = span.target_end - lookback - horizon;
    for (std::size_t s = first; s <= last; s += stride) out.push_back({span.series_index, s});
  }
  if (skipped) *skipped = skip_count;
  return out;
}

void shuffle_windows(std::vector<WindowRef>& windows, std::uint64_t seed) {
  Rng rng(seed);
  for (std::size_t i = windows.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(windows[i - 1], windows[j]);
  }
}

WindowBatch make_batch(const SplitView& view, std::span<const WindowRef> windows,
                       std::size_t lookback, std::size_t horizon) {
  const auto& data = view.dataset();
  const auto& transform = data.transform();
  const auto B = static_cast<Eigen::Index>(windows.size());
  const auto l = static_cast<Eigen::Index>(lookback);
  const auto h = static_cast<Eigen::Index>(horizon);
  WindowBatch batch;
  batch.encoder_target.resize(B, l);
  batch.decoder_target.resize(B, h);
  batch.decoder_raw.resize(B, h);
  batch.decoder_weight.resize(B, h);
  const std::size_t n_static = data.size() ? data.series().front().statics.size() : 0;
  batch.statics.resize(B, static_cast<Eigen::Index>(n_static));
  batch.series_index.reserve(windows.size());
  batch.window_start.reserve(windows.size());

  std::vector<std::size_t> test_begin(data.size(), 0);
  if (view.kind() == SplitKind::kTest) {
    for (const auto& span : view.spans()) test_begin[span.series_index] = span.target_begin;
  }
  const std::size_t mask_prefix =
      view.kind() == SplitKind::kTest ? data.profile().test_mask_prefix : 0;

  for (Eigen::Index r = 0; r < B; ++r) {
    const auto& w = windows[static_cast<std::size_t>(r)];
    const auto& s = data.series()[w.series_index];
    require(w.start + lookback + horizon <= s.length(), ErrorCode::kInvalidArgument,
            "window exceeds series '" + s.id + "'");
    const TransformStats* st = transform ? &transform->stats_for(s.id) : nullptr;
    const TransformKind kind = transform ? transform->kind : TransformKind::kNone;
    auto fwd = [&](double v) {
      if (!st) return v;
      if (uses_log(kind) && v < 0.0) {
        fail(ErrorCode::kInvalidArgument, "series '" + s.id + "': log1p transform applied to a negative value");
      }
      return apply_transform(v, *st, kind);
    };
    for (Eigen::Index j = 0; j < l; ++j) batch.encoder_target(r, j) = fwd(s.target[w.start + static_cast<std::size_t>(j)]);
    for (Eigen::Index j = 0; j < h; ++j) {
      const std::size_t idx = w.start + lookback + static_cast<std::size_t>(j);
      batch.decoder_raw(r, j) = s.target[idx];
      batch.decoder_target(r, j) = fwd(s.target[idx]);
      double weight = s.weight_mask[idx];
      if (mask_prefix > 0 && idx < test_begin[w.series_index] + mask_prefix) weight = 0.0;
      batch.decoder_weight(r, j) = weight;
    }
    require(s.statics.size() == n_static, ErrorCode::kShapeMismatch,
            "series '" + s.id + "' has a different number of statics");
    for (std::size_t k = 0; k < n_static; ++k) batch.statics(r, static_cast<Eigen::Index>(k)) = s.statics[k];
    if (s.observed_covariates.cols() > 0) {
      batch.observed_covariates.push_back(
          s.observed_covariates.middleRows(static_cast<Eigen::Index>(w.start), l));
    }
    if (s.known_covariates.cols() > 0) {
      batch.known_covariates.push_back(
          s.known_covariates.middleRows(static_cast<Eigen::Index>(w.start), l + h));
    }
    batch.series_index.push_back(w.series_index);
    batch.window_start.push_back(w.start);
  }
  return batch;
}

std::vector<WindowBatch> generate_windows(const SplitView& view, std::size_t lookback,
                                          std::size_t horizon, std::size_t stride,
                                          std::size_t batch_size,
                                          std::optional<std::uint64_t> shuffle_seed) {
  require(batch_size >= 1, ErrorCode::kInvalidArgument, "batch_size must be >= 1");
  auto windows = enumerate_windows(view, lookback, horizon, stride);
  if (shuffle_seed) shuffle_windows(windows, *shuffle_seed);
  std::vector<WindowBatch> batches;
  for (std::size_t i = 0; i < windows.size(); i += batch_size) {
    const std::size_t n = std::min(batch_size, windows.size() - i);
    batches.push_back(make_batch(view, std::span(windows).subspan(i, n), lookback, horizon));
  }
  return batches;
}

// ---------------------------------------------------------------------------
// Post-processing

double postprocess_value(double raw, const TransformStats& stats, TransformKind kind,
                         Postprocess post) {
  if (std::isnan(raw)) fail(ErrorCode::kNonFinite, "forecast contains NaN");
  double v = inverse_transform(raw, stats, kind);
  if (post == Postprocess::kClipZeroRound) v = std::round(std::max(0.0, v));
  return v;
}

Matrix postprocess_forecast(const Matrix& raw, const FittedTransform& fitted,
                            const DatasetProfile& profile, const WindowBatch& batch,
                            const TimeSeriesDataset& dataset) {
  require(static_cast<std::size_t>(raw.rows()) == batch.rows(), ErrorCode::kShapeMismatch,
          "forecast rows differ from batch rows");
  Matrix out(raw.rows(), raw.cols());
  for (Eigen::Index r = 0; r < raw.rows(); ++r) {
    const auto& id = dataset.series()[batch.series_index[static_cast<std::size_t>(r)]].id;
    const auto& st = fitted.stats_for(id);
    for (Eigen::Index j = 0; j < raw.cols(); ++j) {
      out(r, j) = postprocess_value(raw(r, j), st, fitted.kind, profile.postprocess);
    }
  }
  return out;
}

}  // namespace tsbench
