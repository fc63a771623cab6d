#include "tsbench/pipeline.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <numbers>
#include <set>
#include <sstream>

#include "tsbench/version.hpp"

namespace tsbench {

namespace fs = std::filesystem;
using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Synthetic data

std::string_view to_string(Generator g) {
  switch (g) {
    case Generator::kAr1: return "AR1";
    case Generator::kTrendSeasonal: return "TREND_SEASONAL";
    case Generator::kConstant: return "CONSTANT";
  }
  return "CONSTANT";
}

Generator parse_generator(std::string_view text) {
  if (text == "AR1") return Generator::kAr1;
  if (text == "TREND_SEASONAL") return Generator::kTrendSeasonal;
  if (text == "CONSTANT") return Generator::kConstant;
  fail(ErrorCode::kConfig, "dataset.synthetic.generator: unknown generator '" + std::string(text) + "'");
}

namespace {

template <typename T>
T field(const json& j, const char* key, const T& fallback, const std::string& path) {
  const auto it = j.find(key);
  if (it == j.end()) return fallback;
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    fail(ErrorCode::kConfig, path + "." + key + " has the wrong type");
  }
}

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& path) {
  if (!j.is_object()) fail(ErrorCode::kConfig, path + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (it.key().starts_with("_")) continue;
    if (!allowed.count(it.key())) fail(ErrorCode::kConfig, path + "." + it.key() + " is not a recognized key");
  }
}

json strip_comments(const json& j) {
  if (j.is_object()) {
    json out = json::object();
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (!it.key().starts_with("_")) out[it.key()] = strip_comments(*it);
    }
    return out;
  }
  if (j.is_array()) {
    json out = json::array();
    for (const auto& v : j) out.push_back(strip_comments(v));
    return out;
  }
  return j;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

SyntheticSpec SyntheticSpec::from_json(const json& j) {
  const std::string p = "dataset.synthetic";
  check_keys(j, {"generator", "n", "length", "seed", "phi", "noise", "slope", "period", "amplitude", "level",
                 "start", "sample_rate_seconds"},
             p);
  SyntheticSpec s;
  s.generator = parse_generator(field<std::string>(j, "generator", "TREND_SEASONAL", p));
  s.n = field<std::size_t>(j, "n", s.n, p);
  s.length = field<std::size_t>(j, "length", s.length, p);
  s.seed = field<std::uint64_t>(j, "seed", s.seed, p);
  s.phi = field<double>(j, "phi", s.phi, p);
  s.noise = field<double>(j, "noise", s.noise, p);
  s.slope = field<double>(j, "slope", s.slope, p);
  s.period = field<double>(j, "period", s.period, p);
  s.amplitude = field<double>(j, "amplitude", s.amplitude, p);
  s.level = field<double>(j, "level", s.level, p);
  if (j.contains("start") && j["start"].is_string()) {
    const auto t = parse_iso8601(j["start"].get<std::string>());
    if (!t) fail(ErrorCode::kConfig, p + ".start is not an ISO-8601 timestamp");
    s.start = *t;
  } else {
    s.start = field<std::int64_t>(j, "start", s.start, p);
  }
  s.sample_rate_seconds = field<std::int64_t>(j, "sample_rate_seconds", s.sample_rate_seconds, p);
  return s;
}

json SyntheticSpec::to_json() const {
  return {{"generator", tsbench::to_string(generator)},
          {"n", n},
          {"length", length},
          {"seed", seed},
          {"phi", phi},
          {"noise", noise},
          {"slope", slope},
          {"period", period},
          {"amplitude", amplitude},
          {"level", level},
          {"start", start},
          {"sample_rate_seconds", sample_rate_seconds}};
}

std::vector<Series> generate_series(const SyntheticSpec& spec) {
  require(spec.noise >= 0.0, ErrorCode::kInvalidArgument, "synthetic noise must be >= 0");
  require(spec.n >= 1 && spec.length >= 1, ErrorCode::kInvalidArgument, "synthetic n and length must be >= 1");
  require(spec.sample_rate_seconds > 0, ErrorCode::kInvalidArgument, "synthetic sample rate must be > 0");
  std::vector<Series> out;
  out.reserve(spec.n);
  const int width = static_cast<int>(std::to_string(spec.n - 1).size());
  for (std::size_t i = 0; i < spec.n; ++i) {
    Rng rng(mix_seed(spec.seed, i));
    Series s;
    char id[32];
    std::snprintf(id, sizeof id, "s%0*zu", width, i);
    s.id = id;
    s.timestamps.resize(spec.length);
    s.target.resize(spec.length);
    double prev = 0.0;
    for (std::size_t t = 0; t < spec.length; ++t) {
      s.timestamps[t] = spec.start + static_cast<std::int64_t>(t) * spec.sample_rate_seconds;
      const double e = spec.noise * rng.normal();
      double y = 0.0;
      switch (spec.generator) {
        case Generator::kAr1: {
          if (t == 0) {
            const double denom = 1.0 - spec.phi * spec.phi;
            y = denom > 0.0 ? e / std::sqrt(denom) : e;
          } else {
            y = spec.phi * prev + e;
          }
          prev = y;
          break;
        }
        case Generator::kTrendSeasonal: {
          const double td = static_cast<double>(t);
          y = spec.slope * td + spec.amplitude * std::sin(2.0 * std::numbers::pi * td / spec.period) + e;
          break;
        }
        case Generator::kConstant: y = e; break;
      }
      s.target[t] = y + spec.level;
    }
    s.weight_mask.assign(spec.length, 1.0);
    out.push_back(std::move(s));
  }
  return out;
}

std::string synthetic_csv(const SyntheticSpec& spec) {
  std::string out = "series_id,timestamp,value\n";
  for (const auto& s : generate_series(spec)) {
    for (std::size_t t = 0; t < s.length(); ++t) {
      out += s.id;
      out += ',';
      out += std::to_string(s.timestamps[t]);
      out += ',';
      out += format_double(s.target[t]);
      out += '\n';
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Profiles and training settings

namespace {

const std::set<std::string> kProfileKeys{"name", "sample_rate_seconds", "lookback", "horizon", "zero_prefix_trim",
                                         "min_train_length", "transform_kind", "transform_scope", "postprocess",
                                         "test_mask_prefix"};
const std::set<std::string> kDatasetSearchKeys{"lookback", "transform_kind"};
const std::set<std::string> kTrainingKeys{"loss", "learning_rate", "batch_size", "max_epochs", "patience",
                                          "ema_enabled", "ema_decay", "cl_enabled", "cl_step", "stride",
                                          "max_windows_per_epoch", "refit_on_union"};

}  // namespace

DatasetProfile parse_profile(const json& j) {
  const std::string p = "dataset.profile";
  check_keys(j, kProfileKeys, p);
  DatasetProfile d;
  d.name = field<std::string>(j, "name", d.name, p);
  d.sample_rate_seconds = field<std::int64_t>(j, "sample_rate_seconds", d.sample_rate_seconds, p);
  d.lookback = field<std::size_t>(j, "lookback", 0, p);
  d.horizon = field<std::size_t>(j, "horizon", 0, p);
  d.zero_prefix_trim = field<bool>(j, "zero_prefix_trim", d.zero_prefix_trim, p);
  d.min_train_length = field<std::size_t>(j, "min_train_length", d.min_train_length, p);
  d.test_mask_prefix = field<std::size_t>(j, "test_mask_prefix", d.test_mask_prefix, p);
  try {
    d.transform_kind = parse_transform_kind(field<std::string>(j, "transform_kind", "NONE", p));
    d.transform_scope = parse_transform_scope(field<std::string>(j, "transform_scope", "PER_SERIES", p));
    d.postprocess = parse_postprocess(field<std::string>(j, "postprocess", "NONE", p));
  } catch (const Error& e) {
    fail(ErrorCode::kConfig, p + ": " + e.what());
  }
  return d;
}

json profile_to_json(const DatasetProfile& d) {
  return {{"name", d.name},
          {"sample_rate_seconds", d.sample_rate_seconds},
          {"lookback", d.lookback},
          {"horizon", d.horizon},
          {"zero_prefix_trim", d.zero_prefix_trim},
          {"min_train_length", d.min_train_length},
          {"transform_kind", to_string(d.transform_kind)},
          {"transform_scope", to_string(d.transform_scope)},
          {"postprocess", to_string(d.postprocess)},
          {"test_mask_prefix", d.test_mask_prefix}};
}

TrainConfig parse_train_config(const json& j) {
  const std::string p = "training";
  check_keys(j, kTrainingKeys, p);
  TrainConfig c;
  try {
    c.loss = parse_loss_kind(field<std::string>(j, "loss", "MSE", p));
  } catch (const Error& e) {
    fail(ErrorCode::kConfig, p + ".loss: " + e.what());
  }
  c.learning_rate = field<double>(j, "learning_rate", c.learning_rate, p);
  c.batch_size = field<std::size_t>(j, "batch_size", c.batch_size, p);
  c.max_epochs = field<std::size_t>(j, "max_epochs", c.max_epochs, p);
  c.patience = field<std::size_t>(j, "patience", c.patience, p);
  c.ema_enabled = field<bool>(j, "ema_enabled", c.ema_enabled, p);
  c.ema_decay = field<double>(j, "ema_decay", c.ema_decay, p);
  c.cl_enabled = field<bool>(j, "cl_enabled", c.cl_enabled, p);
  c.cl_step = field<std::size_t>(j, "cl_step", c.cl_step, p);
  c.stride = field<std::size_t>(j, "stride", c.stride, p);
  c.max_windows_per_epoch = field<std::size_t>(j, "max_windows_per_epoch", c.max_windows_per_epoch, p);
  c.refit_on_union = field<bool>(j, "refit_on_union", c.refit_on_union, p);
  return c;
}

namespace {

json train_config_json(const TrainConfig& c) {
  return {{"loss", to_string(c.loss)},
          {"learning_rate", c.learning_rate},
          {"batch_size", c.batch_size},
          {"max_epochs", c.max_epochs},
          {"patience", c.patience},
          {"ema_enabled", c.ema_enabled},
          {"ema_decay", c.ema_decay},
          {"cl_enabled", c.cl_enabled},
          {"cl_step", c.cl_step},
          {"stride", c.stride},
          {"max_windows_per_epoch", c.max_windows_per_epoch},
          {"refit_on_union", c.refit_on_union}};
}

json range_json(const TimeRange& r) { return {{"begin", r.begin}, {"end", r.end}}; }

TimeRange parse_range(const json& j, const std::string& path) {
  check_keys(j, {"begin", "end"}, path);
  auto stamp = [&](const char* key) -> std::int64_t {
    const auto it = j.find(key);
    if (it == j.end()) fail(ErrorCode::kConfig, path + "." + key + " is required");
    if (it->is_string()) {
      const auto t = parse_iso8601(it->get<std::string>());
      if (!t) fail(ErrorCode::kConfig, path + "." + key + " is not an ISO-8601 timestamp");
      return *t;
    }
    if (!it->is_number_integer()) fail(ErrorCode::kConfig, path + "." + key + " must be epoch seconds or ISO-8601");
    return it->get<std::int64_t>();
  };
  return {stamp("begin"), stamp("end")};
}

json schema_json(const CsvSchema& s) {
  return {{"id_column", s.id_column},
          {"timestamp_column", s.timestamp_column},
          {"target_column", s.target_column},
          {"timestamp_format", s.timestamp_format == TimestampFormat::kIso8601 ? "iso8601" : "epoch"},
          {"observed_covariates", s.observed_covariates},
          {"known_covariates", s.known_covariates},
          {"statics", s.statics},
          {"weight_column", s.weight_column},
          {"sample_rate_seconds", s.sample_rate_seconds}};
}

CsvSchema parse_schema(const json& j) {
  const std::string p = "dataset.csv.schema";
  check_keys(j, {"id_column", "timestamp_column", "target_column", "timestamp_format", "observed_covariates",
                 "known_covariates", "statics", "weight_column", "sample_rate_seconds"},
             p);
  CsvSchema s;
  s.id_column = field<std::string>(j, "id_column", s.id_column, p);
  s.timestamp_column = field<std::string>(j, "timestamp_column", s.timestamp_column, p);
  s.target_column = field<std::string>(j, "target_column", s.target_column, p);
  const auto fmt = field<std::string>(j, "timestamp_format", "epoch", p);
  if (fmt == "epoch") {
    s.timestamp_format = TimestampFormat::kEpochSeconds;
  } else if (fmt == "iso8601") {
    s.timestamp_format = TimestampFormat::kIso8601;
  } else {
    fail(ErrorCode::kConfig, p + ".timestamp_format must be 'epoch' or 'iso8601'");
  }
  s.observed_covariates = field<std::vector<std::string>>(j, "observed_covariates", {}, p);
  s.known_covariates = field<std::vector<std::string>>(j, "known_covariates", {}, p);
  s.statics = field<std::vector<std::string>>(j, "statics", {}, p);
  s.weight_column = field<std::string>(j, "weight_column", "", p);
  s.sample_rate_seconds = field<std::int64_t>(j, "sample_rate_seconds", 0, p);
  return s;
}

/// Throws kInvalidArgument when lambda_m is outside the kind's declared space.
void check_lambda_m(ModelKind kind, const json& lm) {
  switch (kind) {
    case ModelKind::kNBeatsLite: NBeatsConfig::from_json(lm); break;
    case ModelKind::kSeasonalNaive:
      for (auto it = lm.begin(); it != lm.end(); ++it) {
        if (it.key() != "period") fail(ErrorCode::kInvalidArgument, "unknown seasonal-naive hyperparameter '" + it.key() + "'");
        if (!it->is_number_integer() || it->get<std::int64_t>() < 1) {
          fail(ErrorCode::kInvalidArgument, "hyperparameter 'period' must be an integer >= 1");
        }
      }
      break;
    case ModelKind::kGlobalLinear:
      if (!lm.empty()) fail(ErrorCode::kInvalidArgument, "unknown global-linear hyperparameter '" + lm.begin().key() + "'");
      break;
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// RunConfig

RunConfig RunConfig::parse(const json& raw) {
  const json j = strip_comments(raw);
  check_keys(j, {"dataset", "model", "training", "tuner", "evaluation", "output"}, "config");
  RunConfig c;

  const json ds = j.value("dataset", json::object());
  check_keys(ds, {"synthetic", "csv", "profile", "split", "context_bleed", "search"}, "dataset");
  if (ds.contains("synthetic")) c.synthetic = SyntheticSpec::from_json(ds["synthetic"]);
  if (ds.contains("csv")) {
    const auto& csv = ds["csv"];
    check_keys(csv, {"path", "schema"}, "dataset.csv");
    c.csv_path = field<std::string>(csv, "path", "", "dataset.csv");
    c.schema = parse_schema(csv.value("schema", json::object()));
  }
  c.profile = ds.value("profile", json::object());
  parse_profile(c.profile);
  const json split = ds.value("split", json::object());
  check_keys(split, {"val_steps", "test_steps", "train", "val", "test"}, "dataset.split");
  c.split.val_steps = field<std::size_t>(split, "val_steps", 0, "dataset.split");
  c.split.test_steps = field<std::size_t>(split, "test_steps", 0, "dataset.split");
  if (split.contains("train") || split.contains("val") || split.contains("test")) {
    for (const char* k : {"train", "val", "test"}) {
      if (!split.contains(k)) fail(ErrorCode::kConfig, std::string("dataset.split.") + k + " is required with explicit ranges");
    }
    c.split.explicit_ranges = SplitBoundaries{parse_range(split["train"], "dataset.split.train"),
                                              parse_range(split["val"], "dataset.split.val"),
                                              parse_range(split["test"], "dataset.split.test")};
  }
  c.context_bleed = field<bool>(ds, "context_bleed", true, "dataset");
  c.dataset_search = ds.value("search", json::object());
  check_keys(c.dataset_search, kDatasetSearchKeys, "dataset.search");

  const json model = j.value("model", json::object());
  check_keys(model, {"kind", "fixed", "search"}, "model");
  try {
    c.model_kind = parse_model_kind(field<std::string>(model, "kind", "GLOBAL_LINEAR", "model"));
  } catch (const Error& e) {
    fail(ErrorCode::kConfig, std::string("model.kind: ") + e.what());
  }
  c.model_fixed = model.value("fixed", json::object());
  c.model_search = model.value("search", json::object());
  if (!c.model_fixed.is_object()) fail(ErrorCode::kConfig, "model.fixed must be an object");
  if (!c.model_search.is_object()) fail(ErrorCode::kConfig, "model.search must be an object");

  const json training = j.value("training", json::object());
  check_keys(training, {"fixed", "search"}, "training");
  c.training_fixed = training.value("fixed", json::object());
  parse_train_config(c.training_fixed);
  c.training_search = training.value("search", json::object());
  check_keys(c.training_search, kTrainingKeys, "training.search");

  const json tuner = j.value("tuner", json::object());
  check_keys(tuner, {"strategy", "budget", "seed", "selection_metric", "objective_repeats"}, "tuner");
  try {
    c.strategy = parse_search_strategy(field<std::string>(tuner, "strategy", "random", "tuner"));
    c.selection_metric = parse_metric_kind(field<std::string>(tuner, "selection_metric", "mae", "tuner"));
  } catch (const Error& e) {
    fail(ErrorCode::kConfig, std::string("tuner: ") + e.what());
  }
  const json budget = tuner.value("budget", json{{"trials", 50}});
  check_keys(budget, {"trials", "wall_clock_seconds"}, "tuner.budget");
  if (budget.contains("trials") == budget.contains("wall_clock_seconds")) {
    fail(ErrorCode::kConfig, "tuner.budget needs exactly one of 'trials' or 'wall_clock_seconds'");
  }
  c.budget = budget.contains("trials")
                 ? Budget::trial_count(field<std::size_t>(budget, "trials", 0, "tuner.budget"))
                 : Budget::wall_clock(field<double>(budget, "wall_clock_seconds", 0.0, "tuner.budget"));
  c.tuner_seed = field<std::uint64_t>(tuner, "seed", 0, "tuner");
  c.objective_repeats = field<std::size_t>(tuner, "objective_repeats", 1, "tuner");

  const json ev = j.value("evaluation", json::object());
  check_keys(ev, {"k", "alpha", "base_seed", "ensemble", "denominator", "stride"}, "evaluation");
  c.eval_k = field<std::size_t>(ev, "k", c.eval_k, "evaluation");
  c.alpha = field<double>(ev, "alpha", c.alpha, "evaluation");
  c.eval_base_seed = field<std::uint64_t>(ev, "base_seed", 0, "evaluation");
  c.ensemble = field<bool>(ev, "ensemble", false, "evaluation");
  c.eval_stride = field<std::size_t>(ev, "stride", 1, "evaluation");
  try {
    c.denominator = parse_denominator(field<std::string>(ev, "denominator", "PAPER", "evaluation"));
  } catch (const Error& e) {
    fail(ErrorCode::kConfig, std::string("evaluation.denominator: ") + e.what());
  }
  c.output_dir = field<std::string>(j, "output", c.output_dir, "config");
  return c;
}

json RunConfig::to_json() const {
  json ds = json::object();
  if (synthetic) ds["synthetic"] = synthetic->to_json();
  if (csv_path) ds["csv"] = {{"path", *csv_path}, {"schema", schema_json(schema)}};
  ds["profile"] = profile;
  json split_j = json::object();
  if (split.explicit_ranges) {
    split_j["train"] = range_json(split.explicit_ranges->train);
    split_j["val"] = range_json(split.explicit_ranges->val);
    split_j["test"] = range_json(split.explicit_ranges->test);
  } else {
    split_j["val_steps"] = split.val_steps;
    split_j["test_steps"] = split.test_steps;
  }
  ds["split"] = split_j;
  ds["context_bleed"] = context_bleed;
  ds["search"] = dataset_search;
  json budget_j = budget.mode == Budget::Mode::kTrials ? json{{"trials", budget.trials}}
                                                       : json{{"wall_clock_seconds", budget.seconds}};
  return {{"dataset", ds},
          {"model", {{"kind", tsbench::to_string(model_kind)}, {"fixed", model_fixed}, {"search", model_search}}},
          {"training", {{"fixed", training_fixed}, {"search", training_search}}},
          {"tuner",
           {{"strategy", tsbench::to_string(strategy)},
            {"budget", budget_j},
            {"seed", tuner_seed},
            {"selection_metric", tsbench::to_string(selection_metric)},
            {"objective_repeats", objective_repeats}}},
          {"evaluation",
           {{"k", eval_k},
            {"alpha", alpha},
            {"base_seed", eval_base_seed},
            {"ensemble", ensemble},
            {"denominator", tsbench::to_string(denominator)},
            {"stride", eval_stride}}},
          {"output", output_dir}};
}


bool RunConfig::has_search() const {
  return !dataset_search.empty() || !model_search.empty() || !training_search.empty();
}

void RunConfig::set_seed(std::uint64_t seed) {
  tuner_seed = seed;
  eval_base_seed = seed;
  if (synthetic) synthetic->seed = seed;
}

std::string RunConfig::hash() const {
  Fnv1a h;
  h.update_str(to_json().dump());
  return h.hex();
}

namespace {

/// Every value a searched dimension can take, for categorical and bool
/// dimensions; the two endpoints for ranges.
std::vector<json> probe_values(const Dimension& d) {
  std::vector<json> out;
  if (d.continuous()) {
    out.push_back(d.low);
    out.push_back(d.high);
  } else {
    for (std::size_t i = 0; i < d.choices(); ++i) out.push_back(d.choice(i));
  }
  return out;
}

}  // namespace

HyperparameterSpace RunConfig::search_space() const {
  HyperparameterSpace space;
  auto add_all = [&space](const json& search, const std::string& prefix, DimensionGroup group) {
    for (auto it = search.begin(); it != search.end(); ++it) {
      Dimension d = HyperparameterSpace::parse_dimension(prefix + it.key(), *it, group);
      switch (d.kind) {
        case DimensionKind::kCategorical: space.add_categorical(d.name, d.values, group); break;
        case DimensionKind::kUniform: space.add_uniform(d.name, d.low, d.high, group); break;
        case DimensionKind::kLogUniform: space.add_log_uniform(d.name, d.low, d.high, group); break;
        case DimensionKind::kBool: space.add_bool(d.name, group); break;
      }
    }
  };
  add_all(strip_comments(dataset_search), "dataset.", DimensionGroup::kPipeline);
  add_all(strip_comments(model_search), "model.", DimensionGroup::kModel);
  add_all(strip_comments(training_search), "training.", DimensionGroup::kPipeline);
  return space;
}

std::vector<std::string> RunConfig::violations() const {
  std::vector<std::string> v;
  auto guard = [&v](const std::string& path, const std::function<void()>& check) {
    try {
      check();
    } catch (const std::exception& e) {
      v.push_back(path + ": " + e.what());
    }
  };

  if (synthetic.has_value() == csv_path.has_value()) {
    v.push_back("dataset: exactly one of 'synthetic' or 'csv' is required");
  }
  if (csv_path && csv_path->empty()) v.push_back("dataset.csv.path must not be empty");

  DatasetProfile prof;
  guard("dataset.profile", [&] { prof = parse_profile(profile); });
  for (const auto& key : kDatasetSearchKeys) {
    if (dataset_search.contains(key) && profile.contains(key)) {
      v.push_back("dataset.profile." + key + " is both fixed and searched (dataset.search." + key + ")");
    }
  }
  std::vector<std::size_t> lookbacks;
  if (dataset_search.contains("lookback")) {
    guard("dataset.search.lookback", [&] {
      const auto d = HyperparameterSpace::parse_dimension("lookback", dataset_search["lookback"], DimensionGroup::kPipeline);
      require(d.kind == DimensionKind::kCategorical, ErrorCode::kConfig, "lookback must be searched categorically");
      for (const auto& val : d.values) {
        require(val.is_number_integer() && val.get<std::int64_t>() >= 1, ErrorCode::kConfig,
                "every lookback value must be an integer ≥ 1");
        lookbacks.push_back(val.get<std::size_t>());
      }
    });
  } else {
    if (prof.lookback < 1) v.push_back("dataset.profile.lookback must be ≥ 1");
    lookbacks.push_back(prof.lookback);
  }
  if (dataset_search.contains("transform_kind")) {
    guard("dataset.search.transform_kind", [&] {
      const auto d = HyperparameterSpace::parse_dimension("transform_kind", dataset_search["transform_kind"],
                                                          DimensionGroup::kPipeline);
      require(d.kind == DimensionKind::kCategorical, ErrorCode::kConfig, "transform_kind must be searched categorically");
      for (const auto& val : d.values) {
        require(val.is_string(), ErrorCode::kConfig, "transform kinds are strings");
        parse_transform_kind(val.get<std::string>());
      }
    });
  }
  if (prof.horizon < 1) v.push_back("dataset.profile.horizon must be ≥ 1");
  if (prof.sample_rate_seconds <= 0) v.push_back("dataset.profile.sample_rate_seconds must be > 0");
  const std::size_t max_l = lookbacks.empty() ? 0 : *std::max_element(lookbacks.begin(), lookbacks.end());
  if (prof.min_train_length > 0 && max_l >= 1 && prof.min_train_length < max_l + prof.horizon) {
    v.push_back("dataset.profile.min_train_length must be 0 or ≥ lookback + horizon (" +
                std::to_string(max_l + prof.horizon) + ")");
  }

  if (split.explicit_ranges) {
    guard("dataset.split", [&] { validate_boundaries(*split.explicit_ranges); });
  } else {
    if (split.val_steps < 1) v.push_back("dataset.split.val_steps must be ≥ 1");
    if (split.test_steps < 1) v.push_back("dataset.split.test_steps must be ≥ 1");
  }
  if (synthetic) {
    const auto& s = *synthetic;
    if (s.n < 1) v.push_back("dataset.synthetic.n must be ≥ 1");
    if (s.noise < 0.0) v.push_back("dataset.synthetic.noise must be ≥ 0");
    if (s.generator == Generator::kTrendSeasonal && !(s.period > 0.0)) v.push_back("dataset.synthetic.period must be > 0");
    if (s.sample_rate_seconds != prof.sample_rate_seconds) {
      v.push_back("dataset.synthetic.sample_rate_seconds differs from dataset.profile.sample_rate_seconds");
    }
    if (max_l >= 1 && prof.horizon >= 1 && s.length < max_l + prof.horizon) {
      v.push_back("dataset.synthetic.length must be ≥ lookback + horizon (" + std::to_string(max_l + prof.horizon) + ")");
    }
    if (!split.explicit_ranges && s.length <= split.val_steps + split.test_steps) {
      v.push_back("dataset.split: val_steps + test_steps leave no training data");
    }
  }

  for (auto it = model_search.begin(); it != model_search.end(); ++it) {
    if (model_fixed.contains(it.key())) v.push_back("model." + it.key() + " is both fixed and searched");
  }
  guard("model.fixed", [&] { check_lambda_m(model_kind, strip_comments(model_fixed)); });
  for (auto it = model_search.begin(); it != model_search.end(); ++it) {
    if (it.key().starts_with("_")) continue;
    guard("model.search." + it.key(), [&] {
      const auto d = HyperparameterSpace::parse_dimension(it.key(), *it, DimensionGroup::kModel);
      for (const auto& val : probe_values(d)) {
        json lm = strip_comments(model_fixed);
        lm[it.key()] = val;
        check_lambda_m(model_kind, lm);
      }
    });
  }

  for (auto it = training_search.begin(); it != training_search.end(); ++it) {
    if (training_fixed.contains(it.key())) v.push_back("training." + it.key() + " is both fixed and searched");
  }
  guard("training.fixed", [&] {
    const auto tc = parse_train_config(training_fixed);
    tc.validate();
    if (!training_search.contains("learning_rate") && (tc.learning_rate < 1e-5 || tc.learning_rate > 1e-2)) {
      fail(ErrorCode::kConfig, "learning_rate must lie in [1e-5, 1e-2]");
    }
    if (tc.ema_enabled && !training_search.contains("ema_decay") && (tc.ema_decay < 0.9 || tc.ema_decay > 0.9999)) {
      fail(ErrorCode::kConfig, "ema_decay must lie in [0.9, 0.9999]");
    }
  });
  for (auto it = training_search.begin(); it != training_search.end(); ++it) {
    if (it.key().starts_with("_")) continue;
    guard("training.search." + it.key(), [&] {
      const auto d = HyperparameterSpace::parse_dimension(it.key(), *it, DimensionGroup::kPipeline);
      for (const auto& val : probe_values(d)) {
        json tf = training_fixed;
        tf[it.key()] = val;
        parse_train_config(tf).validate();
      }
    });
  }
  guard("search", [&] { search_space(); });

  if (budget.mode == Budget::Mode::kTrials && budget.trials < 1) v.push_back("tuner.budget.trials must be ≥ 1");
  if (budget.mode == Budget::Mode::kWallClock && !(budget.seconds > 0.0)) {
    v.push_back("tuner.budget.wall_clock_seconds must be > 0");
  }
  if (objective_repeats < 1) v.push_back("tuner.objective_repeats must be ≥ 1");
  if (eval_k < 2) v.push_back("evaluation.k must be ≥ 2");
  if (!(alpha > 0.0 && alpha < 1.0)) v.push_back("evaluation.alpha must lie in (0, 1)");
  if (eval_stride < 1) v.push_back("evaluation.stride must be ≥ 1");
  if (output_dir.empty()) v.push_back("output must not be empty");
  return v;
}

void RunConfig::validate() const {
  const auto v = violations();
  if (v.empty()) return;
  std::string msg = "invalid configuration:";
  for (const auto& s : v) msg += "\n  " + s;
  fail(ErrorCode::kConfig, msg);
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::kConfig, path.string() + ": " + e.what());
  }
}

void write_text_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIo, "cannot write " + path.string());
  out << text;
  if (!out) fail(ErrorCode::kIo, "write failed for " + path.string());
}

RunConfig load_config(const fs::path& path) {
  RunConfig c = RunConfig::parse(read_json_file(path));
  c.base_dir = fs::absolute(path).parent_path();
  return c;
}

// ---------------------------------------------------------------------------
// Resolution

json ResolvedRun::describe() const {
  return {{"model", to_string(kind)},
          {"lambda_m", lambda_m},
          {"profile", profile_to_json(profile)},
          {"training", train_config_json(train)}};
}

ResolvedRun resolve_run(const RunConfig& config, const json& lambda) {
  ResolvedRun r;
  json prof = config.profile;
  json lm = strip_comments(config.model_fixed);
  json tr = config.training_fixed;
  for (auto it = lambda.begin(); it != lambda.end(); ++it) {
    const std::string& key = it.key();
    if (key.starts_with("dataset.")) {
      prof[key.substr(8)] = *it;
    } else if (key.starts_with("model.")) {
      lm[key.substr(6)] = *it;
    } else if (key.starts_with("training.")) {
      tr[key.substr(9)] = *it;
    } else {
      fail(ErrorCode::kConfig, "assignment key '" + key + "' names no config section");
    }
  }
  r.profile = parse_profile(prof);
  validate_profile(r.profile);
  r.kind = config.model_kind;
  r.lambda_m = lm;
  r.train = parse_train_config(tr);
  return r;
}

// ---------------------------------------------------------------------------
// Data

TimeSeriesDataset load_raw_dataset(const RunConfig& config) {
  const DatasetProfile prof = parse_profile(config.profile);
  if (config.synthetic) {
    CsvSchema schema;
    schema.sample_rate_seconds = config.synthetic->sample_rate_seconds;
    return ingest_csv_text(synthetic_csv(*config.synthetic), schema, prof);
  }
  require(config.csv_path.has_value(), ErrorCode::kConfig, "dataset has no source");
  fs::path p = *config.csv_path;
  if (p.is_relative() && !config.base_dir.empty()) p = config.base_dir / p;
  CsvSchema schema = config.schema;
  if (schema.sample_rate_seconds == 0) schema.sample_rate_seconds = prof.sample_rate_seconds;
  return ingest_csv(p, schema, prof);
}

PreparedData prepare_data(const TimeSeriesDataset& raw, const DatasetProfile& profile, const SplitSpec& split,
                          bool context_bleed) {
  validate_profile(profile);
  TimeSeriesDataset ds = raw.with_profile(profile);
  const SplitBoundaries b =
      split.explicit_ranges ? *split.explicit_ranges : boundaries_from_counts(ds, split.val_steps, split.test_steps);
  validate_boundaries(b);
  PreparedData out{nullptr, DatasetSplits{SplitView(nullptr, SplitKind::kTrain, {}), SplitView(nullptr, SplitKind::kVal, {}),
                                          SplitView(nullptr, SplitKind::kTest, {})},
                   {}};
  ds = apply_profile_filters(ds.with_splits(b), &out.filter);
  auto unfitted = std::make_shared<const TimeSeriesDataset>(ds);
  const auto pre = split_by_time(unfitted, context_bleed);
  const FittedTransform fitted = fit_transform(pre.train, profile);
  out.dataset = std::make_shared<const TimeSeriesDataset>(ds.with_transform(fitted));
  out.splits = split_by_time(out.dataset, context_bleed);
  return out;
}

ViewForecast forecast_view(const Forecaster& model, const SplitView& view, std::size_t stride) {
  const auto windows = enumerate_windows(view, model.lookback(), model.horizon(), stride);
  if (windows.empty()) {
    fail(ErrorCode::kEmptySplit, std::string(to_string(view.kind())) + " split has no complete window");
  }
  ViewForecast f;
  f.batch = make_batch(view, windows, model.lookback(), model.horizon());
  f.mean = model.predict(f.batch).mean;
  return f;
}

MetricResult score_forecast(const ViewForecast& f, const SplitView& view, const Matrix& mean) {
  const auto& ds = view.dataset();
  require(ds.transform().has_value(), ErrorCode::kInvalidArgument, "dataset has no fitted transform");
  const Matrix pred = postprocess_forecast(mean, *ds.transform(), ds.profile(), f.batch, ds);
  return compute_metrics(f.batch.decoder_raw, pred, f.batch.decoder_weight);
}

MetricResult score_view(const Forecaster& model, const SplitView& view, std::size_t stride) {
  const auto f = forecast_view(model, view, stride);
  return score_forecast(f, view, f.mean);
}

std::size_t default_seasonal_period(std::int64_t sample_rate_seconds) {
  if (sample_rate_seconds == 3600) return 24;
  if (sample_rate_seconds == 86400) return 7;
  return 1;
}

// ---------------------------------------------------------------------------
// Orchestration helpers

namespace {

void log_line(const RunOptions& o, const std::string& line) {
  if (o.log) o.log(line);
}

fs::path output_dir(const RunConfig& config, const RunOptions& o) {
  fs::path p = o.output_dir.empty() ? fs::path(config.output_dir) : o.output_dir;
  fs::create_directories(p);
  return p;
}

void write_json(const fs::path& path, const json& j) { write_text_file(path, j.dump(2) + "\n"); }

struct TrainedRun {
  std::unique_ptr<Forecaster> model;
  TrainOutcome outcome;
};

TrainedRun train_one(const ResolvedRun& run, const PreparedData& data, std::uint64_t seed,
                     const EpochCallback& on_epoch = {}) {
  TrainedRun t;
  t.model = build_model(run.kind, run.lambda_m, run.profile.lookback, run.profile.horizon, run.train.loss, seed,
                        default_seasonal_period(run.profile.sample_rate_seconds));
  TrainConfig tc = run.train;
  tc.seed = seed;
  t.outcome = train(*t.model, data.splits.train, data.splits.val, tc, on_epoch);
  return t;
}

json checkpoint_meta(const ResolvedRun& run, std::uint64_t seed) {
  json meta = run.describe();
  meta["seed"] = seed;
  return meta;
}

std::string format_g(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

json load_lambda_top(const RunConfig& config, const RunOptions& o, const fs::path& out) {
  if (!config.has_search()) return json::object();
  const fs::path p = o.lambda_path ? *o.lambda_path : out / "lambda_top.json";
  if (!fs::exists(p)) fail(ErrorCode::kIo, "missing lambda_top file " + p.string() + " (run 'tune' first)");
  const json doc = read_json_file(p);
  require(doc.contains("lambda") && doc["lambda"].is_object(), ErrorCode::kConfig, p.string() + " has no 'lambda' object");
  const auto space = config.search_space();
  for (const auto& d : space.dimensions()) {
    require(doc["lambda"].contains(d.name), ErrorCode::kConfig, p.string() + " does not assign '" + d.name + "'");
  }
  return doc["lambda"];
}

std::vector<Trial> read_trials(const fs::path& path) {
  std::vector<Trial> out;
  std::ifstream in(path);
  if (!in) return out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error&) {
      break;  // a torn final line from an interrupted run
    }
    out.push_back(trial_from_json(j));
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Subcommands

fs::path cmd_generate(const RunConfig& config, const RunOptions& o) {
  require(config.synthetic.has_value(), ErrorCode::kConfig, "dataset.synthetic is required for 'generate'");
  const fs::path out = output_dir(config, o);
  const fs::path path = out / "data.csv";
  write_text_file(path, synthetic_csv(*config.synthetic));
  log_line(o, "wrote " + path.string());
  return path;
}

json cmd_tune(const RunConfig& config, const RunOptions& o) {
  config.validate();
  if (!config.has_search()) fail(ErrorCode::kConfig, "nothing to tune: the config has no searched dimensions");
  const fs::path out = output_dir(config, o);
  const auto space = config.search_space();
  const TimeSeriesDataset raw = load_raw_dataset(config);

  const json config_doc = config.to_json();
  const fs::path trials_path = out / "trials.jsonl";
  const fs::path timing_path = out / "tune_timing.jsonl";
  std::vector<Trial> completed;
  if (o.resume && fs::exists(trials_path)) {
    if (fs::exists(out / "config.json")) {
      require(read_json_file(out / "config.json") == config_doc, ErrorCode::kConfig,
              "cannot resume: " + (out / "config.json").string() + " differs from the current config");
    }
    completed = read_trials(trials_path);
    std::string kept;
    for (const auto& t : completed) kept += to_json(t).dump() + "\n";
    write_text_file(trials_path, kept);
    log_line(o, "resuming after " + std::to_string(completed.size()) + " recorded trials");
  } else {
    write_text_file(trials_path, "");
    write_text_file(timing_path, "");
  }
  write_json(out / "config.json", config_doc);

  std::mutex data_mu;
  std::map<std::string, std::shared_ptr<PreparedData>> cache;
  auto data_for = [&](const DatasetProfile& p) {
    const std::string key = profile_to_json(p).dump();
    std::lock_guard lock(data_mu);
    auto& slot = cache[key];
    if (!slot) slot = std::make_shared<PreparedData>(prepare_data(raw, p, config.split, config.context_bleed));
    return slot;
  };

  const TrialExecutor executor = [&](const json& lambda, std::size_t index) {
    const ResolvedRun run = resolve_run(config, lambda);
    const auto data = data_for(run.profile);
    double v = 0.0;
    json telemetry = json::array();
    for (std::size_t r = 0; r < config.objective_repeats; ++r) {
      const std::uint64_t seed = mix_seed(mix_seed(config.tuner_seed, index), r);
      auto trained = train_one(run, *data, seed);
      const auto m = score_view(*trained.model, data->splits.val, 1);
      v += metric_value(m, config.selection_metric);
      telemetry.push_back({{"convergence_epoch", trained.outcome.convergence_epoch},
                           {"epochs_run", trained.outcome.epochs_run},
                           {"best_val_loss", trained.outcome.best_val_loss},
                           {"val_mae", m.mae},
                           {"val_rmse", m.rmse},
                           {"val_smape", m.smape}});
    }
    TrialResult res;
    res.objective = v / static_cast<double>(config.objective_repeats);
    res.telemetry = {{"runs", telemetry},
                     {"ema_enabled", run.train.ema_enabled},
                     {"cl_enabled", run.train.cl_enabled}};
    return res;
  };

  SweepOptions so;
  so.strategy = config.strategy;
  so.budget = config.budget;
  so.seed = config.tuner_seed;
  so.jobs = o.jobs;
  so.completed = completed;
  so.on_trial = [&](const Trial& t) {
    std::ofstream f(trials_path, std::ios::app | std::ios::binary);
    f << to_json(t).dump() << "\n";
    f.flush();
    std::ofstream tf(timing_path, std::ios::app | std::ios::binary);
    tf << json{{"index", t.index}, {"wall_time_seconds", t.wall_time_seconds}}.dump() << "\n";
    log_line(o, "trial " + std::to_string(t.index) + " " + std::string(to_string(t.status)) +
                    (t.status == TrialStatus::kOk ? " V=" + format_g(t.objective) : " (" + t.error + ")"));
  };
  const SweepResult sweep = run_sweep(space, executor, so);

  const ResolvedRun best = resolve_run(config, sweep.lambda_top);
  json doc{{"lambda", sweep.lambda_top},
           {"objective", sweep.best_objective},
           {"trial_index", sweep.best_index},
           {"selection_metric", to_string(config.selection_metric)},
           {"trials", sweep.trials.size()},
           {"resolved", best.describe()}};
  write_json(out / "lambda_top.json", doc);
  log_line(o, "lambda_top from trial " + std::to_string(sweep.best_index) + " with V=" + format_g(sweep.best_objective));
  return doc;
}

json cmd_train(const RunConfig& config, const RunOptions& o) {
  config.validate();
  const fs::path out = output_dir(config, o);
  const json lambda = load_lambda_top(config, o, out);
  const ResolvedRun run = resolve_run(config, lambda);
  const PreparedData data = prepare_data(load_raw_dataset(config), run.profile, config.split, config.context_bleed);
  std::string log_text;
  const std::uint64_t seed = config.eval_base_seed;
  auto trained = train_one(run, data, seed, [&](const EpochRecord& r) {
    log_text += to_json(r).dump() + "\n";
    log_line(o, "epoch " + std::to_string(r.epoch) + " train=" + format_g(r.train_loss) + " val=" + format_g(r.val_loss));
  });
  write_text_file(out / "train_log.jsonl", log_text);
  fs::create_directories(out / "checkpoints");
  save_params(out / "checkpoints" / "model.bin", trained.model->params(), checkpoint_meta(run, seed));
  const auto val = score_view(*trained.model, data.splits.val, 1);
  const auto test = score_view(*trained.model, data.splits.test, config.eval_stride);
  json result{{"model", to_string(run.kind)},
              {"seed", seed},
              {"resolved", run.describe()},
              {"best_val_loss", trained.outcome.best_val_loss},
              {"convergence_epoch", trained.outcome.convergence_epoch},
              {"epochs_run", trained.outcome.epochs_run},
              {"val_metrics", to_json(val)},
              {"test_metrics", to_json(test)},
              {"dataset_fingerprint", data.dataset->fingerprint()}};
  write_json(out / "train_result.json", result);
  write_json(out / "train_timing.json", {{"wall_time_seconds", trained.outcome.wall_time_seconds}});
  return result;
}

json cmd_evaluate(const RunConfig& config, const RunOptions& o) {
  config.validate();
  const fs::path out = output_dir(config, o);
  const json lambda = load_lambda_top(config, o, out);
  const ResolvedRun run = resolve_run(config, lambda);
  const PreparedData data = prepare_data(load_raw_dataset(config), run.profile, config.split, config.context_bleed);
  const std::string name(to_string(run.kind));
  if (o.keep_checkpoints) fs::create_directories(out / "checkpoints");

  std::vector<Matrix> member_means(config.eval_k);
  std::vector<double> wall(config.eval_k, 0.0);
  std::optional<ViewForecast> reference;
  std::mutex mu;
  EvaluationPlan plan;
  plan.k = config.eval_k;
  plan.base_seed = config.eval_base_seed;
  plan.jobs = o.jobs;
  const RunExecutor executor = [&](std::size_t i, std::uint64_t seed) {
    auto trained = train_one(run, data, seed);
    ViewForecast f = forecast_view(*trained.model, data.splits.test, config.eval_stride);
    RunRecord rec;
    rec.metrics = score_forecast(f, data.splits.test, f.mean);
    rec.convergence_epoch = trained.outcome.convergence_epoch;
    rec.wall_time_seconds = trained.outcome.wall_time_seconds;
    if (o.keep_checkpoints) {
      char file[64];
      std::snprintf(file, sizeof file, "run%03zu.bin", i);
      save_params(out / "checkpoints" / file, trained.model->params(), checkpoint_meta(run, seed));
    }
    std::lock_guard lock(mu);
    member_means[i] = f.mean;
    wall[i] = trained.outcome.wall_time_seconds;
    if (!reference) reference = std::move(f);
    log_line(o, name + " run " + std::to_string(i) + " test MAE=" + format_g(rec.metrics.mae) +
                    " SMAPE=" + format_g(rec.metrics.smape));
    return rec;
  };
  std::vector<std::string> warnings;
  ModelStats stats = evaluate_k_runs(name, plan, executor, &warnings);
  for (const auto& w : warnings) log_line(o, "warning: " + w);

  ReportInputs in;
  in.models.push_back(stats);
  json cfg = run.describe();
  cfg["lambda_top"] = lambda;
  cfg["ema_enabled"] = run.train.ema_enabled;
  cfg["cl_enabled"] = run.train.cl_enabled;
  in.model_configs.push_back(cfg);
  in.comparison = {config.alpha, config.denominator};
  in.dataset_fingerprint = data.dataset->fingerprint();
  if (config.ensemble) {
    std::vector<Matrix> ok_means;
    std::vector<MetricResult> members;
    for (const auto& r : stats.runs) {
      if (!r.ok) continue;
      ok_means.push_back(member_means[r.run]);
      members.push_back(r.metrics);
    }
    in.ensembles[name] = score_forecast(*reference, data.splits.test, ensemble_mean(ok_means));
    in.ensemble_members[name] = members;
  }
  const fs::path trials_path = out / "trials.jsonl";
  if (config.has_search() && fs::exists(trials_path)) {
    const auto trials = read_trials(trials_path);
    const auto best = argmin_trial(trials);
    std::size_t ok = 0;
    for (const auto& t : trials) ok += t.status == TrialStatus::kOk;
    in.trial_summary = {{"trials", trials.size()}, {"ok", ok}, {"failed", trials.size() - ok},
                        {"strategy", to_string(config.strategy)},
                        {"selection_metric", to_string(config.selection_metric)}};
    if (best) {
      in.trial_summary["best_index"] = *best;
      in.trial_summary["best_objective"] = trials[*best].objective;
    }
  }
  in.provenance = {{"framework_version", kVersion},
                   {"config_hash", config.hash()},
                   {"tuner_seed", config.tuner_seed},
                   {"eval_base_seed", config.eval_base_seed},
                   {"k", config.eval_k},
                   {"series", data.dataset->size()},
                   {"filtered_out", data.filter.dropped}};
  if (config.synthetic) in.provenance["synthetic_seed"] = config.synthetic->seed;
  const json report = build_report(in);
  write_json(out / "report.json", report);

  double mean_wall = 0.0;
  for (const auto& r : stats.runs) {
    if (r.ok) mean_wall += wall[r.run];
  }
  mean_wall /= static_cast<double>(std::max<std::size_t>(1, stats.k()));
  const json timing{{name, mean_wall}};
  write_json(out / "eval_timing.json", {{"mean_wall_time_seconds", timing}, {"runs", wall}});
  json with_timing = report;
  with_timing["timing"] = timing;
  write_text_file(out / "report.md", render_markdown(with_timing));
  return report;
}

json cmd_ensemble(const RunConfig& config, const RunOptions& o) {
  config.validate();
  const fs::path out = output_dir(config, o);
  const fs::path dir = out / "checkpoints";
  std::vector<fs::path> files;
  if (fs::exists(dir)) {
    for (const auto& e : fs::directory_iterator(dir)) {
      if (e.path().extension() == ".bin" && e.path().filename().string().starts_with("run")) files.push_back(e.path());
    }
  }
  std::sort(files.begin(), files.end());
  require(!files.empty(), ErrorCode::kIo, "no run checkpoints in " + dir.string() + " (run 'evaluate --keep-checkpoints')");

  std::vector<std::unique_ptr<Forecaster>> models;
  std::optional<ResolvedRun> run;
  for (const auto& f : files) {
    json meta;
    ParamVector p = load_params(f, &meta);
    ResolvedRun r;
    r.kind = parse_model_kind(meta.at("model").get<std::string>());
    r.lambda_m = meta.at("lambda_m");
    r.profile = parse_profile(meta.at("profile"));
    r.train = parse_train_config(meta.at("training"));
    if (!run) run = r;
    require(r.profile.lookback == run->profile.lookback && r.profile.horizon == run->profile.horizon,
            ErrorCode::kShapeMismatch, "checkpoints disagree on lookback or horizon");
    auto m = build_model(r.kind, r.lambda_m, r.profile.lookback, r.profile.horizon, r.train.loss, 0,
                         default_seasonal_period(r.profile.sample_rate_seconds));
    m->set_params(p);
    models.push_back(std::move(m));
  }
  const PreparedData data = prepare_data(load_raw_dataset(config), run->profile, config.split, config.context_bleed);
  std::vector<Matrix> means;
  std::optional<ViewForecast> reference;
  json members = json::array();
  double mean_mae = 0.0;
  for (const auto& m : models) {
    ViewForecast f = forecast_view(*m, data.splits.test, config.eval_stride);
    const auto metrics = score_forecast(f, data.splits.test, f.mean);
    members.push_back(to_json(metrics));
    mean_mae += metrics.mae;
    means.push_back(f.mean);
    if (!reference) reference = std::move(f);
  }
  mean_mae /= static_cast<double>(models.size());
  const auto ens = score_forecast(*reference, data.splits.test, ensemble_mean(means));
  json result{{"model", to_string(run->kind)},
              {"members", models.size()},
              {"ensemble", to_json(ens)},
              {"member_metrics", members},
              {"mean_member_mae", mean_mae},
              {"dataset_fingerprint", data.dataset->fingerprint()}};
  write_json(out / "ensemble.json", result);
  log_line(o, "ensemble of " + std::to_string(models.size()) + " members: MAE=" + format_g(ens.mae) +
                  " (mean member MAE=" + format_g(mean_mae) + ")");
  return result;
}

std::string render_comparison(const json& c) {
  std::ostringstream md;
  md << "| Model 1 | Model 2 | Metric | t (PAPER) | Verdict (PAPER) | t (WELCH) | Verdict (WELCH) |\n"
        "|---|---|---|---|---|---|---|\n";
  auto t_text = [](const json& t) {
    if (t.is_number()) return format_g(t.get<double>());
    return t.is_string() ? t.get<std::string>() : std::string("n/a");
  };
  for (const auto& row : c.at("comparisons")) {
    md << "| " << row.at("model_1").get<std::string>() << " | " << row.at("model_2").get<std::string>() << " | "
       << row.at("metric").get<std::string>() << " | " << t_text(row.at("paper").at("t")) << " | "
       << row.at("paper").at("verdict").get<std::string>() << " | " << t_text(row.at("welch").at("t")) << " | "
       << row.at("welch").at("verdict").get<std::string>() << " |\n";
  }
  return md.str();
}

}  // namespace tsbench
