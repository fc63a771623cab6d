#include "tsbench/tuner.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>
#include <thread>

namespace tsbench {

std::string_view to_string(DimensionKind kind) {
  switch (kind) {
    case DimensionKind::kCategorical: return "categorical";
    case DimensionKind::kUniform: return "uniform";
    case DimensionKind::kLogUniform: return "log_uniform";
    case DimensionKind::kBool: return "bool";
  }
  return "uniform";
}

std::string_view to_string(DimensionGroup group) {
  return group == DimensionGroup::kModel ? "model" : "pipeline";
}

std::string_view to_string(TrialStatus status) { return status == TrialStatus::kOk ? "OK" : "FAILED"; }

std::string_view to_string(SearchStrategy s) { return s == SearchStrategy::kRandom ? "random" : "tpe"; }

SearchStrategy parse_search_strategy(std::string_view text) {
  if (text == "random") return SearchStrategy::kRandom;
  if (text == "tpe") return SearchStrategy::kTpe;
  fail(ErrorCode::kInvalidArgument, "unknown search strategy '" + std::string(text) + "'");
}

std::size_t Dimension::choices() const {
  if (kind == DimensionKind::kBool) return 2;
  if (kind == DimensionKind::kCategorical) return values.size();
  return 0;
}

nlohmann::json Dimension::choice(std::size_t i) const {
  if (kind == DimensionKind::kBool) return i == 1;
  return values.at(i);
}

// ---------------------------------------------------------------------------
// HyperparameterSpace

HyperparameterSpace& HyperparameterSpace::add(Dimension dim) {
  require(!dim.name.empty(), ErrorCode::kInvalidArgument, "dimension name must not be empty");
  require(find(dim.name) == nullptr, ErrorCode::kInvalidArgument, "duplicate dimension '" + dim.name + "'");
  if (dim.continuous()) {
    require(std::isfinite(dim.low) && std::isfinite(dim.high) && dim.low < dim.high, ErrorCode::kInvalidArgument,
            "dimension '" + dim.name + "' needs low < high");
    if (dim.kind == DimensionKind::kLogUniform) {
      require(dim.low > 0.0, ErrorCode::kInvalidArgument, "log-uniform dimension '" + dim.name + "' needs low > 0");
    }
  }
  if (dim.kind == DimensionKind::kCategorical) {
    require(!dim.values.empty(), ErrorCode::kInvalidArgument, "categorical dimension '" + dim.name + "' has no values");
  }
  dims_.push_back(std::move(dim));
  return *this;
}

HyperparameterSpace& HyperparameterSpace::add_categorical(std::string name, std::vector<nlohmann::json> values,
                                                          DimensionGroup group) {
  return add({std::move(name), DimensionKind::kCategorical, group, std::move(values), 0.0, 1.0});
}

HyperparameterSpace& HyperparameterSpace::add_uniform(std::string name, double low, double high,
                                                      DimensionGroup group) {
  return add({std::move(name), DimensionKind::kUniform, group, {}, low, high});
}

HyperparameterSpace& HyperparameterSpace::add_log_uniform(std::string name, double low, double high,
                                                          DimensionGroup group) {
  return add({std::move(name), DimensionKind::kLogUniform, group, {}, low, high});
}

HyperparameterSpace& HyperparameterSpace::add_bool(std::string name, DimensionGroup group) {
  return add({std::move(name), DimensionKind::kBool, group, {}, 0.0, 1.0});
}

const Dimension* HyperparameterSpace::find(std::string_view name) const {
  for (const auto& d : dims_) {
    if (d.name == name) return &d;
  }
  return nullptr;
}

bool HyperparameterSpace::contains(const Dimension& dim, const nlohmann::json& value) {
  switch (dim.kind) {
    case DimensionKind::kBool: return value.is_boolean();
    case DimensionKind::kCategorical:
      return std::find(dim.values.begin(), dim.values.end(), value) != dim.values.end();
    case DimensionKind::kUniform:
    case DimensionKind::kLogUniform:
      return value.is_number() && value.get<double>() >= dim.low && value.get<double>() <= dim.high;
  }
  return false;
}

Dimension HyperparameterSpace::parse_dimension(const std::string& name, const nlohmann::json& spec,
                                               DimensionGroup group) {
  require(spec.is_object() && spec.contains("type") && spec["type"].is_string(), ErrorCode::kConfig,
          "search entry '" + name + "' needs a string 'type'");
  const auto type = spec["type"].get<std::string>();
  Dimension d;
  d.name = name;
  d.group = group;
  auto number = [&](const char* key) {
    require(spec.contains(key) && spec[key].is_number(), ErrorCode::kConfig,
            "search entry '" + name + "' needs numeric '" + key + "'");
    return spec[key].get<double>();
  };
  if (type == "categorical") {
    d.kind = DimensionKind::kCategorical;
    require(spec.contains("values") && spec["values"].is_array() && !spec["values"].empty(), ErrorCode::kConfig,
            "search entry '" + name + "' needs a non-empty 'values' array");
    for (const auto& v : spec["values"]) d.values.push_back(v);
  } else if (type == "uniform" || type == "log_uniform") {
    d.kind = type == "uniform" ? DimensionKind::kUniform : DimensionKind::kLogUniform;
    d.low = number("low");
    d.high = number("high");
    require(d.low < d.high, ErrorCode::kConfig, "search entry '" + name + "' needs low < high");
    require(d.kind == DimensionKind::kUniform || d.low > 0.0, ErrorCode::kConfig,
            "search entry '" + name + "' is log-uniform and needs low > 0");
  } else if (type == "bool") {
    d.kind = DimensionKind::kBool;
  } else {
    fail(ErrorCode::kConfig, "search entry '" + name + "' has unknown type '" + type + "'");
  }
  return d;
}

nlohmann::json HyperparameterSpace::dimension_json(const Dimension& dim) {
  nlohmann::json j{{"type", to_string(dim.kind)}};
  if (dim.kind == DimensionKind::kCategorical) j["values"] = dim.values;
  if (dim.continuous()) {
    j["low"] = dim.low;
    j["high"] = dim.high;
  }
  return j;
}

// ---------------------------------------------------------------------------
// Trials

nlohmann::json to_json(const Trial& t) {
  nlohmann::json j{{"index", t.index}, {"lambda", t.lambda}, {"status", to_string(t.status)},
                   {"telemetry", t.telemetry}};
  if (t.status == TrialStatus::kOk) {
    j["objective"] = t.objective;
  } else {
    j["objective"] = nullptr;
    j["error"] = t.error;
  }
  return j;
}

Trial trial_from_json(const nlohmann::json& j) {
  try {
    Trial t;
    t.index = j.at("index").get<std::size_t>();
    t.lambda = j.at("lambda");
    const auto status = j.at("status").get<std::string>();
    require(status == "OK" || status == "FAILED", ErrorCode::kConfig, "unknown trial status '" + status + "'");
    t.status = status == "OK" ? TrialStatus::kOk : TrialStatus::kFailed;
    if (t.status == TrialStatus::kOk) t.objective = j.at("objective").get<double>();
    t.telemetry = j.value("telemetry", nlohmann::json::object());
    t.error = j.value("error", std::string{});
    return t;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kConfig, std::string("malformed trial record: ") + e.what());
  }
}

std::optional<std::size_t> argmin_trial(const std::vector<Trial>& trials) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < trials.size(); ++i) {
    const auto& t = trials[i];
    if (t.status != TrialStatus::kOk || !std::isfinite(t.objective)) continue;
    if (!best || t.objective < trials[*best].objective) best = i;
  }
  return best;
}

// ---------------------------------------------------------------------------
// Sampling

namespace {

/// Continuous values are modelled in the sampler's working space: log for
/// log-uniform dimensions.
double to_work(const Dimension& d, double v) { return d.kind == DimensionKind::kLogUniform ? std::log(v) : v; }
double from_work(const Dimension& d, double v) {
  return d.kind == DimensionKind::kLogUniform ? std::exp(v) : v;
}
double work_low(const Dimension& d) { return to_work(d, d.low); }
double work_high(const Dimension& d) { return to_work(d, d.high); }

nlohmann::json draw_random(const Dimension& d, Rng& rng) {
  if (d.continuous()) {
    const double w = rng.uniform(work_low(d), work_high(d));
    return std::clamp(from_work(d, w), d.low, d.high);
  }
  return d.choice(static_cast<std::size_t>(rng.below(d.choices())));
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

/// Parzen mixture of truncated normals plus one uniform prior component.
struct Parzen {
  std::vector<double> centers;
  double bandwidth = 1.0;
  double low = 0.0;
  double high = 1.0;

  static Parzen fit(std::vector<double> points, double low, double high, double floor_fraction) {
    Parzen p;
    p.low = low;
    p.high = high;
    p.centers = std::move(points);
    const double n = static_cast<double>(p.centers.size());
    double mean = 0.0;
    for (double c : p.centers) mean += c;
    mean /= n;
    double var = 0.0;
    for (double c : p.centers) var += (c - mean) * (c - mean);
    var /= n;
    const double scott = std::sqrt(var) * std::pow(n, -0.2);
    // Shrinks with the number of observations but never collapses onto a
    // cluster of near-identical points.
    const double adaptive = (high - low) / std::min(100.0, n + 1.0);
    p.bandwidth = std::max({scott, adaptive, floor_fraction * (high - low)});
    return p;
  }

  double density(double x) const {
    const double range = high - low;
    double total = 1.0 / range;
    for (double c : centers) {
      const double mass = normal_cdf((high - c) / bandwidth) - normal_cdf((low - c) / bandwidth);
      const double z = (x - c) / bandwidth;
      total += std::exp(-0.5 * z * z) / (bandwidth * std::sqrt(2.0 * std::numbers::pi) * std::max(mass, 1e-300));
    }
    return total / static_cast<double>(centers.size() + 1);
  }

  double sample(Rng& rng) const {
    const auto k = static_cast<std::size_t>(rng.below(centers.size() + 1));
    if (k == centers.size()) return rng.uniform(low, high);
    for (int attempt = 0; attempt < 64; ++attempt) {
      const double x = centers[k] + bandwidth * rng.normal();
      if (x >= low && x <= high) return x;
    }
    return std::clamp(centers[k], low, high);
  }
};

struct Categorical {
  std::vector<double> probs;

  static Categorical fit(const std::vector<std::size_t>& picks, std::size_t choices) {
    Categorical c;
    c.probs.assign(choices, 1.0);
    for (auto p : picks) c.probs[p] += 1.0;
    const double total = static_cast<double>(picks.size() + choices);
    for (auto& p : c.probs) p /= total;
    return c;
  }

  std::size_t sample(Rng& rng) const {
    double u = rng.uniform();
    for (std::size_t i = 0; i + 1 < probs.size(); ++i) {
      if (u < probs[i]) return i;
      u -= probs[i];
    }
    return probs.size() - 1;
  }
};

std::optional<std::size_t> choice_index(const Dimension& d, const nlohmann::json& v) {
  for (std::size_t i = 0; i < d.choices(); ++i) {
    if (d.choice(i) == v) return i;
  }
  return std::nullopt;
}

}  // namespace

nlohmann::json sample_random(const HyperparameterSpace& space, std::uint64_t seed, std::size_t trial_index) {
  nlohmann::json out = nlohmann::json::object();
  for (std::size_t k = 0; k < space.size(); ++k) {
    const auto& d = space.dimensions()[k];
    Rng rng(mix_seed(mix_seed(seed, trial_index), k));
    out[d.name] = draw_random(d, rng);
  }
  return out;
}

nlohmann::json sample_tpe(const HyperparameterSpace& space, const std::vector<Trial>& history, std::uint64_t seed,
                          const TpeOptions& options) {
  const std::size_t index = history.size();
  std::vector<const Trial*> ok;
  for (const auto& t : history) {
    if (t.status == TrialStatus::kOk && std::isfinite(t.objective)) ok.push_back(&t);
  }
  if (ok.size() < std::max<std::size_t>(options.n_startup, 2)) return sample_random(space, seed, index);
  std::stable_sort(ok.begin(), ok.end(), [](const Trial* a, const Trial* b) { return a->objective < b->objective; });
  if (ok.front()->objective == ok.back()->objective) return sample_random(space, seed, index);

  const auto n_good = std::min(
      ok.size() - 1, std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(options.gamma * static_cast<double>(ok.size())))));
  Rng rng(mix_seed(mix_seed(seed, index), 0x747065ULL));

  const std::size_t n_cand = std::max<std::size_t>(1, options.n_candidates);
  std::vector<nlohmann::json> candidates(n_cand, nlohmann::json::object());
  std::vector<double> score(n_cand, 0.0);

  for (const auto& d : space.dimensions()) {
    std::vector<double> good_vals, bad_vals;
    std::vector<std::size_t> good_picks, bad_picks;
    bool usable = true;
    for (std::size_t i = 0; i < ok.size() && usable; ++i) {
      const auto it = ok[i]->lambda.find(d.name);
      if (it == ok[i]->lambda.end()) {
        usable = false;
        break;
      }
      if (d.continuous()) {
        if (!it->is_number()) {
          usable = false;
          break;
        }
        const double w = to_work(d, std::clamp(it->get<double>(), d.low, d.high));
        (i < n_good ? good_vals : bad_vals).push_back(w);
      } else {
        const auto c = choice_index(d, *it);
        if (!c) {
          usable = false;
          break;
        }
        (i < n_good ? good_picks : bad_picks).push_back(*c);
      }
    }
    if (!usable) {
      for (auto& cand : candidates) cand[d.name] = draw_random(d, rng);
      continue;
    }
    if (d.continuous()) {
      const auto good = Parzen::fit(good_vals, work_low(d), work_high(d), options.bandwidth_floor);
      const auto bad = Parzen::fit(bad_vals, work_low(d), work_high(d), options.bandwidth_floor);
      for (std::size_t c = 0; c < n_cand; ++c) {
        const double w = good.sample(rng);
        candidates[c][d.name] = std::clamp(from_work(d, w), d.low, d.high);
        score[c] += std::log(good.density(w)) - std::log(bad.density(w));
      }
    } else {
      const auto good = Categorical::fit(good_picks, d.choices());
      const auto bad = Categorical::fit(bad_picks, d.choices());
      for (std::size_t c = 0; c < n_cand; ++c) {
        const auto pick = good.sample(rng);
        candidates[c][d.name] = d.choice(pick);
        score[c] += std::log(good.probs[pick]) - std::log(bad.probs[pick]);
      }
    }
  }
  const auto best = std::max_element(score.begin(), score.end()) - score.begin();
  return candidates[static_cast<std::size_t>(best)];
}

// ---------------------------------------------------------------------------
// Sweep

namespace {

Trial execute(const TrialExecutor& executor, const nlohmann::json& lambda, std::size_t index) {
  Trial t;
  t.index = index;
  t.lambda = lambda;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    TrialResult r = executor(lambda, index);
    if (!std::isfinite(r.objective)) fail(ErrorCode::kTrialFailed, "objective is not finite");
    t.objective = r.objective;
    t.telemetry = std::move(r.telemetry);
    t.status = TrialStatus::kOk;
  } catch (const std::exception& e) {
    t.status = TrialStatus::kFailed;
    t.error = e.what();
  }
  const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
  t.wall_time_seconds = dt.count();
  return t;
}

}  // namespace

SweepResult run_sweep(const HyperparameterSpace& space, const TrialExecutor& executor, const SweepOptions& opt) {
  require(!space.empty(), ErrorCode::kInvalidArgument, "nothing to tune: the search space is empty");
  require(opt.budget.mode == Budget::Mode::kWallClock || opt.budget.trials >= 1, ErrorCode::kInvalidArgument,
          "trial budget must be >= 1");
  SweepResult result;
  result.trials = opt.completed;
  for (std::size_t i = 0; i < result.trials.size(); ++i) {
    require(result.trials[i].index == i, ErrorCode::kConfig, "replayed trials are not contiguous from index 0");
  }
  if (opt.budget.mode == Budget::Mode::kTrials) {
    require(result.trials.size() <= opt.budget.trials, ErrorCode::kConfig,
            "replayed trial table exceeds the trial budget");
  }

  using Clock = std::chrono::steady_clock;
  const auto deadline = Clock::now() + std::chrono::duration_cast<Clock::duration>(
                                           std::chrono::duration<double>(opt.budget.seconds));
  const bool by_count = opt.budget.mode == Budget::Mode::kTrials;
  auto may_start = [&](std::size_t index) {
    return by_count ? index < opt.budget.trials : Clock::now() < deadline;
  };

  const std::size_t jobs = opt.strategy == SearchStrategy::kTpe ? 1 : std::max<std::size_t>(1, opt.jobs);
  if (jobs == 1) {
    for (std::size_t index = result.trials.size(); may_start(index); ++index) {
      const auto lambda = opt.strategy == SearchStrategy::kTpe ? sample_tpe(space, result.trials, opt.seed, opt.tpe)
                                                               : sample_random(space, opt.seed, index);
      result.trials.push_back(execute(executor, lambda, index));
      if (opt.on_trial) opt.on_trial(result.trials.back());
    }
  } else {
    std::mutex mu;
    std::size_t next = result.trials.size();
    std::size_t flushed = result.trials.size();
    std::map<std::size_t, Trial> pending;
    std::exception_ptr callback_error;
    auto worker = [&] {
      for (;;) {
        std::size_t index;
        {
          std::lock_guard lock(mu);
          if (callback_error || !may_start(next)) return;
          index = next++;
        }
        Trial t = execute(executor, sample_random(space, opt.seed, index), index);
        std::lock_guard lock(mu);
        pending.emplace(index, std::move(t));
        while (!pending.empty() && pending.begin()->first == flushed) {
          result.trials.push_back(std::move(pending.begin()->second));
          pending.erase(pending.begin());
          ++flushed;
          if (opt.on_trial && !callback_error) {
            try {
              opt.on_trial(result.trials.back());
            } catch (...) {
              callback_error = std::current_exception();
            }
          }
        }
      }
    };
    std::vector<std::thread> pool;
    for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (callback_error) std::rethrow_exception(callback_error);
  }

  const auto best = argmin_trial(result.trials);
  if (!best) {
    std::string cause = "no trial ran";
    for (auto it = result.trials.rbegin(); it != result.trials.rend(); ++it) {
      if (!it->error.empty()) {
        cause = it->error;
        break;
      }
    }
    fail(ErrorCode::kSweepFailed, "every trial failed; last cause: " + cause);
  }
  result.best_index = *best;
  result.best_objective = result.trials[*best].objective;
  result.lambda_top = result.trials[*best].lambda;
  return result;
}

}  // namespace tsbench
