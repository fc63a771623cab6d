#include "tsbench/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include <boost/math/distributions/students_t.hpp>

namespace tsbench {

double SampleStats::stddev() const { return std::sqrt(variance); }

SampleStats summarize(std::vector<double> samples, VarianceKind kind) {
  SampleStats s;
  s.samples = std::move(samples);
  const auto n = s.samples.size();
  require(n >= 1, ErrorCode::kInvalidArgument, "cannot summarize an empty sample");
  double sum = 0.0;
  for (double v : s.samples) sum += v;
  s.mean = sum / static_cast<double>(n);
  double ss = 0.0;
  for (double v : s.samples) ss += (v - s.mean) * (v - s.mean);
  if (kind == VarianceKind::kPopulation) {
    s.variance = ss / static_cast<double>(n);
  } else {
    s.variance = n > 1 ? ss / static_cast<double>(n - 1) : 0.0;
  }
  return s;
}

std::size_t ModelStats::k() const {
  return static_cast<std::size_t>(std::count_if(runs.begin(), runs.end(), [](const RunRecord& r) { return r.ok; }));
}

const SampleStats& ModelStats::metric(MetricKind kind) const {
  const auto it = metrics.find(std::string(to_string(kind)));
  require(it != metrics.end(), ErrorCode::kInvalidArgument, "model '" + name + "' has no statistics");
  return it->second;
}

void aggregate(ModelStats& stats) {
  std::vector<double> mae, rmse, smape;
  for (const auto& r : stats.runs) {
    if (!r.ok) continue;
    mae.push_back(r.metrics.mae);
    rmse.push_back(r.metrics.rmse);
    smape.push_back(r.metrics.smape);
  }
  require(mae.size() >= 2, ErrorCode::kTrialFailed,
          "model '" + stats.name + "': fewer than two successful runs (" + std::to_string(mae.size()) + ")");
  stats.metrics.clear();
  stats.metrics["mae"] = summarize(std::move(mae), stats.variance_kind);
  stats.metrics["rmse"] = summarize(std::move(rmse), stats.variance_kind);
  stats.metrics["smape"] = summarize(std::move(smape), stats.variance_kind);
}

ModelStats evaluate_k_runs(const std::string& name, const EvaluationPlan& plan, const RunExecutor& executor,
                           std::vector<std::string>* warnings) {
  require(plan.k >= 2, ErrorCode::kInvalidArgument, "evaluation needs K >= 2");
  ModelStats stats;
  stats.name = name;
  stats.variance_kind = plan.variance_kind;
  stats.runs.resize(plan.k);
  auto run_one = [&](std::size_t i) {
    const std::uint64_t seed = plan.base_seed + i;
    RunRecord rec;
    try {
      rec = executor(i, seed);
      rec.ok = true;
    } catch (const std::exception& e) {
      rec = RunRecord{};
      rec.ok = false;
      rec.error = e.what();
    }
    rec.run = i;
    rec.seed = seed;
    stats.runs[i] = std::move(rec);
  };
  const std::size_t jobs = std::clamp<std::size_t>(plan.jobs, 1, plan.k);
  if (jobs == 1) {
    for (std::size_t i = 0; i < plan.k; ++i) run_one(i);
  } else {
    std::mutex mu;
    std::size_t next = 0;
    std::vector<std::thread> pool;
    for (std::size_t j = 0; j < jobs; ++j) {
      pool.emplace_back([&] {
        for (;;) {
          std::size_t i;
          {
            std::lock_guard lock(mu);
            if (next >= plan.k) return;
            i = next++;
          }
          run_one(i);
        }
      });
    }
    for (auto& t : pool) t.join();
  }
  if (warnings) {
    for (const auto& r : stats.runs) {
      if (!r.ok) warnings->push_back(name + " run " + std::to_string(r.run) + " failed: " + r.error);
    }
  }
  aggregate(stats);
  return stats;
}

// ---------------------------------------------------------------------------
// Comparison

std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::kM1Better: return "M1_BETTER";
    case Verdict::kM2Better: return "M2_BETTER";
    case Verdict::kNoDifference: return "NO_DIFFERENCE";
  }
  return "NO_DIFFERENCE";
}

std::string_view to_string(Denominator d) { return d == Denominator::kPaper ? "PAPER" : "WELCH"; }

Denominator parse_denominator(std::string_view text) {
  if (text == "PAPER" || text == "paper") return Denominator::kPaper;
  if (text == "WELCH" || text == "welch") return Denominator::kWelch;
  fail(ErrorCode::kInvalidArgument, "unknown denominator convention '" + std::string(text) + "'");
}

double t_critical(double alpha, std::size_t df) {
  require(alpha > 0.0 && alpha < 1.0, ErrorCode::kInvalidArgument, "alpha must lie in (0, 1)");
  require(df >= 1, ErrorCode::kInvalidArgument, "degrees of freedom must be >= 1");
  const boost::math::students_t dist(static_cast<double>(df));
  return boost::math::quantile(boost::math::complement(dist, alpha / 2.0));
}

Comparison compare(double mean1, double var1, double mean2, double var2, std::size_t k,
                   const ComparisonConfig& config) {
  require(k >= 2, ErrorCode::kInvalidArgument, "comparison needs K >= 2");
  require(var1 >= 0.0 && var2 >= 0.0, ErrorCode::kInvalidArgument, "variances must be nonnegative");
  Comparison c;
  c.k = k;
  c.df = 2 * k - 2;
  c.alpha = config.alpha;
  c.denominator = config.denominator;
  c.t_crit = t_critical(config.alpha, c.df);
  const double diff = mean1 - mean2;
  const double kd = static_cast<double>(k);
  const double denom = config.denominator == Denominator::kPaper ? std::sqrt(var1 + var2) / kd
                                                                 : std::sqrt((var1 + var2) / kd);
  if (denom == 0.0) {
    if (diff == 0.0) {
      c.t = 0.0;
    } else {
      c.t = std::copysign(std::numeric_limits<double>::infinity(), diff);
    }
  } else {
    c.t = diff / denom;
  }
  if (std::abs(c.t) > c.t_crit) {
    c.verdict = diff < 0.0 ? Verdict::kM1Better : Verdict::kM2Better;
  } else {
    c.verdict = Verdict::kNoDifference;
  }
  return c;
}

Comparison compare(const SampleStats& a, const SampleStats& b, const ComparisonConfig& config) {
  require(a.samples.size() == b.samples.size(), ErrorCode::kInvalidArgument,
          "comparison needs equal K (" + std::to_string(a.samples.size()) + " vs " +
              std::to_string(b.samples.size()) + ")");
  return compare(a.mean, a.variance, b.mean, b.variance, a.samples.size(), config);
}

namespace {

nlohmann::json number_or_inf(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return nullptr;
  return v > 0 ? "+inf" : "-inf";
}

}  // namespace

nlohmann::json to_json(const Comparison& c) {
  return {{"t", number_or_inf(c.t)}, {"t_crit", c.t_crit}, {"k", c.k}, {"df", c.df}, {"alpha", c.alpha},
          {"denominator", to_string(c.denominator)}, {"verdict", to_string(c.verdict)}};
}

// ---------------------------------------------------------------------------
// Ensembles

Matrix ensemble_mean(const std::vector<Matrix>& members) {
  require(!members.empty(), ErrorCode::kInvalidArgument, "ensemble needs at least one member");
  Matrix sum = members.front();
  for (std::size_t i = 1; i < members.size(); ++i) {
    require(members[i].rows() == sum.rows() && members[i].cols() == sum.cols(), ErrorCode::kShapeMismatch,
            "ensemble members disagree on forecast shape");
    sum += members[i];
  }
  return sum / static_cast<double>(members.size());
}

Matrix ensemble_predict(const std::vector<const Forecaster*>& models, const Matrix& encoder) {
  require(!models.empty(), ErrorCode::kInvalidArgument, "ensemble needs at least one member");
  std::vector<Matrix> preds;
  for (const auto* m : models) {
    require(m->lookback() == models.front()->lookback() && m->horizon() == models.front()->horizon(),
            ErrorCode::kShapeMismatch, "ensemble members disagree on lookback or horizon");
    preds.push_back(m->predict(encoder).mean);
  }
  return ensemble_mean(preds);
}

// ---------------------------------------------------------------------------
// Reports

nlohmann::json to_json(const MetricResult& m) {
  return {{"mae", m.mae}, {"rmse", m.rmse}, {"smape", m.smape}, {"count", m.count}};
}

nlohmann::json to_json(const ModelStats& stats) {
  nlohmann::json metrics = nlohmann::json::object();
  for (const auto& [key, s] : stats.metrics) {
    metrics[key] = {{"mean", s.mean}, {"variance", s.variance}, {"std", s.stddev()}, {"samples", s.samples}};
  }
  nlohmann::json runs = nlohmann::json::array();
  double conv = 0.0;
  for (const auto& r : stats.runs) {
    nlohmann::json jr{{"run", r.run}, {"seed", r.seed}, {"ok", r.ok}};
    if (r.ok) {
      jr["metrics"] = to_json(r.metrics);
      jr["convergence_epoch"] = r.convergence_epoch;
      conv += static_cast<double>(r.convergence_epoch);
    } else {
      jr["error"] = r.error;
    }
    runs.push_back(std::move(jr));
  }
  const auto k = stats.k();
  return {{"name", stats.name},
          {"k", k},
          {"variance", stats.variance_kind == VarianceKind::kPopulation ? "population" : "sample"},
          {"metrics", metrics},
          {"runs", runs},
          {"mean_convergence_epoch", k ? conv / static_cast<double>(k) : 0.0}};
}

namespace {

SampleStats stats_from_json(const nlohmann::json& model, const std::string& metric) {
  const auto& m = model.at("metrics").at(metric);
  SampleStats s;
  s.samples = m.at("samples").get<std::vector<double>>();
  s.mean = m.at("mean").get<double>();
  s.variance = m.at("variance").get<double>();
  return s;
}

nlohmann::json pairwise(const std::string& n1, const SampleStats& a, const std::string& n2, const SampleStats& b,
                        const std::string& metric, double alpha) {
  nlohmann::json j{{"model_1", n1}, {"model_2", n2}, {"metric", metric}};
  j["paper"] = to_json(compare(a, b, {alpha, Denominator::kPaper}));
  j["welch"] = to_json(compare(a, b, {alpha, Denominator::kWelch}));
  return j;
}

}  // namespace

nlohmann::json build_report(const ReportInputs& in) {
  nlohmann::json report;
  report["format"] = 1;
  report["dataset_fingerprint"] = in.dataset_fingerprint;
  report["provenance"] = in.provenance.is_null() ? nlohmann::json::object() : in.provenance;
  report["statistics"] = {{"variance", "population"},
                          {"test", "two-sided Student t"},
                          {"df", "2K-2"},
                          {"alpha", in.comparison.alpha},
                          {"default_denominator", to_string(in.comparison.denominator)},
                          {"denominators", {{"PAPER", "sqrt(var1 + var2) / K"}, {"WELCH", "sqrt((var1 + var2) / K)"}}}};
  report["metrics"] = in.metrics;

  nlohmann::json models = nlohmann::json::array();
  for (std::size_t i = 0; i < in.models.size(); ++i) {
    nlohmann::json m = to_json(in.models[i]);
    nlohmann::json cfg = i < in.model_configs.size() ? in.model_configs[i] : nlohmann::json::object();
    if (cfg.is_null()) cfg = nlohmann::json::object();
    m["config"] = cfg;
    m["ema_enabled"] = cfg.value("ema_enabled", false);
    m["cl_enabled"] = cfg.value("cl_enabled", false);
    models.push_back(std::move(m));
  }
  report["models"] = models;

  nlohmann::json ensembles = nlohmann::json::array();
  for (const auto& [name, metrics] : in.ensembles) {
    nlohmann::json e{{"model", name}, {"metrics", to_json(metrics)}};
    const auto it = in.ensemble_members.find(name);
    if (it != in.ensemble_members.end() && !it->second.empty()) {
      MetricResult avg;
      for (const auto& r : it->second) {
        avg.mae += r.mae;
        avg.rmse += r.rmse;
        avg.smape += r.smape;
        avg.count += r.count;
      }
      const double n = static_cast<double>(it->second.size());
      avg.mae /= n;
      avg.rmse /= n;
      avg.smape /= n;
      avg.count /= n;
      e["members"] = it->second.size();
      e["mean_member"] = to_json(avg);
    }
    ensembles.push_back(std::move(e));
  }
  report["ensembles"] = ensembles;

  nlohmann::json comparisons = nlohmann::json::array();
  for (std::size_t i = 0; i < in.models.size(); ++i) {
    for (std::size_t j = i + 1; j < in.models.size(); ++j) {
      for (const auto& metric : in.metrics) {
        const auto& a = in.models[i].metrics.at(metric);
        const auto& b = in.models[j].metrics.at(metric);
        if (a.samples.size() != b.samples.size()) continue;
        comparisons.push_back(pairwise(in.models[i].name, a, in.models[j].name, b, metric, in.comparison.alpha));
      }
    }
  }
  report["comparisons"] = comparisons;
  report["tuning"] = in.trial_summary.is_null() ? nlohmann::json::object() : in.trial_summary;
  return report;
}

namespace {

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string fmt_json_number(const nlohmann::json& v) {
  if (v.is_number()) return fmt(v.get<double>(), 3);
  if (v.is_string()) return v.get<std::string>();
  return "n/a";
}

}  // namespace

std::string render_markdown(const nlohmann::json& report) {
  std::ostringstream md;
  const auto metrics = report.value("metrics", std::vector<std::string>{"mae", "rmse", "smape"});
  md << "# Evaluation report\n\n";
  md << "Dataset fingerprint: `" << report.value("dataset_fingerprint", std::string{}) << "`\n\n";

  md << "## Test error (mean ± std over K runs)\n\n| Model | K |";
  for (const auto& m : metrics) md << ' ' << (m == "smape" ? std::string("SMAPE (%)") : [&] {
    std::string u = m;
    std::transform(u.begin(), u.end(), u.begin(), ::toupper);
    return u;
  }()) << " |";
  md << "\n|---|---|";
  for (std::size_t i = 0; i < metrics.size(); ++i) md << "---|";
  md << '\n';
  for (const auto& model : report.at("models")) {
    md << "| " << model.at("name").get<std::string>() << " | " << model.at("k").get<std::size_t>() << " |";
    for (const auto& m : metrics) {
      const auto& s = model.at("metrics").at(m);
      md << ' ' << fmt(s.at("mean").get<double>()) << " ± " << fmt(s.at("std").get<double>()) << " |";
    }
    md << '\n';
  }

  if (!report.at("ensembles").empty()) {
    md << "\n## Ensembles (prediction averaging)\n\n| Model | Members | Ensemble MAE | Mean member MAE | Ensemble RMSE | "
          "Ensemble SMAPE (%) |\n|---|---|---|---|---|---|\n";
    for (const auto& e : report.at("ensembles")) {
      md << "| " << e.at("model").get<std::string>() << " | " << e.value("members", std::size_t{0}) << " | "
         << fmt(e.at("metrics").at("mae").get<double>()) << " | "
         << (e.contains("mean_member") ? fmt(e.at("mean_member").at("mae").get<double>()) : std::string("n/a"))
         << " | " << fmt(e.at("metrics").at("rmse").get<double>()) << " | "
         << fmt(e.at("metrics").at("smape").get<double>()) << " |\n";
    }
  }

  if (!report.at("comparisons").empty()) {
    md << "\n## Pairwise comparisons (alpha = " << fmt(report.at("statistics").at("alpha").get<double>(), 3)
       << ")\n\n| Model 1 | Model 2 | Metric | t (PAPER) | Verdict (PAPER) | t (WELCH) | Verdict (WELCH) | t_crit "
          "|\n|---|---|---|---|---|---|---|---|\n";
    for (const auto& c : report.at("comparisons")) {
      md << "| " << c.at("model_1").get<std::string>() << " | " << c.at("model_2").get<std::string>() << " | "
         << c.at("metric").get<std::string>() << " | " << fmt_json_number(c.at("paper").at("t")) << " | "
         << c.at("paper").at("verdict").get<std::string>() << " | " << fmt_json_number(c.at("welch").at("t"))
         << " | " << c.at("welch").at("verdict").get<std::string>() << " | "
         << fmt(c.at("paper").at("t_crit").get<double>(), 3) << " |\n";
    }
  }

  md << "\n## Configuration and telemetry\n\n| Model | EMA | CL | Mean convergence epoch |";
  const bool timed = report.contains("timing");
  if (timed) md << " Mean training time [s] |";
  md << "\n|---|---|---|---|" << (timed ? "---|" : "") << '\n';
  for (const auto& model : report.at("models")) {
    const auto name = model.at("name").get<std::string>();
    md << "| " << name << " | " << (model.value("ema_enabled", false) ? "yes" : "no") << " | "
       << (model.value("cl_enabled", false) ? "yes" : "no") << " | "
       << fmt(model.value("mean_convergence_epoch", 0.0), 1) << " |";
    if (timed) {
      const auto& t = report.at("timing");
      md << ' ' << (t.contains(name) ? fmt(t.at(name).get<double>(), 2) : std::string("n/a")) << " |";
    }
    md << '\n';
  }

  const auto& st = report.at("statistics");
  md << "\nStatistics: " << st.value("test", std::string{}) << ", df = " << st.value("df", std::string{})
     << ", " << st.value("variance", std::string{}) << " variance. PAPER denominator "
     << st.at("denominators").at("PAPER").get<std::string>() << "; WELCH denominator "
     << st.at("denominators").at("WELCH").get<std::string>() << ".\n";
  if (report.contains("provenance") && !report.at("provenance").empty()) {
    md << "\n## Provenance\n\n```json\n" << report.at("provenance").dump(2) << "\n```\n";
  }
  return md.str();
}

SampleStats report_samples(const nlohmann::json& report, const std::string& metric, std::size_t model_index) {
  return stats_from_json(report.at("models").at(model_index), metric);
}

nlohmann::json compare_reports(const nlohmann::json& a, const nlohmann::json& b, double alpha) {
  const auto fa = a.value("dataset_fingerprint", std::string{});
  const auto fb = b.value("dataset_fingerprint", std::string{});
  require(fa == fb, ErrorCode::kInvalidArgument,
          "reports were produced on different datasets (fingerprints " + fa + " vs " + fb + ")");
  require(!a.at("models").empty() && !b.at("models").empty(), ErrorCode::kInvalidArgument, "report has no models");
  const auto& ma = a.at("models").at(0);
  const auto& mb = b.at("models").at(0);
  const auto ka = ma.at("k").get<std::size_t>();
  const auto kb = mb.at("k").get<std::size_t>();
  require(ka == kb, ErrorCode::kInvalidArgument,
          "reports use different K (" + std::to_string(ka) + " vs " + std::to_string(kb) + ")");
  nlohmann::json out{{"dataset_fingerprint", fa}, {"alpha", alpha}, {"k", ka}};
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& metric : {"mae", "rmse", "smape"}) {
    rows.push_back(pairwise(ma.at("name").get<std::string>(), stats_from_json(ma, metric),
                            mb.at("name").get<std::string>(), stats_from_json(mb, metric), metric, alpha));
  }
  out["comparisons"] = rows;
  return out;
}

}  // namespace tsbench
