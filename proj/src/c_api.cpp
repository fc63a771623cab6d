#include "tsbench/tsbench.h"

#include <cstdlib>
#include <cstring>
#include <mutex>
#include <new>
#include <string>

#include "tsbench/pipeline.hpp"
#include "tsbench/version.hpp"

struct tsb_config {
  tsbench::RunConfig config;
};

namespace {

thread_local std::string g_last_error;

std::mutex g_log_mu;
tsb_log_fn g_log_fn = nullptr;
void* g_log_user = nullptr;

tsb_status status_of(tsbench::ErrorCode code) {
  using tsbench::ErrorCode;
  switch (code) {
    case ErrorCode::kInvalidArgument: return TSB_ERR_INVALID_ARGUMENT;
    case ErrorCode::kShapeMismatch: return TSB_ERR_SHAPE_MISMATCH;
    case ErrorCode::kMalformedRow: return TSB_ERR_MALFORMED_ROW;
    case ErrorCode::kDuplicateTimestamp: return TSB_ERR_DUPLICATE_TIMESTAMP;
    case ErrorCode::kIrregularSampling: return TSB_ERR_IRREGULAR_SAMPLING;
    case ErrorCode::kEmptyDataset: return TSB_ERR_EMPTY_DATASET;
    case ErrorCode::kEmptySplit: return TSB_ERR_EMPTY_SPLIT;
    case ErrorCode::kUnknownSeries: return TSB_ERR_UNKNOWN_SERIES;
    case ErrorCode::kNonFinite: return TSB_ERR_NON_FINITE;
    case ErrorCode::kStaleCache: return TSB_ERR_STALE_CACHE;
    case ErrorCode::kTrialFailed: return TSB_ERR_TRIAL_FAILED;
    case ErrorCode::kSweepFailed: return TSB_ERR_SWEEP_FAILED;
    case ErrorCode::kConfig: return TSB_ERR_CONFIG;
    case ErrorCode::kIo: return TSB_ERR_IO;
  }
  return TSB_ERR_INTERNAL;
}

template <typename F>
tsb_status guarded(F&& body) {
  g_last_error.clear();
  try {
    body();
    return TSB_OK;
  } catch (const tsbench::Error& e) {
    g_last_error = e.what();
    return status_of(e.code());
  } catch (const nlohmann::json::exception& e) {
    g_last_error = e.what();
    return TSB_ERR_CONFIG;
  } catch (const std::filesystem::filesystem_error& e) {
    g_last_error = e.what();
    return TSB_ERR_IO;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return TSB_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return TSB_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return TSB_ERR_INTERNAL;
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void put(char** out, const std::string& s) {
  if (out) *out = dup_string(s);
}

void need(const void* p, const char* what) {
  if (!p) tsbench::fail(tsbench::ErrorCode::kInvalidArgument, std::string(what) + " must not be NULL");
}

tsbench::RunOptions run_options(const tsb_run_options* o) {
  tsbench::RunOptions r;
  if (o) {
    if (o->output_dir) r.output_dir = o->output_dir;
    r.jobs = o->jobs == 0 ? 1 : o->jobs;
    r.resume = o->resume != 0;
    r.keep_checkpoints = o->keep_checkpoints != 0;
    if (o->lambda_path) r.lambda_path = std::filesystem::path(o->lambda_path);
  }
  r.log = [](const std::string& line) {
    std::lock_guard lock(g_log_mu);
    if (g_log_fn) g_log_fn(line.c_str(), g_log_user);
  };
  return r;
}

template <typename Cmd>
tsb_status run_command(const tsb_config* config, const tsb_run_options* options, char** out_json, Cmd cmd) {
  return guarded([&] {
    need(config, "config");
    const nlohmann::json result = cmd(config->config, run_options(options));
    put(out_json, result.dump(2));
  });
}

}  // namespace

extern "C" {

const char* tsb_last_error(void) { return g_last_error.c_str(); }

const char* tsb_version(void) { return tsbench::kVersion; }

void tsb_string_free(char* s) { std::free(s); }

void tsb_set_log_callback(tsb_log_fn fn, void* user) {
  std::lock_guard lock(g_log_mu);
  g_log_fn = fn;
  g_log_user = user;
}

tsb_status tsb_config_load(const char* path, tsb_config** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new tsb_config{tsbench::load_config(path)};
  });
}

tsb_status tsb_config_parse(const char* json_text, tsb_config** out) {
  return guarded([&] {
    need(json_text, "json_text");
    need(out, "out");
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::parse_error& e) {
      tsbench::fail(tsbench::ErrorCode::kConfig, e.what());
    }
    *out = new tsb_config{tsbench::RunConfig::parse(j)};
  });
}

void tsb_config_free(tsb_config* config) { delete config; }

tsb_status tsb_config_set_seed(tsb_config* config, uint64_t seed) {
  return guarded([&] {
    need(config, "config");
    config->config.set_seed(seed);
  });
}

tsb_status tsb_config_validate(const tsb_config* config, char** violations) {
  std::string joined;
  const tsb_status st = guarded([&] {
    need(config, "config");
    for (const auto& v : config->config.violations()) joined += v + "\n";
    put(violations, joined);
  });
  if (st != TSB_OK) return st;
  if (!joined.empty()) {
    g_last_error = "invalid configuration";
    return TSB_ERR_CONFIG;
  }
  return TSB_OK;
}

tsb_status tsb_config_to_json(const tsb_config* config, char** out_json) {
  return guarded([&] {
    need(config, "config");
    need(out_json, "out_json");
    put(out_json, config->config.to_json().dump(2));
  });
}

void tsb_run_options_init(tsb_run_options* options) {
  if (!options) return;
  options->output_dir = nullptr;
  options->jobs = 1;
  options->resume = 0;
  options->keep_checkpoints = 0;
  options->lambda_path = nullptr;
}

tsb_status tsb_generate(const tsb_config* config, const tsb_run_options* options, char** out_path) {
  return guarded([&] {
    need(config, "config");
    put(out_path, tsbench::cmd_generate(config->config, run_options(options)).string());
  });
}

tsb_status tsb_tune(const tsb_config* config, const tsb_run_options* options, char** out_json) {
  return run_command(config, options, out_json, tsbench::cmd_tune);
}

tsb_status tsb_train(const tsb_config* config, const tsb_run_options* options, char** out_json) {
  return run_command(config, options, out_json, tsbench::cmd_train);
}

tsb_status tsb_evaluate(const tsb_config* config, const tsb_run_options* options, char** out_json) {
  return run_command(config, options, out_json, tsbench::cmd_evaluate);
}

tsb_status tsb_ensemble(const tsb_config* config, const tsb_run_options* options, char** out_json) {
  return run_command(config, options, out_json, tsbench::cmd_ensemble);
}

tsb_status tsb_compare_reports(const char* report_a, const char* report_b, double alpha, char** out_json,
                               char** out_markdown) {
  return guarded([&] {
    need(report_a, "report_a");
    need(report_b, "report_b");
    const auto c = tsbench::compare_reports(tsbench::read_json_file(report_a), tsbench::read_json_file(report_b), alpha);
    put(out_json, c.dump(2));
    put(out_markdown, tsbench::render_comparison(c));
  });
}

tsb_status tsb_render_report(const char* report_path, char** out_markdown) {
  return guarded([&] {
    need(report_path, "report_path");
    need(out_markdown, "out_markdown");
    put(out_markdown, tsbench::render_markdown(tsbench::read_json_file(report_path)));
  });
}

tsb_status tsb_compute_metrics(const double* truth, const double* pred, const double* weights, size_t n, double* mae,
                               double* rmse, double* smape) {
  return guarded([&] {
    need(truth, "truth");
    need(pred, "pred");
    if (n == 0) tsbench::fail(tsbench::ErrorCode::kInvalidArgument, "n must be positive");
    const auto cols = static_cast<Eigen::Index>(n);
    tsbench::Matrix t = Eigen::Map<const tsbench::Matrix>(truth, 1, cols);
    tsbench::Matrix p = Eigen::Map<const tsbench::Matrix>(pred, 1, cols);
    tsbench::Matrix w = weights ? tsbench::Matrix(Eigen::Map<const tsbench::Matrix>(weights, 1, cols))
                                : tsbench::Matrix::Ones(1, cols);
    const auto m = tsbench::compute_metrics(t, p, w);
    if (mae) *mae = m.mae;
    if (rmse) *rmse = m.rmse;
    if (smape) *smape = m.smape;
  });
}

}  // extern "C"
