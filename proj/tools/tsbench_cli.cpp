// tsbench command line: thin driver over the C API.
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "tsbench/tsbench.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

int exit_code(tsb_status st) {
  switch (st) {
    case TSB_OK: return kExitOk;
    case TSB_ERR_CONFIG:
    case TSB_ERR_INVALID_ARGUMENT: return kExitUsage;
    default: return kExitRuntime;
  }
}

int report_failure(tsb_status st) {
  std::cerr << "error: " << tsb_last_error() << "\n";
  return exit_code(st);
}

void print_log(const char* line, void*) { std::cerr << line << "\n"; }

// Owns a string handed out by the library.
struct Owned {
  char* p = nullptr;
  ~Owned() { tsb_string_free(p); }
  std::string str() const { return p ? p : ""; }
};

struct Common {
  std::string config;
  std::string output;
  long long seed = -1;
  std::size_t jobs = 0;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("-c,--config", c.config, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
  sub->add_option("-o,--output", c.output, "Output directory (overrides the config)");
  sub->add_option("--seed", c.seed, "Override tuner, evaluation and generator seeds")->check(CLI::NonNegativeNumber);
  sub->add_option("-j,--jobs", c.jobs, "Concurrent trials or runs (default: hardware threads)");
}

class Session {
 public:
  ~Session() { tsb_config_free(cfg_); }

  tsb_status open(const Common& c) {
    tsb_status st = tsb_config_load(c.config.c_str(), &cfg_);
    if (st != TSB_OK) return st;
    if (c.seed >= 0) st = tsb_config_set_seed(cfg_, static_cast<uint64_t>(c.seed));
    if (st != TSB_OK) return st;
    Owned violations;
    st = tsb_config_validate(cfg_, &violations.p);
    if (st == TSB_ERR_CONFIG) std::cerr << violations.str();
    return st;
  }

  tsb_config* get() const { return cfg_; }

 private:
  tsb_config* cfg_ = nullptr;
};

std::size_t default_jobs() {
  const unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : n;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reproducible benchmarking of global time-series forecasters"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(tsb_version()));

  Common common;
  bool resume = false;
  bool keep_checkpoints = false;
  std::string lambda_path;

  auto* validate = app.add_subcommand("validate", "Check a configuration and list every violation");
  validate->add_option("-c,--config", common.config, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
  validate->add_option("--seed", common.seed, "Seed override");

  auto* generate = app.add_subcommand("generate", "Write the synthetic dataset to <output>/data.csv");
  add_common(generate, common);

  auto* tune = app.add_subcommand("tune", "Run the hyperparameter sweep");
  add_common(tune, common);
  tune->add_flag("--resume", resume, "Continue an interrupted sweep from trials.jsonl");

  auto* train = app.add_subcommand("train", "Train one model with the selected hyperparameters");
  add_common(train, common);
  train->add_option("--lambda", lambda_path, "lambda_top file (default: <output>/lambda_top.json)");

  auto* evaluate = app.add_subcommand("evaluate", "K seeded runs, statistics and report");
  add_common(evaluate, common);
  evaluate->add_option("--lambda", lambda_path, "lambda_top file (default: <output>/lambda_top.json)");
  evaluate->add_flag("--keep-checkpoints", keep_checkpoints, "Save every run's weights under checkpoints/");

  auto* ensemble = app.add_subcommand("ensemble", "Average the checkpoints left by evaluate --keep-checkpoints");
  add_common(ensemble, common);

  std::string report_a, report_b;
  double alpha = 0.05;
  auto* compare = app.add_subcommand("compare", "t-test verdicts between two report.json files");
  compare->add_option("report_a", report_a, "First report")->required()->check(CLI::ExistingFile);
  compare->add_option("report_b", report_b, "Second report")->required()->check(CLI::ExistingFile);
  compare->add_option("--alpha", alpha, "Significance level")->check(CLI::Range(0.0, 1.0));
  bool compare_json = false;
  compare->add_flag("--json", compare_json, "Print JSON instead of markdown");

  std::string report_in, report_out;
  auto* report = app.add_subcommand("report", "Re-render report.md from report.json");
  report->add_option("report", report_in, "report.json")->required()->check(CLI::ExistingFile);
  report->add_option("-o,--output", report_out, "Markdown destination (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  tsb_set_log_callback(print_log, nullptr);

  if (*compare) {
    Owned js, md;
    const tsb_status st = tsb_compare_reports(report_a.c_str(), report_b.c_str(), alpha, &js.p, &md.p);
    if (st != TSB_OK) return report_failure(st);
    std::cout << (compare_json ? js.str() + "\n" : md.str());
    return kExitOk;
  }
  if (*report) {
    Owned md;
    const tsb_status st = tsb_render_report(report_in.c_str(), &md.p);
    if (st != TSB_OK) return report_failure(st);
    if (report_out.empty()) {
      std::cout << md.str();
    } else {
      std::ofstream out(report_out, std::ios::binary);
      out << md.str();
      if (!out) {
        std::cerr << "error: cannot write " << report_out << "\n";
        return kExitRuntime;
      }
    }
    return kExitOk;
  }

  Session session;
  const tsb_status opened = session.open(common);
  if (*validate) {
    if (opened == TSB_OK) std::cout << "configuration is valid\n";
    else if (opened != TSB_ERR_CONFIG) return report_failure(opened);
    return exit_code(opened);
  }
  if (opened != TSB_OK) return report_failure(opened);

  tsb_run_options opts;
  tsb_run_options_init(&opts);
  opts.output_dir = common.output.empty() ? nullptr : common.output.c_str();
  opts.jobs = common.jobs == 0 ? default_jobs() : common.jobs;
  opts.resume = resume ? 1 : 0;
  opts.keep_checkpoints = keep_checkpoints ? 1 : 0;
  opts.lambda_path = lambda_path.empty() ? nullptr : lambda_path.c_str();

  Owned result;
  tsb_status st = TSB_OK;
  if (*generate) st = tsb_generate(session.get(), &opts, &result.p);
  else if (*tune) st = tsb_tune(session.get(), &opts, &result.p);
  else if (*train) st = tsb_train(session.get(), &opts, &result.p);
  else if (*evaluate) st = tsb_evaluate(session.get(), &opts, nullptr);
  else if (*ensemble) st = tsb_ensemble(session.get(), &opts, &result.p);
  if (st != TSB_OK) return report_failure(st);
  if (result.p) std::cout << result.str() << "\n";
  return kExitOk;
}
