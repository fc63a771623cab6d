#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <string>

#include "tsbench/tsbench.h"

namespace {

const std::string kConfigs = TSBENCH_CONFIG_DIR;

std::string take(char* s) {
  std::string out = s ? s : "";
  tsb_string_free(s);
  return out;
}

}  // namespace

TEST(CApi, Version) { EXPECT_FALSE(std::string(tsb_version()).empty()); }

TEST(CApi, ComputeMetrics) {
  const double y[] = {1.0, 2.0, 3.0, 0.0}, p[] = {2.0, 2.0, 1.0, 0.0};
  double mae = 0, rmse = 0, smape = 0;
  ASSERT_EQ(tsb_compute_metrics(y, p, nullptr, 4, &mae, &rmse, &smape), TSB_OK);
  EXPECT_DOUBLE_EQ(mae, 3.0 / 4.0);
  EXPECT_DOUBLE_EQ(rmse, std::sqrt(5.0 / 4.0));
  EXPECT_DOUBLE_EQ(smape, 100.0 * (1.0 / 1.5 + 2.0 / 2.0) / 4.0);
  EXPECT_STREQ(tsb_last_error(), "");
  const double w[] = {1.0, 0.0, 0.0, 0.0};
  ASSERT_EQ(tsb_compute_metrics(y, p, w, 4, &mae, &rmse, &smape), TSB_OK);
  EXPECT_DOUBLE_EQ(mae, 1.0);
}

TEST(CApi, NullArgumentsReportErrors) {
  double m = 0;
  EXPECT_EQ(tsb_compute_metrics(nullptr, nullptr, nullptr, 1, &m, &m, &m), TSB_ERR_INVALID_ARGUMENT);
  EXPECT_STRNE(tsb_last_error(), "");
  tsb_config* c = nullptr;
  EXPECT_NE(tsb_config_parse(nullptr, &c), TSB_OK);
  EXPECT_EQ(c, nullptr);
}

TEST(CApi, ParseErrorsAreConfigErrors) {
  tsb_config* c = nullptr;
  EXPECT_EQ(tsb_config_parse("{not json", &c), TSB_ERR_CONFIG);
  EXPECT_STRNE(tsb_last_error(), "");
  EXPECT_EQ(tsb_config_parse(R"({"tuner": {"strateg": "tpe"}})", &c), TSB_ERR_CONFIG);
  EXPECT_NE(std::string(tsb_last_error()).find("tuner"), std::string::npos);
}

TEST(CApi, ValidateListsViolations) {
  tsb_config* c = nullptr;
  ASSERT_EQ(tsb_config_load((kConfigs + "/e2e_seasonal_naive.json").c_str(), &c), TSB_OK);
  char* v = nullptr;
  EXPECT_EQ(tsb_config_validate(c, &v), TSB_OK);
  take(v);
  char* j = nullptr;
  ASSERT_EQ(tsb_config_to_json(c, &j), TSB_OK);
  std::string text = take(j);
  tsb_config_free(c);

  const std::string key = "\"lookback\": 48";
  ASSERT_NE(text.find(key), std::string::npos);
  text.replace(text.find(key), key.size(), "\"lookback\": 0");
  ASSERT_EQ(tsb_config_parse(text.c_str(), &c), TSB_OK);
  EXPECT_EQ(tsb_config_validate(c, &v), TSB_ERR_CONFIG);
  EXPECT_NE(take(v).find("dataset.profile.lookback"), std::string::npos);
  tsb_config_free(c);
}

TEST(CApi, TuneWithoutSearchFails) {
  tsb_config* c = nullptr;
  ASSERT_EQ(tsb_config_load((kConfigs + "/e2e_seasonal_naive.json").c_str(), &c), TSB_OK);
  const auto dir = (std::filesystem::temp_directory_path() / "tsbench_c_api_tune").string();
  tsb_run_options o;
  tsb_run_options_init(&o);
  o.output_dir = dir.c_str();
  EXPECT_EQ(tsb_tune(c, &o, nullptr), TSB_ERR_CONFIG);
  EXPECT_NE(std::string(tsb_last_error()).find("nothing to tune"), std::string::npos);
  tsb_config_free(c);
}

TEST(CApi, EvaluateAndCompare) {
  tsb_config* c = nullptr;
  ASSERT_EQ(tsb_config_load((kConfigs + "/e2e_seasonal_naive.json").c_str(), &c), TSB_OK);
  const auto dir = std::filesystem::temp_directory_path() / "tsbench_c_api_eval";
  std::filesystem::remove_all(dir);
  const std::string out = dir.string();
  tsb_run_options o;
  tsb_run_options_init(&o);
  o.output_dir = out.c_str();
  char* report = nullptr;
  ASSERT_EQ(tsb_evaluate(c, &o, &report), TSB_OK) << tsb_last_error();
  EXPECT_NE(take(report).find("\"models\""), std::string::npos);
  const std::string path = out + "/report.json";
  char *cj = nullptr, *cm = nullptr;
  ASSERT_EQ(tsb_compare_reports(path.c_str(), path.c_str(), 0.05, &cj, &cm), TSB_OK);
  EXPECT_NE(take(cj).find("NO_DIFFERENCE"), std::string::npos);
  EXPECT_FALSE(take(cm).empty());
  char* md = nullptr;
  ASSERT_EQ(tsb_render_report(path.c_str(), &md), TSB_OK);
  EXPECT_NE(take(md).find("SEASONAL_NAIVE"), std::string::npos);
  EXPECT_EQ(tsb_render_report("/nonexistent/report.json", &md), TSB_ERR_IO);
  tsb_config_free(c);
}

TEST(CApi, SetSeedChangesSerialization) {
  tsb_config* c = nullptr;
  ASSERT_EQ(tsb_config_load((kConfigs + "/ar1_global_linear.json").c_str(), &c), TSB_OK);
  char* a = nullptr;
  tsb_config_to_json(c, &a);
  ASSERT_EQ(tsb_config_set_seed(c, 1234), TSB_OK);
  char* b = nullptr;
  tsb_config_to_json(c, &b);
  const std::string sa = take(a), sb = take(b);
  EXPECT_NE(sa, sb);
  EXPECT_NE(sb.find("1234"), std::string::npos);
  tsb_config_free(c);
}
