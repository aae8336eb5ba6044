// Exercises the shared library through its C header only.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "uwmmse/uwmmse.h"

namespace fs = std::filesystem;

TEST_CASE("status names and last error") {
  CHECK(std::string(uwm_status_name(UWM_OK)) == "ok");
  CHECK(std::string(uwm_status_name(UWM_CONFIG_ERROR)) == "config-error");

  uwm_channel* ch = nullptr;
  const double h[] = {1.0, -1.0, 0.0, 1.0};
  CHECK(uwm_channel_from_matrix(2, h, 1.0, &ch) == UWM_INVALID_ARGUMENT);
  CHECK(ch == nullptr);
  CHECK(std::string(uwm_last_error()).find("nonnegative") != std::string::npos);
  CHECK(uwm_channel_from_matrix(2, nullptr, 1.0, &ch) == UWM_INVALID_ARGUMENT);
}

TEST_CASE("channel, rate and solvers") {
  uwm_channel* ch = nullptr;
  const double ones[] = {1, 1, 1, 1};
  REQUIRE(uwm_channel_from_matrix(2, ones, 1.0, &ch) == UWM_OK);
  CHECK(uwm_channel_size(ch) == 2);
  double copy[4] = {};
  CHECK(uwm_channel_copy_matrix(ch, copy, 4) == UWM_OK);
  CHECK(copy[3] == 1.0);
  CHECK(uwm_channel_copy_matrix(ch, copy, 3) == UWM_INVALID_ARGUMENT);

  const double p[] = {1, 1};
  double rate = 0.0;
  CHECK(uwm_sum_rate(ch, p, 2, &rate) == UWM_OK);
  CHECK(std::abs(rate - 2 * std::log2(1.5)) < 1e-12);
  CHECK(uwm_sum_rate(ch, p, 3, &rate) == UWM_INVALID_ARGUMENT);
  uwm_channel_free(ch);

  uwm_channel* g = nullptr;
  REQUIRE(uwm_channel_generate(6, 2.6e-5, 3, 4, &g) == UWM_OK);
  std::vector<double> pw(6), pt(6), pm(6);
  std::size_t iters = 0;
  CHECK(uwm_wmmse(g, 1.0, 100, 1e-6, pw.data(), 6, &iters) == UWM_OK);
  CHECK(iters >= 1);
  CHECK(iters <= 100);
  CHECK(uwm_truncated_wmmse(g, 1.0, 4, pt.data(), 6) == UWM_OK);

  uwm_model* model = nullptr;
  REQUIRE(uwm_model_init(4, 1.0, 2.6e-5, 0, &model) == UWM_OK);
  CHECK(uwm_model_layers(model) == 4);
  CHECK(uwm_model_parameter_count(model) == 4 * 2 * 26);
  CHECK(uwm_model_power(model, g, pm.data(), 6) == UWM_OK);
  for (std::size_t i = 0; i < 6; ++i) CHECK(std::abs(pm[i] - pt[i]) <= 1e-12);

  const fs::path path = fs::temp_directory_path() / "uwmmse_c_api_model.txt";
  CHECK(uwm_model_save(model, path.c_str()) == UWM_OK);
  uwm_model* back = nullptr;
  CHECK(uwm_model_load(path.c_str(), &back) == UWM_OK);
  std::vector<double> pb(6);
  CHECK(uwm_model_power(back, g, pb.data(), 6) == UWM_OK);
  CHECK(pb == pm);
  fs::remove(path);
  CHECK(uwm_model_load("/nonexistent/model.txt", &back) == UWM_IO_ERROR);

  uwm_model_free(back);
  uwm_model_free(model);
  uwm_channel_free(g);
  uwm_channel_free(nullptr);
}

TEST_CASE("config handles") {
  uwm_config* cfg = nullptr;
  REQUIRE(uwm_config_new(&cfg) == UWM_OK);
  CHECK(uwm_config_apply_json(cfg, R"({"M": 4, "num_samples": 3})") == UWM_OK);
  CHECK(uwm_config_apply_json(cfg, R"({"bogus": 1})") == UWM_CONFIG_ERROR);
  CHECK(std::string(uwm_last_error()).find("bogus") != std::string::npos);
  CHECK(uwm_config_set_seed(cfg, 17) == UWM_OK);

  std::size_t needed = 0;
  CHECK(uwm_config_to_json(cfg, nullptr, 0, &needed) == UWM_OK);
  REQUIRE(needed > 0);
  std::string buf(needed, '\0');
  CHECK(uwm_config_to_json(cfg, buf.data(), buf.size(), &needed) == UWM_OK);
  CHECK(buf.find("\"seed\":17") != std::string::npos);

  const fs::path dir = fs::temp_directory_path() / "uwmmse_c_api_cmd";
  fs::remove_all(dir);
  uwm_report* rep = nullptr;
  CHECK(uwm_cmd_generate(cfg, (dir / "data").c_str(), &rep) == UWM_OK);
  CHECK(uwm_report_line_count(rep) == 1);
  uwm_report_free(rep);
  rep = nullptr;

  CHECK(uwm_cmd_eval(cfg, (dir / "data").c_str(), "wmmse,tr_wmmse", nullptr, (dir / "eval").c_str(),
                     &rep) == UWM_OK);
  CHECK(uwm_report_line_count(rep) == 3);
  CHECK(uwm_report_all_passed(rep) == 1);
  uwm_report_free(rep);
  rep = nullptr;

  CHECK(uwm_cmd_eval(cfg, (dir / "data").c_str(), "uwmmse", "", (dir / "eval").c_str(), &rep) ==
        UWM_CONFIG_ERROR);
  CHECK(rep == nullptr);
  CHECK(uwm_cmd_eval(cfg, (dir / "data").c_str(), "wmmse", "wmmse=x.txt", (dir / "eval").c_str(),
                     &rep) == UWM_INVALID_ARGUMENT);
  fs::remove_all(dir);
  uwm_config_free(cfg);

  CHECK(uwm_config_load("/nonexistent/config.json", &cfg) == UWM_IO_ERROR);
}
