#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "helpers.hpp"
#include "uwmmse/experiment.hpp"

using namespace uwmmse;
using namespace uwmmse::exp;
namespace fs = std::filesystem;

namespace {

// Fresh scratch directory per test case, removed on exit.
struct ScratchDir {
  fs::path path;
  explicit ScratchDir(const std::string& name)
      : path(fs::temp_directory_path() / ("uwmmse_test_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~ScratchDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::string> lines(const fs::path& p) {
  std::vector<std::string> out;
  std::ifstream in(p);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

ExperimentConfig small_config() {
  return parse_config(R"({"M": 5, "sigma": 0.01, "num_samples": 6, "samples_per_file": 4,
                          "batch_size": 4, "steps_per_epoch": 3, "max_epochs": 2,
                          "holdout_size": 8, "samples_per_point": 6, "n_list": [3, 5, 7],
                          "d_list": [1.0, 2.5], "bench_batches": 2, "bench_batch_size": 3})");
}

}  // namespace

TEST_CASE("config parsing") {
  const ExperimentConfig def = parse_config("{}");
  CHECK(def.M == 10);
  CHECK(def.sigma == 2.6e-5);
  CHECK(def.layers == 4);

  const ExperimentConfig c = parse_config(R"({"M": 20, "optimizer": "sgd", "density": 2.0,
                                              "regime": "density_robust", "d_list": [1, 3]})");
  CHECK(c.M == 20);
  CHECK(c.optimizer == OptimizerKind::sgd);
  CHECK(c.density == 2.0);
  CHECK(c.regime == RegimeKind::density_robust);
  CHECK(c.d_list == std::vector<double>{1.0, 3.0});

  try {
    parse_config(R"({"M": 5, "num_layers": 3})");
    FAIL("expected a config error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::config_error);
    CHECK(std::string(e.what()).find("num_layers") != std::string::npos);
  }
  CHECK(test::error_code_of([] { parse_config(R"({"M": "ten"})"); }) ==
        test::code(ErrorCode::config_error));
  CHECK(test::error_code_of([] { parse_config(R"({"M": 0})"); }) ==
        test::code(ErrorCode::config_error));
  CHECK(test::error_code_of([] { parse_config("[1, 2]"); }) == test::code(ErrorCode::config_error));
  CHECK(test::error_code_of([] { parse_config("{"); }) == test::code(ErrorCode::parse_error));

  ExperimentConfig o = c;
  apply_overrides(o, R"({"seed": 9, "density": null})");
  CHECK(o.seed == 9);
  CHECK_FALSE(o.density.has_value());

  CHECK(parse_config(config_to_json(c)).M == c.M);
  CHECK(config_to_json(parse_config(config_to_json(c))) == config_to_json(c));
}

TEST_CASE("methods") {
  CHECK(parse_methods("wmmse,uwmmse") == std::vector<Method>{Method::wmmse, Method::uwmmse});
  CHECK(std::string(method_name(Method::ro_uwmmse)) == "ro_uwmmse");
  CHECK(needs_checkpoint(Method::uwmmse));
  CHECK_FALSE(needs_checkpoint(Method::tr_wmmse));
  CHECK(test::error_code_of([] { parse_methods("wmmse,magic"); }) ==
        test::code(ErrorCode::invalid_argument));
}

TEST_CASE("generate writes regenerable batches") {
  ScratchDir dir("generate");
  const ExperimentConfig cfg = small_config();
  const Dataset ds = cmd_generate(cfg, dir.path / "a");
  CHECK(ds.samples.size() == 6);
  CHECK(fs::exists(dir.path / "a" / "batch_0000.json"));
  CHECK(fs::exists(dir.path / "a" / "batch_0001.json"));
  CHECK_FALSE(fs::exists(dir.path / "a" / "batch_0002.json"));

  const Dataset back = load_dataset(dir.path / "a");
  REQUIRE(back.samples.size() == 6);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(back.samples[i].channel.h == ds.samples[i].channel.h);
    CHECK(back.samples[i].seed == ds.samples[i].seed);
  }
  CHECK(back.topology == ds.topology);

  // Regenerate from the manifest's own config: byte-identical files.
  cmd_generate(back.config, dir.path / "b");
  for (const char* f : {"manifest.json", "batch_0000.json", "batch_0001.json"})
    CHECK(slurp(dir.path / "a" / f) == slurp(dir.path / "b" / f));

  const auto manifest = nlohmann::json::parse(slurp(dir.path / "a" / "manifest.json"));
  CHECK(manifest["schema"] == "uwmmse-dataset");
  CHECK(manifest["schema_version"] == 1);
  CHECK(manifest["batches"].size() == 2);

  CHECK(git_blob_hash(dir.path / "a" / "manifest.json").size() == 40);
}

TEST_CASE("git blob hash matches git") {
  ScratchDir dir("hash");
  std::ofstream(dir.path / "f") << "hello\n";
  CHECK(git_blob_hash(dir.path / "f") == "ce013625030ba8dba906f756967f9e9ca394464a");
}

TEST_CASE("density and size datasets") {
  ExperimentConfig cfg = small_config();
  cfg.density = 2.0;
  cfg.size = 8;
  const Dataset ds = generate_dataset(cfg);
  CHECK(ds.samples.front().channel.size() == 8);
  CHECK(ds.samples.front().density == 2.0);
}

TEST_CASE("corrupt datasets are rejected") {
  ScratchDir dir("corrupt");
  cmd_generate(small_config(), dir.path);
  fs::remove(dir.path / "batch_0001.json");
  CHECK(test::error_code_of([&] { load_dataset(dir.path); }) == test::code(ErrorCode::io_error));
  CHECK(test::error_code_of([&] { load_dataset(dir.path / "missing"); }) ==
        test::code(ErrorCode::io_error));
}

TEST_CASE("train, resume and evaluate") {
  ScratchDir dir("train");
  const ExperimentConfig cfg = small_config();
  const TrainOutcome first = cmd_train(cfg, dir.path / "run");
  CHECK(fs::exists(first.checkpoint));
  CHECK(fs::exists(dir.path / "run" / "last.txt"));
  CHECK(fs::exists(dir.path / "run" / "train_manifest.json"));
  CHECK(first.best.nodes == 5);

  const auto log1 = lines(dir.path / "run" / "train_log.csv");
  CHECK(log1.front() == "schema_version,kind,step,epoch,loss,holdout_mean,seconds");
  CHECK(log1.size() == 1 + 6 + 2);
  CHECK(log1[1].rfind("1,step,0,1,", 0) == 0);

  cmd_train(cfg, dir.path / "run", dir.path / "run" / "last.txt");
  const auto log2 = lines(dir.path / "run" / "train_log.csv");
  CHECK(log2.size() == 1 + 2 * (6 + 2));
  CHECK(std::equal(log1.begin(), log1.end(), log2.begin()));
  CHECK(log2[log1.size()].rfind("1,step,6,3,", 0) == 0);
  CHECK(log2.back().rfind("1,epoch,11,4,", 0) == 0);

  cmd_generate(cfg, dir.path / "data");
  const ExperimentResult r = cmd_eval(cfg, {{Method::uwmmse, first.checkpoint}}, dir.path / "data",
                                      {Method::wmmse, Method::tr_wmmse, Method::uwmmse},
                                      dir.path / "eval");
  CHECK(r.rows.size() == 3);
  REQUIRE(r.checks.size() == 1);
  CHECK((r.checks[0].rfind("PASS", 0) == 0 || r.checks[0].rfind("FAIL", 0) == 0));
  const auto samples = lines(dir.path / "eval" / "eval_samples.csv");
  CHECK(samples.front() ==
        "schema_version,experiment,method,M,d,sample_index,sample_seed,sum_rate,inference_time_s");
  CHECK(samples.size() == 1 + 3 * 6);
  const auto summary = lines(dir.path / "eval" / "eval_summary.csv");
  CHECK(summary.size() == 4);
  CHECK(fs::exists(dir.path / "eval" / "eval_manifest.json"));

  SUBCASE("network size mismatch") {
    ExperimentConfig other = cfg;
    other.M = 6;
    cmd_generate(other, dir.path / "data6");
    CHECK(test::error_code_of([&] {
            cmd_eval(cfg, {{Method::uwmmse, first.checkpoint}}, dir.path / "data6",
                     {Method::uwmmse}, dir.path / "eval6");
          }) == test::code(ErrorCode::invalid_argument));
  }
  SUBCASE("empty dataset") {
    ExperimentConfig none = cfg;
    none.num_samples = 0;
    cmd_generate(none, dir.path / "empty");
    CHECK(test::error_code_of([&] {
            cmd_eval(cfg, {}, dir.path / "empty", {Method::wmmse}, dir.path / "eval0");
          }) == test::code(ErrorCode::invalid_argument));
  }
  SUBCASE("missing checkpoint") {
    CHECK(test::error_code_of([&] {
            cmd_eval(cfg, {}, dir.path / "data", {Method::uwmmse}, dir.path / "evalx");
          }) == test::code(ErrorCode::config_error));
  }
  SUBCASE("timing table") {
    const auto rows = cmd_bench_time(cfg, first.checkpoint, dir.path / "data", dir.path / "bench");
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].method == Method::wmmse);
    CHECK(rows[0].ratio_to_wmmse == 1.0);
    CHECK(rows[1].iterations == 4);
    for (const auto& row : rows) CHECK(row.median_per_sample_s > 0.0);
    CHECK(lines(dir.path / "bench" / "bench_time.csv").size() == 4);
  }
}

TEST_CASE("sweeps") {
  const ExperimentConfig cfg = small_config();
  const std::map<Method, ModelParams> models{
      {Method::uwmmse, init_model(4, 1.0, cfg.sigma, 0)},
      {Method::ro_uwmmse, init_model(4, 1.0, cfg.sigma, 1)}};
  const std::vector<Method> all{Method::wmmse, Method::tr_wmmse, Method::uwmmse, Method::ro_uwmmse};

  const ExperimentResult d = sweep_density(cfg, models, all);
  CHECK(d.rows.size() == 2 * 4);
  // Identity-initialized models are truncated WMMSE, so they tie it exactly.
  for (double dv : cfg.d_list)
    CHECK(d.find(Method::uwmmse, 5, dv)->summary.mean == d.find(Method::tr_wmmse, 5, dv)->summary.mean);

  const ExperimentResult s = sweep_size(cfg, models, all);
  CHECK(s.rows.size() == 3 * 4);
  REQUIRE(s.find(Method::wmmse, 7, 1.0) != nullptr);
  CHECK(s.find(Method::wmmse, 7, 1.0)->summary.count == 6);

  ExperimentConfig one = cfg;
  one.n_list = {1};
  const ExperimentResult single = sweep_size(one, models, all);
  const double ref = single.rows.front().summary.mean;
  for (const auto& row : single.rows) CHECK(row.summary.mean == doctest::Approx(ref).epsilon(1e-15));

  ExperimentConfig empty = cfg;
  empty.d_list.clear();
  CHECK(test::error_code_of([&] { sweep_density(empty, models, all); }) ==
        test::code(ErrorCode::invalid_argument));
}

TEST_CASE("selftest suites pass") {
  for (const auto& line : cmd_selftest(0)) {
    INFO(line.name << ": " << line.detail);
    CHECK(line.passed);
  }
}
