// Command-line front end over the C interface.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure
// (including failed selftest suites).

#include <CLI11.hpp>

#include <cstdint>
#include <cstdio>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "uwmmse/uwmmse.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "out";
  std::string methods;
  std::vector<std::string> checkpoints;
  std::string dataset;
  std::vector<std::string> overrides;
};

int report_failure(uwm_status st) {
  std::fprintf(stderr, "error (%s): %s\n", uwm_status_name(st), uwm_last_error());
  return st == UWM_CONFIG_ERROR ? kExitUsage : kExitRuntime;
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) out += (out.empty() ? "" : ",") + s;
  return out;
}

bool valid_methods(const std::string& list) {
  std::istringstream in(list);
  for (std::string m; std::getline(in, m, ',');)
    if (m != "wmmse" && m != "tr_wmmse" && m != "uwmmse" && m != "ro_uwmmse") {
      std::fprintf(stderr, "error: unknown method '%s'\n", m.c_str());
      return false;
    }
  return true;
}

// Owns the handles of one invocation.
class Session {
 public:
  ~Session() {
    uwm_report_free(report_);
    uwm_config_free(config_);
  }

  uwm_status load(const Options& opt) {
    uwm_status st = opt.config_path.empty() ? uwm_config_new(&config_)
                                            : uwm_config_load(opt.config_path.c_str(), &config_);
    for (const auto& json : opt.overrides)
      if (st == UWM_OK) st = uwm_config_apply_json(config_, json.c_str());
    if (st == UWM_OK && opt.seed) st = uwm_config_set_seed(config_, *opt.seed);
    return st;
  }

  uwm_config* config() { return config_; }
  uwm_report** report() { return &report_; }

  int finish(uwm_status st) {
    if (st != UWM_OK) return report_failure(st);
    for (std::size_t i = 0; i < uwm_report_line_count(report_); ++i)
      std::printf("%s\n", uwm_report_line(report_, i));
    return kExitOk;
  }

 private:
  uwm_config* config_ = nullptr;
  uwm_report* report_ = nullptr;
};

void common_options(CLI::App* cmd, Options& opt, bool with_out_dir = true) {
  cmd->add_option("--config", opt.config_path, "JSON experiment config")->check(CLI::ExistingFile);
  cmd->add_option("--seed", opt.seed, "override the config seed");
  cmd->add_option("--set", opt.overrides, "JSON object of config overrides (repeatable)");
  if (with_out_dir) cmd->add_option("--out-dir", opt.out_dir, "output directory");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Unfolded WMMSE power allocation: data generation, training and evaluation"};
  app.require_subcommand(1);
  Options opt;

  auto* generate = app.add_subcommand("generate", "write a channel dataset");
  common_options(generate, opt);

  auto* train = app.add_subcommand("train", "train a model and write checkpoint.txt");
  common_options(train, opt);
  train->add_option("--checkpoint", opt.checkpoints, "resume from this parameter file")->expected(0, 1);

  auto* eval = app.add_subcommand("eval", "evaluate methods on a dataset");
  common_options(eval, opt);
  eval->add_option("--dataset", opt.dataset, "dataset directory")->required();
  eval->add_option("--methods", opt.methods, "comma list (default wmmse,tr_wmmse,uwmmse)");
  eval->add_option("--checkpoint", opt.checkpoints, "[method=]path (repeatable)");

  auto* sweep_density = app.add_subcommand("sweep-density", "mean sum-rate over the d_list densities");
  common_options(sweep_density, opt);
  sweep_density->add_option("--methods", opt.methods, "comma list (default all four)");
  sweep_density->add_option("--checkpoint", opt.checkpoints, "[method=]path (repeatable)");

  auto* sweep_size = app.add_subcommand("sweep-size", "mean sum-rate over the n_list sizes");
  common_options(sweep_size, opt);
  sweep_size->add_option("--methods", opt.methods, "comma list (default all four)");
  sweep_size->add_option("--checkpoint", opt.checkpoints, "[method=]path (repeatable)");

  auto* bench = app.add_subcommand("bench-time", "per-sample inference time of each method");
  common_options(bench, opt);
  bench->add_option("--dataset", opt.dataset, "dataset directory")->required();
  bench->add_option("--checkpoint", opt.checkpoints, "uwmmse parameter file")->required()->expected(1);

  auto* selftest = app.add_subcommand("selftest", "run the invariant suites on small instances");
  selftest->add_option("--seed", opt.seed, "root seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }
  if (!opt.methods.empty() && !valid_methods(opt.methods)) return kExitUsage;

  Session s;
  if (selftest->parsed()) {
    const int rc = s.finish(uwm_cmd_selftest(opt.seed.value_or(0), s.report()));
    if (rc != kExitOk) return rc;
    return uwm_report_all_passed(*s.report()) ? kExitOk : kExitRuntime;
  }

  if (const uwm_status st = s.load(opt); st != UWM_OK) return report_failure(st);
  const std::string checkpoints = join(opt.checkpoints);
  const char* methods = opt.methods.empty() ? nullptr : opt.methods.c_str();
  const char* out = opt.out_dir.c_str();

  if (generate->parsed()) return s.finish(uwm_cmd_generate(s.config(), out, s.report()));
  if (train->parsed()) {
    const char* resume = checkpoints.empty() ? nullptr : checkpoints.c_str();
    return s.finish(uwm_cmd_train(s.config(), out, resume, s.report()));
  }
  if (eval->parsed())
    return s.finish(uwm_cmd_eval(s.config(), opt.dataset.c_str(), methods, checkpoints.c_str(), out, s.report()));
  if (sweep_density->parsed())
    return s.finish(uwm_cmd_sweep_density(s.config(), methods, checkpoints.c_str(), out, s.report()));
  if (sweep_size->parsed())
    return s.finish(uwm_cmd_sweep_size(s.config(), methods, checkpoints.c_str(), out, s.report()));
  if (bench->parsed())
    return s.finish(uwm_cmd_bench_time(s.config(), checkpoints.c_str(), opt.dataset.c_str(), out, s.report()));
  return kExitUsage;
}
