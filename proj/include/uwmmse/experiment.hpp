#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "uwmmse/trainer.hpp"
#include "uwmmse/wmmse.hpp"

namespace uwmmse::exp {

inline constexpr int kSchemaVersion = 1;

enum class Method { wmmse, tr_wmmse, uwmmse, ro_uwmmse };

const char* method_name(Method m) noexcept;
Method parse_method(const std::string& name);
std::vector<Method> parse_methods(const std::string& comma_list);
bool needs_checkpoint(Method m) noexcept;

// Every experiment knob. Read from a JSON object whose keys are exactly the
// field names below; unknown keys and ill-typed values are config errors.
struct ExperimentConfig {
  // network and channel
  std::size_t M = 10;
  double sigma = 2.6e-5;
  double p_max = 1.0;
  std::uint64_t seed = 0;
  // dataset generation
  std::size_t num_samples = 512;
  std::size_t samples_per_file = 512;
  std::optional<double> density;
  std::optional<std::size_t> size;
  // model
  std::size_t layers = kDefaultLayers;
  std::size_t hidden = kDefaultHidden;
  // training
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  std::size_t steps_per_epoch = 100;
  std::size_t max_epochs = 10;
  OptimizerKind optimizer = OptimizerKind::adam;
  double grad_clip = 0.0;
  std::size_t holdout_size = 512;
  RegimeKind regime = RegimeKind::fixed_topology;
  double d_lo = 0.5, d_hi = 5.0;
  std::size_t m_lo = 10, m_hi = 30;
  std::size_t threads = 1;
  // classical solvers
  std::size_t max_iter = kDefaultMaxIter;
  double tol = kDefaultTol;
  std::size_t tr_iterations = 4;
  // sweeps and timing
  std::vector<double> d_list{1.0, 2.0, 3.0, 4.0, 5.0};
  std::vector<std::size_t> n_list{10, 15, 20, 25, 30};
  std::size_t samples_per_point = 512;
  std::size_t bench_batches = 20;
  std::size_t bench_batch_size = 64;

  void validate() const;
  TrainConfig train_config() const;
  Regime regime_spec() const;
  Topology base_topology() const { return gen_topology(M, seed); }
};

// Parses JSON text. Overrides later in the list win.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::filesystem::path& path);
// Applies a JSON object of overrides on top of an existing config.
void apply_overrides(ExperimentConfig& config, const std::string& json_text);
std::string config_to_json(const ExperimentConfig& config);

struct DatasetSample {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  double density = 1.0;  // 1.0 when no density scaling was applied
  ChannelMatrix channel;
};

struct Dataset {
  ExperimentConfig config;
  Topology topology;
  std::vector<DatasetSample> samples;
};

// Writes manifest.json plus batch_NNNN.json files of at most
// samples_per_file records each. Each record: {index, M, sigma, seed, d,
// entries (row-major)}.
Dataset cmd_generate(const ExperimentConfig& config, const std::filesystem::path& out_dir);
Dataset generate_dataset(const ExperimentConfig& config);
Dataset load_dataset(const std::filesystem::path& dir);

// SHA-1 over "blob <size>\0<content>", as git hashes file contents.
std::string git_blob_hash(const std::filesystem::path& file);

struct TrainOutcome {
  ModelParams best;
  TrainLog log;
  std::filesystem::path checkpoint;
};

// Trains per the config regime; writes checkpoint.txt, appends to
// train_log.csv and writes train_manifest.json. With `resume`, training
// starts from that checkpoint and the step counter continues the log.
TrainOutcome cmd_train(const ExperimentConfig& config, const std::filesystem::path& out_dir,
                       const std::optional<std::filesystem::path>& resume = std::nullopt);

using CheckpointMap = std::map<Method, std::filesystem::path>;

struct MethodSummary {
  Method method;
  std::size_t M = 0;
  double density = 1.0;
  EvalSummary summary;  // values and times in sample order
  std::vector<std::size_t> sample_index;
  std::vector<std::uint64_t> sample_seed;
};

struct ExperimentResult {
  std::string experiment;
  std::vector<MethodSummary> rows;
  std::vector<std::string> checks;  // "PASS ..." or "FAIL ..." ordering checks
  const MethodSummary* find(Method m, std::size_t M, double d) const;
};

// Power allocation of one method on one channel.
Vector allocate(Method method, const ChannelMatrix& ch, const ExperimentConfig& config,
                const ModelParams* model);

ExperimentResult cmd_eval(const ExperimentConfig& config, const CheckpointMap& checkpoints,
                          const std::filesystem::path& dataset_dir,
                          const std::vector<Method>& methods, const std::filesystem::path& out_dir);
ExperimentResult evaluate_methods(const ExperimentConfig& config,
                                  const std::map<Method, ModelParams>& models,
                                  const std::vector<DatasetSample>& samples,
                                  const std::vector<Method>& methods);

ExperimentResult cmd_sweep_density(const ExperimentConfig& config, const CheckpointMap& checkpoints,
                                   const std::vector<Method>& methods,
                                   const std::filesystem::path& out_dir);
ExperimentResult cmd_sweep_size(const ExperimentConfig& config, const CheckpointMap& checkpoints,
                                const std::vector<Method>& methods,
                                const std::filesystem::path& out_dir);
ExperimentResult sweep_density(const ExperimentConfig& config,
                               const std::map<Method, ModelParams>& models,
                               const std::vector<Method>& methods);
ExperimentResult sweep_size(const ExperimentConfig& config,
                            const std::map<Method, ModelParams>& models,
                            const std::vector<Method>& methods);

struct TimingRow {
  Method method;
  std::size_t iterations = 0;  // sweeps / layers
  std::size_t batches = 0;
  std::size_t batch_size = 0;
  double median_per_sample_s = 0.0;
  double mean_per_sample_s = 0.0;
  double ratio_to_wmmse = 0.0;
};

// Per-sample time = batch wall time / batch size; one warm-up batch is
// discarded, then bench_batches batches are timed (cycling through the
// dataset).
std::vector<TimingRow> bench_time(const ExperimentConfig& config, const ModelParams& model,
                                  const std::vector<DatasetSample>& samples);
std::vector<TimingRow> cmd_bench_time(const ExperimentConfig& config,
                                      const std::filesystem::path& checkpoint,
                                      const std::filesystem::path& dataset_dir,
                                      const std::filesystem::path& out_dir);

struct SelftestLine {
  std::string name;
  bool passed = false;
  std::string detail;
};

// Quick invariant suites on small random instances.
std::vector<SelftestLine> cmd_selftest(std::uint64_t seed);

}  // namespace uwmmse::exp
