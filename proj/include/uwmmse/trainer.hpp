#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "uwmmse/channel.hpp"
#include "uwmmse/model.hpp"
#include "uwmmse/rng.hpp"

namespace uwmmse {

// How one channel sample is derived from the base topology: optionally
// resized to `size` pairs, optionally density-scaled by `density`, then faded.
// All randomness comes from `seed` through the per-purpose streams.
struct SamplePlan {
  std::uint64_t seed = 0;
  std::optional<double> density;
  std::optional<std::size_t> size;
};

ChannelMatrix make_channel(const Topology& base, double sigma, const SamplePlan& plan);

enum class RegimeKind { fixed_topology, density_robust, size_robust };

struct Regime {
  RegimeKind kind = RegimeKind::fixed_topology;
  double d_lo = 0.5, d_hi = 5.0;       // density_robust
  std::size_t m_lo = 10, m_hi = 30;    // size_robust, inclusive
};

const char* regime_name(RegimeKind kind) noexcept;
RegimeKind parse_regime(const std::string& name);

// Produces training batches and held-out samples for a regime. Training and
// held-out data use disjoint seed streams.
class ChannelSource {
 public:
  ChannelSource(Topology base, double sigma, Regime regime, std::uint64_t seed);

  // Plans for training step `step`. Under size_robust one size is drawn per
  // batch; under density_robust one density per sample.
  std::vector<SamplePlan> batch_plans(std::uint64_t step, std::size_t batch_size) const;
  std::vector<SamplePlan> holdout_plans(std::size_t count) const;

  ChannelMatrix materialize(const SamplePlan& plan) const {
    return make_channel(base_, sigma_, plan);
  }
  std::vector<ChannelMatrix> materialize(std::span<const SamplePlan> plans) const;

  const Topology& base() const noexcept { return base_; }
  double sigma() const noexcept { return sigma_; }
  const Regime& regime() const noexcept { return regime_; }

 private:
  SamplePlan plan_for(Stream stream, std::uint64_t index, std::optional<std::size_t> size) const;

  Topology base_;
  double sigma_;
  Regime regime_;
  std::uint64_t seed_;
};

enum class OptimizerKind { sgd, adam };

struct TrainConfig {
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  std::size_t steps_per_epoch = 100;
  std::size_t max_epochs = 10;
  OptimizerKind optimizer = OptimizerKind::adam;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double grad_clip = 0.0;  // global-norm clip; 0 disables
  std::uint64_t seed = 0;
  std::size_t holdout_size = 512;
  std::size_t layers = kDefaultLayers;
  std::size_t hidden = kDefaultHidden;
  double p_max = 1.0;
  std::size_t threads = 1;
  // Where train_step dumps the parameters on a non-finite loss; empty skips.
  std::filesystem::path diagnostics_dir;

  void validate() const;
};

// -(1/|batch|) sum_H sum_i c_i(forward(H), H), built on one tape.
ad::Var empirical_loss(ad::Tape& tape, std::span<const ChannelMatrix> batch,
                       const ModelVars& theta, double p_max);

struct LossGrad {
  double loss = 0.0;
  std::vector<double> grad;  // ModelParams::flatten order
};

// Same loss and its gradient, with one tape per sample (fanned out over
// `threads`) and the gradients reduced in sample order.
LossGrad loss_and_grad(std::span<const ChannelMatrix> batch, const ModelParams& theta,
                       std::size_t threads = 1);

struct OptimizerState {
  OptimizerKind kind = OptimizerKind::adam;
  std::vector<double> m, v;  // adam moments
  std::uint64_t t = 0;
};

OptimizerState make_optimizer(const TrainConfig& config, std::size_t parameter_count);

// In-place update of `params` from `grad`.
void optimizer_update(OptimizerState& state, const TrainConfig& config,
                      std::span<double> params, std::span<const double> grad);

struct StepResult {
  double loss = 0.0;
  double grad_norm = 0.0;
};

// One optimizer step. A non-finite loss or gradient throws non_finite with
// `batch_tag` in the message and, if configured, dumps theta first.
StepResult train_step(std::span<const ChannelMatrix> batch, ModelParams& theta,
                      OptimizerState& state, const TrainConfig& config,
                      const std::string& batch_tag = {});

struct EvalSummary {
  std::size_t count = 0;
  double mean = 0.0, stddev = 0.0;
  double min = 0.0, q1 = 0.0, median = 0.0, q3 = 0.0, max = 0.0;
  double mean_time_s = 0.0;
  std::vector<double> values;  // per-sample sum-rates
  std::vector<double> times_s;
};

// Quartiles by linear interpolation between order statistics; population std.
EvalSummary summarize(std::vector<double> values, std::vector<double> times_s = {});

EvalSummary evaluate(const ModelParams& theta, std::span<const ChannelMatrix> dataset);

struct TrainLog {
  std::vector<double> step_loss;
  std::vector<double> step_seconds;
  std::vector<double> epoch_holdout_mean;
  std::size_t best_epoch = 0;  // 0 = the initial parameters
  double initial_holdout_mean = 0.0;
};

struct TrainResult {
  ModelParams best;
  ModelParams last;
  TrainLog log;
};

using StepCallback = std::function<void(std::size_t step, double loss, double seconds)>;
using EpochCallback = std::function<void(std::size_t epoch, double holdout_mean)>;

struct TrainHooks {
  StepCallback on_step;
  EpochCallback on_epoch;
  std::uint64_t first_step = 0;  // offset for resumed runs
};

// Trains from `initial` (identity-unfold init when absent) and returns the
// parameters with the best held-out mean sum-rate, including the starting
// point.
TrainResult train(const TrainConfig& config, const ChannelSource& source,
                  std::optional<ModelParams> initial = std::nullopt,
                  const TrainHooks& hooks = {});

// Runs fn(i) for i in [0, n) over up to `threads` workers.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

}  // namespace uwmmse
