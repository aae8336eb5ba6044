#include "uwmmse/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "uwmmse/rng.hpp"

namespace uwmmse {

ChannelMatrix make_channel(const Topology& base, double sigma, const SamplePlan& plan) {
  Topology top = plan.size ? resize(base, *plan.size, plan.seed) : base;
  if (plan.density) top = apply_density(top, *plan.density, plan.seed);
  return sample_channel(top, sigma, plan.seed);
}

const char* regime_name(RegimeKind kind) noexcept {
  switch (kind) {
    case RegimeKind::fixed_topology: return "fixed_topology";
    case RegimeKind::density_robust: return "density_robust";
    case RegimeKind::size_robust: return "size_robust";
  }
  return "unknown";
}

RegimeKind parse_regime(const std::string& name) {
  for (RegimeKind k : {RegimeKind::fixed_topology, RegimeKind::density_robust,
                       RegimeKind::size_robust})
    if (name == regime_name(k)) return k;
  fail(ErrorCode::config_error, "unknown regime '" + name + "'");
}

ChannelSource::ChannelSource(Topology base, double sigma, Regime regime, std::uint64_t seed)
    : base_(std::move(base)), sigma_(sigma), regime_(regime), seed_(seed) {
  require(base_.size() >= 1, "ChannelSource: empty base topology");
  require(sigma_ > 0.0, "ChannelSource: sigma must be positive");
  if (regime_.kind == RegimeKind::density_robust)
    require(regime_.d_lo > 0.0 && regime_.d_lo <= regime_.d_hi, "ChannelSource: bad d_range");
  if (regime_.kind == RegimeKind::size_robust)
    require(regime_.m_lo >= 1 && regime_.m_lo <= regime_.m_hi, "ChannelSource: bad M_range");
}

SamplePlan ChannelSource::plan_for(Stream stream, std::uint64_t index,
                                   std::optional<std::size_t> size) const {
  SamplePlan plan;
  plan.seed = derive_seed(seed_, stream, index);
  switch (regime_.kind) {
    case RegimeKind::fixed_topology:
      break;
    case RegimeKind::density_robust: {
      Rng rng(plan.seed, Stream::density, 1);
      plan.density = rng.uniform(regime_.d_lo, regime_.d_hi);
      break;
    }
    case RegimeKind::size_robust:
      if (!size) {
        Rng rng(plan.seed, Stream::resize, 1);
        size = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(regime_.m_lo),
                                                        static_cast<std::int64_t>(regime_.m_hi)));
      }
      plan.size = size;
      break;
  }
  return plan;
}

std::vector<SamplePlan> ChannelSource::batch_plans(std::uint64_t step,
                                                   std::size_t batch_size) const {
  std::optional<std::size_t> size;
  if (regime_.kind == RegimeKind::size_robust) {
    Rng rng(derive_seed(seed_, Stream::training, step), Stream::resize, 2);
    size = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(regime_.m_lo),
                                                    static_cast<std::int64_t>(regime_.m_hi)));
  }
  std::vector<SamplePlan> plans;
  plans.reserve(batch_size);
  for (std::size_t i = 0; i < batch_size; ++i)
    plans.push_back(plan_for(Stream::training, step * batch_size + i, size));
  return plans;
}

std::vector<SamplePlan> ChannelSource::holdout_plans(std::size_t count) const {
  std::vector<SamplePlan> plans;
  plans.reserve(count);
  for (std::size_t i = 0; i < count; ++i) plans.push_back(plan_for(Stream::holdout, i, {}));
  return plans;
}

std::vector<ChannelMatrix> ChannelSource::materialize(std::span<const SamplePlan> plans) const {
  std::vector<ChannelMatrix> out;
  out.reserve(plans.size());
  for (const auto& p : plans) out.push_back(materialize(p));
  return out;
}

void TrainConfig::validate() const {
  require(batch_size >= 1, "batch_size must be at least 1");
  require(learning_rate >= 0.0 && std::isfinite(learning_rate), "learning_rate must be nonnegative");
  require(steps_per_epoch >= 1, "steps_per_epoch must be at least 1");
  require(layers >= 1, "layers must be at least 1");
  require(hidden >= 1, "hidden must be at least 1");
  require(p_max > 0.0, "p_max must be positive");
  require(grad_clip >= 0.0, "grad_clip must be nonnegative");
  require(holdout_size >= 1, "holdout_size must be at least 1");
}

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(n, 1));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (std::size_t t = 0; t < threads; ++t)
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < n; i += threads) fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    });
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

ad::Var empirical_loss(ad::Tape& tape, std::span<const ChannelMatrix> batch,
                       const ModelVars& theta, double p_max) {
  require(!batch.empty(), "empirical_loss: empty batch");
  ad::Var total = tape.constant(0.0);
  for (const ChannelMatrix& ch : batch) total = total + sum_rate(tape, ch, forward(tape, ch, theta, p_max));
  return total * (-1.0 / static_cast<double>(batch.size()));
}

LossGrad loss_and_grad(std::span<const ChannelMatrix> batch, const ModelParams& theta,
                       std::size_t threads) {
  require(!batch.empty(), "loss_and_grad: empty batch");
  const std::size_t n = batch.size();
  std::vector<double> rates(n);
  std::vector<std::vector<double>> grads(n);
  parallel_for(n, threads, [&](std::size_t i) {
    ad::Tape tape;
    const ModelVars vars = model_leaves(tape, theta, true);
    const ad::Var rate = sum_rate(tape, batch[i], forward(tape, batch[i], vars, theta.p_max));
    tape.backward(rate);
    rates[i] = rate.item();
    grads[i] = gather_grad(tape, vars);
  });
  LossGrad out;
  out.grad.assign(theta.parameter_count(), 0.0);
  const double scale = -1.0 / static_cast<double>(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    total += rates[i];
    for (std::size_t k = 0; k < out.grad.size(); ++k) out.grad[k] += grads[i][k];
  }
  for (double& g : out.grad) g *= scale;
  out.loss = total * scale;
  return out;
}

OptimizerState make_optimizer(const TrainConfig& config, std::size_t parameter_count) {
  OptimizerState s;
  s.kind = config.optimizer;
  if (s.kind == OptimizerKind::adam) {
    s.m.assign(parameter_count, 0.0);
    s.v.assign(parameter_count, 0.0);
  }
  return s;
}

void optimizer_update(OptimizerState& state, const TrainConfig& config, std::span<double> params,
                      std::span<const double> grad) {
  require(params.size() == grad.size(), "optimizer_update: size mismatch");
  const double lr = config.learning_rate;
  if (state.kind == OptimizerKind::sgd) {
    for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr * grad[i];
    ++state.t;
    return;
  }
  require(state.m.size() == params.size(), "optimizer_update: adam state has the wrong size");
  ++state.t;
  const double b1 = config.adam_beta1, b2 = config.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = b1 * state.m[i] + (1.0 - b1) * grad[i];
    state.v[i] = b2 * state.v[i] + (1.0 - b2) * grad[i] * grad[i];
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + config.adam_eps);
  }
}

StepResult train_step(std::span<const ChannelMatrix> batch, ModelParams& theta,
                      OptimizerState& state, const TrainConfig& config,
                      const std::string& batch_tag) {
  LossGrad lg = loss_and_grad(batch, theta, config.threads);
  double norm_sq = 0.0;
  for (double g : lg.grad) norm_sq += g * g;
  const double norm = std::sqrt(norm_sq);
  if (!std::isfinite(lg.loss) || !std::isfinite(norm)) {
    std::ostringstream msg;
    msg << "non-finite " << (std::isfinite(lg.loss) ? "gradient" : "loss") << " (loss "
        << lg.loss << ", grad norm " << norm << ")";
    if (!batch_tag.empty()) msg << " on batch " << batch_tag;
    if (!config.diagnostics_dir.empty()) {
      const auto path = config.diagnostics_dir / "abort_params.txt";
      try {
        save_params(path, theta);
        msg << "; parameters dumped to " << path.string();
      } catch (const Error&) {
        msg << "; parameter dump to " << path.string() << " failed";
      }
    }
    fail(ErrorCode::non_finite, msg.str());
  }
  if (config.grad_clip > 0.0 && norm > config.grad_clip)
    for (double& g : lg.grad) g *= config.grad_clip / norm;
  std::vector<double> flat = theta.flatten();
  optimizer_update(state, config, flat, lg.grad);
  theta.assign(flat);
  return {lg.loss, norm};
}

EvalSummary summarize(std::vector<double> values, std::vector<double> times_s) {
  require(!values.empty(), "summarize: no samples");
  EvalSummary s;
  s.count = values.size();
  s.values = values;
  s.times_s = std::move(times_s);
  const double n = static_cast<double>(values.size());
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double var = 0.0;
  for (double x : values) var += (x - s.mean) * (x - s.mean);
  s.stddev = std::sqrt(var / n);
  std::sort(values.begin(), values.end());
  auto quantile = [&](double q) {
    const double pos = q * (n - 1.0);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
  };
  s.min = values.front();
  s.max = values.back();
  s.q1 = quantile(0.25);
  s.median = quantile(0.5);
  s.q3 = quantile(0.75);
  if (!s.times_s.empty())
    s.mean_time_s = std::accumulate(s.times_s.begin(), s.times_s.end(), 0.0) /
                    static_cast<double>(s.times_s.size());
  return s;
}

EvalSummary evaluate(const ModelParams& theta, std::span<const ChannelMatrix> dataset) {
  require(!dataset.empty(), "evaluate: empty dataset");
  std::vector<double> values, times;
  values.reserve(dataset.size());
  times.reserve(dataset.size());
  for (const ChannelMatrix& ch : dataset) {
    const auto t0 = std::chrono::steady_clock::now();
    const Vector p = uwmmse_power(ch, theta);
    const auto t1 = std::chrono::steady_clock::now();
    values.push_back(sum_rate(ch, p));
    times.push_back(std::chrono::duration<double>(t1 - t0).count());
  }
  return summarize(std::move(values), std::move(times));
}

TrainResult train(const TrainConfig& config, const ChannelSource& source,
                  std::optional<ModelParams> initial, const TrainHooks& hooks) {
  config.validate();
  ModelParams theta = initial ? std::move(*initial)
                              : init_model(config.layers, config.p_max, source.sigma(),
                                           derive_seed(config.seed, Stream::init));
  theta.validate();
  const auto holdout_plans = source.holdout_plans(config.holdout_size);
  const auto holdout = source.materialize(holdout_plans);

  TrainResult result{theta, theta, {}};
  double best = evaluate(theta, holdout).mean;
  result.log.initial_holdout_mean = best;

  OptimizerState state = make_optimizer(config, theta.parameter_count());
  std::uint64_t step = hooks.first_step;
  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    for (std::size_t s = 0; s < config.steps_per_epoch; ++s, ++step) {
      const auto t0 = std::chrono::steady_clock::now();
      const auto plans = source.batch_plans(step, config.batch_size);
      const auto batch = source.materialize(plans);
      const StepResult r = train_step(batch, theta, state, config,
                                      "step " + std::to_string(step) + " (first sample seed " +
                                          std::to_string(plans.front().seed) + ")");
      const double seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      result.log.step_loss.push_back(r.loss);
      result.log.step_seconds.push_back(seconds);
      if (hooks.on_step) hooks.on_step(step, r.loss, seconds);
    }
    const double mean = evaluate(theta, holdout).mean;
    result.log.epoch_holdout_mean.push_back(mean);
    if (hooks.on_epoch) hooks.on_epoch(epoch, mean);
    if (mean > best) {
      best = mean;
      result.best = theta;
      result.log.best_epoch = epoch;
    }
  }
  result.last = std::move(theta);
  return result;
}

}  // namespace uwmmse
