#include "uwmmse/uwmmse.h"

#include <cstdio>
#include <cstring>
#include <algorithm>
#include <exception>
#include <memory>
#include <new>
#include <sstream>
#include <string>
#include <vector>

#include "uwmmse/experiment.hpp"

struct uwm_config {
  uwmmse::exp::ExperimentConfig value;
};
struct uwm_channel {
  uwmmse::ChannelMatrix value;
};
struct uwm_model {
  uwmmse::ModelParams value;
};
struct uwm_report {
  std::vector<std::string> lines;
  bool all_passed = true;
};

namespace {

using namespace uwmmse;
namespace fs = std::filesystem;

thread_local std::string g_last_error;

uwm_status status_of(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return UWM_INVALID_ARGUMENT;
    case ErrorCode::degenerate_geometry: return UWM_DEGENERATE_GEOMETRY;
    case ErrorCode::unsupported_size: return UWM_UNSUPPORTED_SIZE;
    case ErrorCode::numerical_degeneracy: return UWM_NUMERICAL_DEGENERACY;
    case ErrorCode::domain_error: return UWM_DOMAIN_ERROR;
    case ErrorCode::non_finite: return UWM_NON_FINITE;
    case ErrorCode::parse_error: return UWM_PARSE_ERROR;
    case ErrorCode::io_error: return UWM_IO_ERROR;
    case ErrorCode::config_error: return UWM_CONFIG_ERROR;
  }
  return UWM_INTERNAL_ERROR;
}

uwm_status set_error(uwm_status status, std::string message) {
  g_last_error = std::move(message);
  return status;
}

// Runs fn, translating exceptions into status codes at the boundary.
template <class F>
uwm_status guarded(F&& fn) {
  try {
    fn();
    return UWM_OK;
  } catch (const Error& e) {
    return set_error(status_of(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return set_error(UWM_INTERNAL_ERROR, "out of memory");
  } catch (const std::exception& e) {
    return set_error(UWM_INTERNAL_ERROR, e.what());
  } catch (...) {
    return set_error(UWM_INTERNAL_ERROR, "unknown exception");
  }
}

void need(const void* p, const char* what) {
  if (!p) fail(ErrorCode::invalid_argument, std::string(what) + " must not be NULL");
}

void need_length(std::size_t got, std::size_t want, const char* what) {
  if (got != want)
    fail(ErrorCode::invalid_argument, std::string(what) + " has length " + std::to_string(got) +
                                          ", expected " + std::to_string(want));
}

void copy_out(const Vector& p, double* out) { std::copy(p.begin(), p.end(), out); }

std::string str_or_empty(const char* s) { return s ? std::string(s) : std::string(); }

std::vector<exp::Method> methods_or(const char* methods, std::vector<exp::Method> fallback) {
  const std::string s = str_or_empty(methods);
  return s.empty() ? fallback : exp::parse_methods(s);
}

exp::CheckpointMap parse_checkpoints(const char* text) {
  exp::CheckpointMap map;
  std::istringstream in(str_or_empty(text));
  for (std::string item; std::getline(in, item, ',');) {
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos) {
      map[exp::Method::uwmmse] = item;
    } else {
      const exp::Method m = exp::parse_method(item.substr(0, eq));
      if (!exp::needs_checkpoint(m))
        fail(ErrorCode::invalid_argument, std::string("method ") + exp::method_name(m) + " takes no checkpoint");
      map[m] = item.substr(eq + 1);
    }
  }
  return map;
}

std::string fmt(const char* spec, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, x);
  return buf;
}

void describe(const exp::ExperimentResult& result, uwm_report& report) {
  report.lines.push_back("method M d count mean std median mean_time_ms");
  for (const auto& row : result.rows) {
    const auto& s = row.summary;
    report.lines.push_back(std::string(exp::method_name(row.method)) + " " + std::to_string(row.M) +
                           " " + fmt("%g", row.density) + " " + std::to_string(s.count) + " " +
                           fmt("%.4f", s.mean) + " " + fmt("%.4f", s.stddev) + " " +
                           fmt("%.4f", s.median) + " " + fmt("%.4f", s.mean_time_s * 1e3));
  }
  for (const auto& check : result.checks) {
    report.lines.push_back(check);
    if (check.rfind("PASS", 0) != 0) report.all_passed = false;
  }
}

template <class F>
uwm_status with_report(uwm_report** out, F&& fill) {
  if (!out) return set_error(UWM_INVALID_ARGUMENT, "report output must not be NULL");
  *out = nullptr;
  auto report = std::make_unique<uwm_report>();
  const uwm_status st = guarded([&] { fill(*report); });
  if (st == UWM_OK) *out = report.release();
  return st;
}

}  // namespace

extern "C" {

const char* uwm_status_name(uwm_status status) {
  switch (status) {
    case UWM_OK: return "ok";
    case UWM_INVALID_ARGUMENT: return "invalid-argument";
    case UWM_DEGENERATE_GEOMETRY: return "degenerate-geometry";
    case UWM_UNSUPPORTED_SIZE: return "unsupported-size";
    case UWM_NUMERICAL_DEGENERACY: return "numerical-degeneracy";
    case UWM_DOMAIN_ERROR: return "domain-error";
    case UWM_NON_FINITE: return "non-finite";
    case UWM_PARSE_ERROR: return "parse-error";
    case UWM_IO_ERROR: return "io-error";
    case UWM_CONFIG_ERROR: return "config-error";
    case UWM_INTERNAL_ERROR: return "internal-error";
  }
  return "unknown";
}

const char* uwm_last_error(void) { return g_last_error.c_str(); }

uwm_status uwm_config_new(uwm_config** out) {
  return guarded([&] {
    need(out, "out");
    *out = new uwm_config{};
  });
}

uwm_status uwm_config_load(const char* path, uwm_config** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = nullptr;
    *out = new uwm_config{exp::load_config(path)};
  });
}

uwm_status uwm_config_apply_json(uwm_config* config, const char* json) {
  return guarded([&] {
    need(config, "config");
    need(json, "json");
    exp::ExperimentConfig updated = config->value;
    exp::apply_overrides(updated, json);
    config->value = std::move(updated);
  });
}

uwm_status uwm_config_set_seed(uwm_config* config, uint64_t seed) {
  return guarded([&] {
    need(config, "config");
    config->value.seed = seed;
  });
}

uwm_status uwm_config_to_json(const uwm_config* config, char* buf, size_t capacity, size_t* needed) {
  return guarded([&] {
    need(config, "config");
    const std::string text = exp::config_to_json(config->value);
    if (needed) *needed = text.size() + 1;
    if (!buf) return;
    if (capacity < text.size() + 1)
      fail(ErrorCode::invalid_argument, "buffer too small: need " + std::to_string(text.size() + 1) + " bytes");
    std::memcpy(buf, text.c_str(), text.size() + 1);
  });
}

void uwm_config_free(uwm_config* config) { delete config; }

uwm_status uwm_channel_generate(size_t m, double sigma, uint64_t topology_seed, uint64_t fading_seed,
                                uwm_channel** out) {
  return guarded([&] {
    need(out, "out");
    *out = nullptr;
    *out = new uwm_channel{sample_channel(gen_topology(m, topology_seed), sigma, fading_seed)};
  });
}

uwm_status uwm_channel_from_matrix(size_t m, const double* h, double sigma, uwm_channel** out) {
  return guarded([&] {
    need(h, "h");
    need(out, "out");
    *out = nullptr;
    if (m == 0) fail(ErrorCode::invalid_argument, "m must be positive");
    ChannelMatrix ch{Matrix(m, m, std::vector<double>(h, h + m * m)), sigma};
    ch.validate();
    *out = new uwm_channel{std::move(ch)};
  });
}

size_t uwm_channel_size(const uwm_channel* channel) { return channel ? channel->value.size() : 0; }

uwm_status uwm_channel_copy_matrix(const uwm_channel* channel, double* out, size_t capacity) {
  return guarded([&] {
    need(channel, "channel");
    need(out, "out");
    const auto& data = channel->value.h.data();
    need_length(capacity, data.size(), "output buffer");
    std::copy(data.begin(), data.end(), out);
  });
}

void uwm_channel_free(uwm_channel* channel) { delete channel; }

uwm_status uwm_sum_rate(const uwm_channel* channel, const double* p, size_t m, double* out) {
  return guarded([&] {
    need(channel, "channel");
    need(p, "p");
    need(out, "out");
    need_length(m, channel->value.size(), "p");
    *out = sum_rate(channel->value, std::span<const double>(p, m));
  });
}

uwm_status uwm_wmmse(const uwm_channel* channel, double p_max, size_t max_iter, double tol,
                     double* p_out, size_t m, size_t* iterations) {
  return guarded([&] {
    need(channel, "channel");
    need(p_out, "p_out");
    need_length(m, channel->value.size(), "p_out");
    const auto [p, trace] = wmmse(channel->value, p_max, max_iter, tol);
    copy_out(p.p(), p_out);
    if (iterations) *iterations = trace.iterations_run;
  });
}

uwm_status uwm_truncated_wmmse(const uwm_channel* channel, double p_max, size_t k, double* p_out,
                               size_t m) {
  return guarded([&] {
    need(channel, "channel");
    need(p_out, "p_out");
    need_length(m, channel->value.size(), "p_out");
    copy_out(truncated_wmmse_power(channel->value, p_max, k), p_out);
  });
}

uwm_status uwm_model_init(size_t layers, double p_max, double sigma, uint64_t seed, uwm_model** out) {
  return guarded([&] {
    need(out, "out");
    *out = nullptr;
    *out = new uwm_model{init_model(layers, p_max, sigma, seed)};
  });
}

uwm_status uwm_model_load(const char* path, uwm_model** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = nullptr;
    *out = new uwm_model{load_params(fs::path(path))};
  });
}

uwm_status uwm_model_save(const uwm_model* model, const char* path) {
  return guarded([&] {
    need(model, "model");
    need(path, "path");
    save_params(fs::path(path), model->value);
  });
}

size_t uwm_model_layers(const uwm_model* model) { return model ? model->value.depth() : 0; }

size_t uwm_model_parameter_count(const uwm_model* model) {
  return model ? model->value.parameter_count() : 0;
}

uwm_status uwm_model_power(const uwm_model* model, const uwm_channel* channel, double* p_out, size_t m) {
  return guarded([&] {
    need(model, "model");
    need(channel, "channel");
    need(p_out, "p_out");
    need_length(m, channel->value.size(), "p_out");
    copy_out(uwmmse_power(channel->value, model->value), p_out);
  });
}

void uwm_model_free(uwm_model* model) { delete model; }

size_t uwm_report_line_count(const uwm_report* report) { return report ? report->lines.size() : 0; }

const char* uwm_report_line(const uwm_report* report, size_t index) {
  if (!report || index >= report->lines.size()) return nullptr;
  return report->lines[index].c_str();
}

int uwm_report_all_passed(const uwm_report* report) { return report && report->all_passed ? 1 : 0; }

void uwm_report_free(uwm_report* report) { delete report; }

uwm_status uwm_cmd_generate(const uwm_config* config, const char* out_dir, uwm_report** out) {
  return with_report(out, [&](uwm_report& r) {
    need(config, "config");
    need(out_dir, "out_dir");
    const auto ds = exp::cmd_generate(config->value, out_dir);
    r.lines.push_back("generated " + std::to_string(ds.samples.size()) + " samples (M=" +
                      std::to_string(config->value.M) + ", sigma=" + fmt("%g", config->value.sigma) +
                      ") in " + out_dir);
  });
}

uwm_status uwm_cmd_train(const uwm_config* config, const char* out_dir, const char* resume_checkpoint,
                         uwm_report** out) {
  return with_report(out, [&](uwm_report& r) {
    need(config, "config");
    need(out_dir, "out_dir");
    std::optional<fs::path> resume;
    if (resume_checkpoint && *resume_checkpoint) resume = fs::path(resume_checkpoint);
    const auto outcome = exp::cmd_train(config->value, out_dir, resume);
    const auto& log = outcome.log;
    double best = log.initial_holdout_mean;
    for (double x : log.epoch_holdout_mean) best = std::max(best, x);
    r.lines.push_back("steps " + std::to_string(log.step_loss.size()) + ", regime " +
                      regime_name(config->value.regime));
    r.lines.push_back("holdout mean sum-rate: initial " + fmt("%.4f", log.initial_holdout_mean) +
                      ", best " + fmt("%.4f", best) + " (epoch " + std::to_string(log.best_epoch) + ")");
    r.lines.push_back("checkpoint " + outcome.checkpoint.string());
  });
}

uwm_status uwm_cmd_eval(const uwm_config* config, const char* dataset_dir, const char* methods,
                        const char* checkpoints, const char* out_dir, uwm_report** out) {
  return with_report(out, [&](uwm_report& r) {
    need(config, "config");
    need(dataset_dir, "dataset_dir");
    need(out_dir, "out_dir");
    using exp::Method;
    const auto list = methods_or(methods, {Method::wmmse, Method::tr_wmmse, Method::uwmmse});
    describe(exp::cmd_eval(config->value, parse_checkpoints(checkpoints), dataset_dir, list, out_dir), r);
  });
}

uwm_status uwm_cmd_sweep_density(const uwm_config* config, const char* methods, const char* checkpoints,
                                 const char* out_dir, uwm_report** out) {
  return with_report(out, [&](uwm_report& r) {
    need(config, "config");
    need(out_dir, "out_dir");
    using exp::Method;
    const auto list = methods_or(methods, {Method::wmmse, Method::tr_wmmse, Method::uwmmse, Method::ro_uwmmse});
    describe(exp::cmd_sweep_density(config->value, parse_checkpoints(checkpoints), list, out_dir), r);
  });
}

uwm_status uwm_cmd_sweep_size(const uwm_config* config, const char* methods, const char* checkpoints,
                              const char* out_dir, uwm_report** out) {
  return with_report(out, [&](uwm_report& r) {
    need(config, "config");
    need(out_dir, "out_dir");
    using exp::Method;
    const auto list = methods_or(methods, {Method::wmmse, Method::tr_wmmse, Method::uwmmse, Method::ro_uwmmse});
    describe(exp::cmd_sweep_size(config->value, parse_checkpoints(checkpoints), list, out_dir), r);
  });
}

uwm_status uwm_cmd_bench_time(const uwm_config* config, const char* checkpoint, const char* dataset_dir,
                              const char* out_dir, uwm_report** out) {
  return with_report(out, [&](uwm_report& r) {
    need(config, "config");
    need(checkpoint, "checkpoint");
    need(dataset_dir, "dataset_dir");
    need(out_dir, "out_dir");
    const auto rows = exp::cmd_bench_time(config->value, checkpoint, dataset_dir, out_dir);
    r.lines.push_back("method iterations median_ms mean_ms ratio_to_wmmse");
    for (const auto& row : rows)
      r.lines.push_back(std::string(exp::method_name(row.method)) + " " + std::to_string(row.iterations) +
                        " " + fmt("%.5f", row.median_per_sample_s * 1e3) + " " +
                        fmt("%.5f", row.mean_per_sample_s * 1e3) + " " + fmt("%.4f", row.ratio_to_wmmse));
  });
}

uwm_status uwm_cmd_selftest(uint64_t seed, uwm_report** out) {
  return with_report(out, [&](uwm_report& r) {
    for (const auto& line : exp::cmd_selftest(seed)) {
      r.lines.push_back(std::string(line.passed ? "PASS " : "FAIL ") + line.name + ": " + line.detail);
      r.all_passed = r.all_passed && line.passed;
    }
  });
}

}  // extern "C"
