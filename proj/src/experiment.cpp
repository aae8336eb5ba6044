#include "uwmmse/experiment.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iterator>
#include <sstream>

#include <json.hpp>

#include "text_io.hpp"
#include "uwmmse/checks.hpp"
#include "uwmmse/wmmse.hpp"

namespace uwmmse::exp {

namespace fs = std::filesystem;
using json = nlohmann::json;
using text_io::format_double;

namespace {

// Offset separating sweep sample seeds from dataset sample seeds.
constexpr std::uint64_t kSweepSeedBase = std::uint64_t{1} << 32;

[[noreturn]] void config_fail(const std::string& key, const std::string& what) {
  fail(ErrorCode::config_error, "config key '" + key + "': " + what);
}

void read_value(const json& v, const std::string& key, std::size_t& out) {
  if (!v.is_number_unsigned()) config_fail(key, "expected a nonnegative integer");
  out = v.get<std::size_t>();
}

void read_value(const json& v, const std::string& key, double& out) {
  if (!v.is_number()) config_fail(key, "expected a number");
  out = v.get<double>();
}

void read_value(const json& v, const std::string& key, OptimizerKind& out) {
  if (!v.is_string()) config_fail(key, "expected \"adam\" or \"sgd\"");
  const auto s = v.get<std::string>();
  if (s == "adam") out = OptimizerKind::adam;
  else if (s == "sgd") out = OptimizerKind::sgd;
  else config_fail(key, "unknown optimizer '" + s + "'");
}

void read_value(const json& v, const std::string& key, RegimeKind& out) {
  if (!v.is_string()) config_fail(key, "expected a regime name");
  try {
    out = parse_regime(v.get<std::string>());
  } catch (const Error& e) {
    config_fail(key, e.what());
  }
}

template <class T>
void read_value(const json& v, const std::string& key, std::optional<T>& out) {
  if (v.is_null()) {
    out.reset();
    return;
  }
  T x{};
  read_value(v, key, x);
  out = x;
}

template <class T>
void read_value(const json& v, const std::string& key, std::vector<T>& out) {
  if (!v.is_array()) config_fail(key, "expected an array");
  std::vector<T> values;
  for (const auto& item : v) {
    T x{};
    read_value(item, key, x);
    values.push_back(x);
  }
  out = std::move(values);
}

json write_value(std::size_t x) { return x; }
json write_value(double x) { return x; }
json write_value(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "sgd"; }
json write_value(RegimeKind k) { return regime_name(k); }
template <class T>
json write_value(const std::optional<T>& x) {
  return x ? write_value(*x) : json(nullptr);
}
template <class T>
json write_value(const std::vector<T>& xs) {
  json a = json::array();
  for (const auto& x : xs) a.push_back(write_value(x));
  return a;
}

struct Field {
  const char* name;
  std::function<void(ExperimentConfig&, const json&)> read;
  std::function<json(const ExperimentConfig&)> write;
};

template <class T>
Field field(const char* name, T ExperimentConfig::*member) {
  return {name,
          [name, member](ExperimentConfig& c, const json& v) { read_value(v, name, c.*member); },
          [member](const ExperimentConfig& c) { return write_value(c.*member); }};
}

const std::vector<Field>& fields() {
  using C = ExperimentConfig;
  static const std::vector<Field> table{
      field("M", &C::M),
      field("sigma", &C::sigma),
      field("p_max", &C::p_max),
      field("seed", &C::seed),
      field("num_samples", &C::num_samples),
      field("samples_per_file", &C::samples_per_file),
      field("density", &C::density),
      field("size", &C::size),
      field("layers", &C::layers),
      field("hidden", &C::hidden),
      field("batch_size", &C::batch_size),
      field("learning_rate", &C::learning_rate),
      field("steps_per_epoch", &C::steps_per_epoch),
      field("max_epochs", &C::max_epochs),
      field("optimizer", &C::optimizer),
      field("grad_clip", &C::grad_clip),
      field("holdout_size", &C::holdout_size),
      field("regime", &C::regime),
      field("d_lo", &C::d_lo),
      field("d_hi", &C::d_hi),
      field("m_lo", &C::m_lo),
      field("m_hi", &C::m_hi),
      field("threads", &C::threads),
      field("max_iter", &C::max_iter),
      field("tol", &C::tol),
      field("tr_iterations", &C::tr_iterations),
      field("d_list", &C::d_list),
      field("n_list", &C::n_list),
      field("samples_per_point", &C::samples_per_point),
      field("bench_batches", &C::bench_batches),
      field("bench_batch_size", &C::bench_batch_size),
  };
  return table;
}

json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::parse_error, what + ": " + e.what());
  }
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::io_error, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::io_error, "cannot open " + path.string() + " for writing");
  out << content;
  if (!out) fail(ErrorCode::io_error, "failed writing " + path.string());
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorCode::io_error, "cannot create directory " + dir.string() + ": " + ec.message());
}

json read_json_file(const fs::path& path) { return parse_json(read_file(path), path.string()); }

const json& member(const json& obj, const char* key, const fs::path& file) {
  if (!obj.is_object() || !obj.contains(key))
    fail(ErrorCode::parse_error, file.string() + ": missing field '" + key + "'");
  return obj.at(key);
}

void check_schema(const json& doc, const char* schema, const fs::path& file) {
  if (member(doc, "schema", file) != schema)
    fail(ErrorCode::parse_error, file.string() + ": not a " + std::string(schema) + " file");
  const json& version = member(doc, "schema_version", file);
  if (version != kSchemaVersion)
    fail(ErrorCode::parse_error, file.string() + ": schema version " + version.dump() +
                                     " is not supported (expected " +
                                     std::to_string(kSchemaVersion) + ")");
}

json topology_to_json(const Topology& top) {
  json tx = json::array(), rx = json::array();
  for (const Point& p : top.tx) tx.push_back({p.x, p.y});
  for (const Point& p : top.rx) rx.push_back({p.x, p.y});
  return {{"extent", top.extent}, {"tx", tx}, {"rx", rx}};
}

Topology topology_from_json(const json& j, const fs::path& file) {
  Topology top;
  top.extent = member(j, "extent", file).get<double>();
  for (const auto& p : member(j, "tx", file)) top.tx.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
  for (const auto& p : member(j, "rx", file)) top.rx.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
  if (top.tx.size() != top.rx.size())
    fail(ErrorCode::parse_error, file.string() + ": tx and rx counts differ");
  return top;
}

std::uint64_t dataset_seed(const ExperimentConfig& config, std::size_t index) {
  return derive_seed(config.seed, Stream::evaluation, index);
}

std::uint64_t sweep_seed(const ExperimentConfig& config, std::size_t index) {
  return derive_seed(config.seed, Stream::evaluation, kSweepSeedBase + index);
}

class CsvFile {
 public:
  CsvFile(const fs::path& path, const std::string& header) : path_(path), out_(path) {
    if (!out_) fail(ErrorCode::io_error, "cannot open " + path.string() + " for writing");
    out_ << header << '\n';
  }
  void row(const std::string& line) { out_ << line << '\n'; }
  void close() {
    out_.close();
    if (!out_) fail(ErrorCode::io_error, "failed writing " + path_.string());
  }

 private:
  fs::path path_;
  std::ofstream out_;
};

const char* kSamplesHeader =
    "schema_version,experiment,method,M,d,sample_index,sample_seed,sum_rate,inference_time_s";
const char* kSummaryHeader =
    "schema_version,experiment,method,M,d,count,mean,std,min,q1,median,q3,max,mean_time_s";
const char* kTimingHeader =
    "schema_version,experiment,method,iterations,M,batches,batch_size,median_per_sample_s,"
    "mean_per_sample_s,ratio_to_wmmse";
const char* kTrainLogHeader = "schema_version,kind,step,epoch,loss,holdout_mean,seconds";

std::vector<fs::path> write_result_csvs(const ExperimentResult& result, const fs::path& out_dir) {
  const fs::path samples_path = out_dir / (result.experiment + "_samples.csv");
  const fs::path summary_path = out_dir / (result.experiment + "_summary.csv");
  CsvFile samples(samples_path, kSamplesHeader);
  CsvFile summary(summary_path, kSummaryHeader);
  for (const MethodSummary& row : result.rows) {
    const std::string prefix = std::to_string(kSchemaVersion) + "," + result.experiment + "," +
                               method_name(row.method) + "," + std::to_string(row.M) + "," +
                               format_double(row.density) + ",";
    const EvalSummary& s = row.summary;
    for (std::size_t i = 0; i < s.values.size(); ++i)
      samples.row(prefix + std::to_string(row.sample_index[i]) + "," +
                  std::to_string(row.sample_seed[i]) + "," + format_double(s.values[i]) + "," +
                  format_double(s.times_s[i]));
    summary.row(prefix + std::to_string(s.count) + "," + format_double(s.mean) + "," +
                format_double(s.stddev) + "," + format_double(s.min) + "," + format_double(s.q1) +
                "," + format_double(s.median) + "," + format_double(s.q3) + "," +
                format_double(s.max) + "," + format_double(s.mean_time_s));
  }
  samples.close();
  summary.close();
  return {samples_path, summary_path};
}

json checkpoints_json(const CheckpointMap& checkpoints) {
  json j = json::object();
  for (const auto& [method, path] : checkpoints)
    j[method_name(method)] = {{"path", path.string()}, {"git_blob_sha1", git_blob_hash(path)}};
  return j;
}

void write_manifest(const fs::path& out_dir, const std::string& experiment,
                    const ExperimentConfig& config, json extra) {
  json doc = {{"schema", "uwmmse-run"},
              {"schema_version", kSchemaVersion},
              {"experiment", experiment},
              {"config", json::parse(config_to_json(config))}};
  for (auto& [k, v] : extra.items()) doc[k] = std::move(v);
  write_file(out_dir / (experiment + "_manifest.json"), doc.dump(2) + "\n");
}

json outputs_json(const std::vector<fs::path>& files) {
  json a = json::array();
  for (const auto& f : files) a.push_back(f.filename().string());
  return a;
}

std::map<Method, ModelParams> load_models(const ExperimentConfig& config,
                                          const CheckpointMap& checkpoints,
                                          const std::vector<Method>& methods) {
  std::map<Method, ModelParams> models;
  for (Method m : methods) {
    if (!needs_checkpoint(m)) continue;
    const auto it = checkpoints.find(m);
    if (it == checkpoints.end())
      fail(ErrorCode::config_error, std::string("method ") + method_name(m) +
                                        " needs a checkpoint (--checkpoint " + method_name(m) +
                                        "=PATH)");
    ModelParams theta = load_params(it->second);
    if (theta.p_max != config.p_max)
      fail(ErrorCode::config_error, it->second.string() + ": checkpoint p_max " +
                                        format_double(theta.p_max) + " differs from config p_max " +
                                        format_double(config.p_max));
    models.emplace(m, std::move(theta));
  }
  return models;
}

CheckpointMap used_checkpoints(const CheckpointMap& checkpoints, const std::vector<Method>& methods) {
  CheckpointMap used;
  for (Method m : methods)
    if (auto it = checkpoints.find(m); it != checkpoints.end()) used.insert(*it);
  return used;
}

MethodSummary run_method(Method method, const ExperimentConfig& config, const ModelParams* model,
                         const std::vector<DatasetSample>& samples) {
  std::vector<double> values, times;
  values.reserve(samples.size());
  times.reserve(samples.size());
  MethodSummary row{method, samples.empty() ? 0 : samples.front().channel.size(),
                    samples.empty() ? 1.0 : samples.front().density, {}, {}, {}};
  for (const DatasetSample& s : samples) {
    const auto t0 = std::chrono::steady_clock::now();
    const Vector p = allocate(method, s.channel, config, model);
    times.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    values.push_back(sum_rate(s.channel, p));
    row.sample_index.push_back(s.index);
    row.sample_seed.push_back(s.seed);
  }
  row.summary = summarize(std::move(values), std::move(times));
  return row;
}

std::string ordering_check(const std::string& label, double lhs, double rhs) {
  return std::string(lhs >= rhs ? "PASS " : "FAIL ") + label + " (" + format_double(lhs) +
         " vs " + format_double(rhs) + ")";
}

void require_nonempty_samples(std::size_t n) {
  if (n == 0) fail(ErrorCode::invalid_argument, "samples_per_point must be positive");
}

}  // namespace

// ---------------------------------------------------------------------------
// methods and config

const char* method_name(Method m) noexcept {
  switch (m) {
    case Method::wmmse: return "wmmse";
    case Method::tr_wmmse: return "tr_wmmse";
    case Method::uwmmse: return "uwmmse";
    case Method::ro_uwmmse: return "ro_uwmmse";
  }
  return "?";
}

Method parse_method(const std::string& name) {
  for (Method m : {Method::wmmse, Method::tr_wmmse, Method::uwmmse, Method::ro_uwmmse})
    if (name == method_name(m)) return m;
  fail(ErrorCode::invalid_argument,
       "unknown method '" + name + "' (expected wmmse, tr_wmmse, uwmmse or ro_uwmmse)");
}

std::vector<Method> parse_methods(const std::string& comma_list) {
  std::vector<Method> methods;
  std::istringstream in(comma_list);
  for (std::string item; std::getline(in, item, ',');) {
    if (item.empty()) continue;
    const Method m = parse_method(item);
    if (std::find(methods.begin(), methods.end(), m) == methods.end()) methods.push_back(m);
  }
  if (methods.empty()) fail(ErrorCode::invalid_argument, "method list is empty");
  return methods;
}

bool needs_checkpoint(Method m) noexcept { return m == Method::uwmmse || m == Method::ro_uwmmse; }

void ExperimentConfig::validate() const {
  auto bad = [](const char* key, const std::string& what) { config_fail(key, what); };
  if (M < 1) bad("M", "must be at least 1");
  if (!(sigma > 0.0) || !std::isfinite(sigma)) bad("sigma", "must be positive");
  if (!(p_max > 0.0) || !std::isfinite(p_max)) bad("p_max", "must be positive");
  if (samples_per_file < 1) bad("samples_per_file", "must be at least 1");
  if (density && !(*density > 0.0)) bad("density", "must be positive");
  if (size && *size < 1) bad("size", "must be at least 1");
  if (layers < 1) bad("layers", "must be at least 1");
  if (hidden < 1) bad("hidden", "must be at least 1");
  if (batch_size < 1) bad("batch_size", "must be at least 1");
  if (!(learning_rate >= 0.0)) bad("learning_rate", "must be nonnegative");
  if (!(grad_clip >= 0.0)) bad("grad_clip", "must be nonnegative");
  if (holdout_size < 1) bad("holdout_size", "must be at least 1");
  if (!(d_lo > 0.0) || !(d_lo <= d_hi)) bad("d_lo", "need 0 < d_lo <= d_hi");
  if (m_lo < 1 || m_lo > m_hi) bad("m_lo", "need 1 <= m_lo <= m_hi");
  if (threads < 1) bad("threads", "must be at least 1");
  if (max_iter < 1) bad("max_iter", "must be at least 1");
  if (!(tol >= 0.0)) bad("tol", "must be nonnegative");
  if (tr_iterations < 1) bad("tr_iterations", "must be at least 1");
  for (double d : d_list)
    if (!(d > 0.0)) bad("d_list", "densities must be positive");
  for (std::size_t n : n_list)
    if (n < 1) bad("n_list", "sizes must be at least 1");
  if (bench_batches < 1) bad("bench_batches", "must be at least 1");
  if (bench_batch_size < 1) bad("bench_batch_size", "must be at least 1");
}

TrainConfig ExperimentConfig::train_config() const {
  TrainConfig t;
  t.batch_size = batch_size;
  t.learning_rate = learning_rate;
  t.steps_per_epoch = steps_per_epoch;
  t.max_epochs = max_epochs;
  t.optimizer = optimizer;
  t.grad_clip = grad_clip;
  t.seed = seed;
  t.holdout_size = holdout_size;
  t.layers = layers;
  t.hidden = hidden;
  t.p_max = p_max;
  t.threads = threads;
  return t;
}

Regime ExperimentConfig::regime_spec() const { return {regime, d_lo, d_hi, m_lo, m_hi}; }

void apply_overrides(ExperimentConfig& config, const std::string& json_text) {
  const json doc = parse_json(json_text, "config");
  if (!doc.is_object()) fail(ErrorCode::config_error, "config must be a JSON object");
  for (const auto& [key, value] : doc.items()) {
    const auto& table = fields();
    const auto it = std::find_if(table.begin(), table.end(),
                                 [&](const Field& f) { return key == f.name; });
    if (it == table.end()) fail(ErrorCode::config_error, "unknown config key '" + key + "'");
    it->read(config, value);
  }
  config.validate();
}

ExperimentConfig parse_config(const std::string& json_text) {
  ExperimentConfig config;
  apply_overrides(config, json_text);
  return config;
}

ExperimentConfig load_config(const fs::path& path) {
  const std::string text = read_file(path);
  try {
    return parse_config(text);
  } catch (const Error& e) {
    fail(e.code(), path.string() + ": " + e.what());
  }
}

std::string config_to_json(const ExperimentConfig& config) {
  json doc = json::object();
  for (const Field& f : fields()) doc[f.name] = f.write(config);
  return doc.dump();
}

// ---------------------------------------------------------------------------
// datasets

Dataset generate_dataset(const ExperimentConfig& config) {
  config.validate();
  Dataset ds{config, config.base_topology(), {}};
  ds.samples.reserve(config.num_samples);
  for (std::size_t i = 0; i < config.num_samples; ++i) {
    const SamplePlan plan{dataset_seed(config, i), config.density, config.size};
    ds.samples.push_back({i, plan.seed, config.density.value_or(1.0),
                          make_channel(ds.topology, config.sigma, plan)});
  }
  return ds;
}

Dataset cmd_generate(const ExperimentConfig& config, const fs::path& out_dir) {
  Dataset ds = generate_dataset(config);
  ensure_dir(out_dir);
  json batches = json::array();
  for (std::size_t first = 0, file = 0; first < ds.samples.size(); first += config.samples_per_file, ++file) {
    const std::size_t count = std::min(config.samples_per_file, ds.samples.size() - first);
    char name[32];
    std::snprintf(name, sizeof name, "batch_%04zu.json", file);
    json records = json::array();
    for (std::size_t i = first; i < first + count; ++i) {
      const DatasetSample& s = ds.samples[i];
      records.push_back({{"index", s.index},
                         {"M", s.channel.size()},
                         {"sigma", s.channel.sigma},
                         {"seed", s.seed},
                         {"d", s.density},
                         {"entries", s.channel.h.data()}});
    }
    const json doc = {{"schema", "uwmmse-channel-batch"},
                      {"schema_version", kSchemaVersion},
                      {"records", std::move(records)}};
    write_file(out_dir / name, doc.dump() + "\n");
    batches.push_back({{"file", name}, {"first_index", first}, {"count", count}});
  }
  const json manifest = {{"schema", "uwmmse-dataset"},
                         {"schema_version", kSchemaVersion},
                         {"num_samples", ds.samples.size()},
                         {"config", json::parse(config_to_json(config))},
                         {"topology", topology_to_json(ds.topology)},
                         {"batches", std::move(batches)}};
  write_file(out_dir / "manifest.json", manifest.dump(2) + "\n");
  return ds;
}

Dataset load_dataset(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  const json manifest = read_json_file(manifest_path);
  check_schema(manifest, "uwmmse-dataset", manifest_path);
  Dataset ds;
  try {
    ds.config = parse_config(member(manifest, "config", manifest_path).dump());
  } catch (const Error& e) {
    fail(e.code(), manifest_path.string() + ": " + e.what());
  }
  ds.topology = topology_from_json(member(manifest, "topology", manifest_path), manifest_path);
  const std::size_t expected = member(manifest, "num_samples", manifest_path).get<std::size_t>();

  for (const json& batch : member(manifest, "batches", manifest_path)) {
    const fs::path file = dir / member(batch, "file", manifest_path).get<std::string>();
    const json doc = read_json_file(file);
    check_schema(doc, "uwmmse-channel-batch", file);
    for (const json& rec : member(doc, "records", file)) {
      DatasetSample s;
      s.index = member(rec, "index", file).get<std::size_t>();
      s.seed = member(rec, "seed", file).get<std::uint64_t>();
      s.density = member(rec, "d", file).get<double>();
      const std::size_t m = member(rec, "M", file).get<std::size_t>();
      std::vector<double> entries = member(rec, "entries", file).get<std::vector<double>>();
      if (entries.size() != m * m)
        fail(ErrorCode::parse_error, file.string() + ": record " + std::to_string(s.index) +
                                         " has " + std::to_string(entries.size()) +
                                         " entries, expected M*M = " + std::to_string(m * m));
      if (s.index != ds.samples.size())
        fail(ErrorCode::parse_error, file.string() + ": record index " + std::to_string(s.index) +
                                         " out of sequence");
      s.channel = ChannelMatrix{Matrix(m, m, std::move(entries)), member(rec, "sigma", file).get<double>()};
      s.channel.validate();
      ds.samples.push_back(std::move(s));
    }
  }
  if (ds.samples.size() != expected)
    fail(ErrorCode::parse_error, manifest_path.string() + ": lists " + std::to_string(expected) +
                                     " samples but batches hold " + std::to_string(ds.samples.size()));
  return ds;
}

std::string git_blob_hash(const fs::path& file) {
  const std::string content = read_file(file);
  std::string blob = "blob " + std::to_string(content.size());
  blob.push_back('\0');
  blob += content;
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(blob.data(), blob.size(), md, &len, EVP_sha1(), nullptr) != 1)
    fail(ErrorCode::io_error, "SHA-1 digest failed for " + file.string());
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 15]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// training

namespace {

struct LogPosition {
  std::uint64_t next_step = 0;
  std::size_t epochs_done = 0;
};

// Scans an existing train_log.csv so a resumed run continues its numbering.
LogPosition scan_train_log(const fs::path& path) {
  LogPosition pos;
  std::ifstream in(path);
  if (!in) return pos;
  std::string line;
  std::getline(in, line);
  if (line != kTrainLogHeader)
    fail(ErrorCode::parse_error, path.string() + ": unexpected header, cannot append");
  std::size_t n = 1;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::istringstream row(line);
    for (std::string c; std::getline(row, c, ',');) cols.push_back(c);
    if (cols.size() < 4) text_io::parse_fail(n, path.string() + ": short row");
    const std::uint64_t step = text_io::parse_size(cols[2], n);
    const std::size_t epoch = text_io::parse_size(cols[3], n);
    if (cols[1] == "step") pos.next_step = std::max(pos.next_step, step + 1);
    pos.epochs_done = std::max(pos.epochs_done, epoch);
  }
  return pos;
}

}  // namespace

TrainOutcome cmd_train(const ExperimentConfig& config, const fs::path& out_dir,
                       const std::optional<fs::path>& resume) {
  config.validate();
  ensure_dir(out_dir);
  TrainConfig tc = config.train_config();
  tc.diagnostics_dir = out_dir;
  const ChannelSource source(config.base_topology(), config.sigma, config.regime_spec(), config.seed);

  std::optional<ModelParams> initial;
  if (resume) {
    initial = load_params(*resume);
    if (initial->depth() != config.layers || initial->p_max != config.p_max)
      fail(ErrorCode::config_error, resume->string() +
                                        ": checkpoint layers/p_max do not match the config");
  }

  const fs::path log_path = out_dir / "train_log.csv";
  const LogPosition pos = resume ? scan_train_log(log_path) : LogPosition{};
  const bool fresh_log = !resume || !fs::exists(log_path);
  std::ofstream log(log_path, fresh_log ? std::ios::trunc : std::ios::app);
  if (!log) fail(ErrorCode::io_error, "cannot open " + log_path.string() + " for writing");
  if (fresh_log) log << kTrainLogHeader << '\n';

  const std::string v = std::to_string(kSchemaVersion);
  TrainHooks hooks;
  hooks.first_step = pos.next_step;
  hooks.on_step = [&](std::size_t step, double loss, double seconds) {
    const std::size_t epoch = pos.epochs_done + 1 + (step - pos.next_step) / tc.steps_per_epoch;
    log << v << ",step," << step << ',' << epoch << ',' << format_double(loss) << ",,"
        << format_double(seconds) << '\n';
  };
  hooks.on_epoch = [&](std::size_t epoch, double holdout) {
    const std::uint64_t last = pos.next_step + epoch * tc.steps_per_epoch - 1;
    log << v << ",epoch," << last << ',' << pos.epochs_done + epoch << ",," << format_double(holdout)
        << ",\n";
    log.flush();
  };

  TrainResult result = train(tc, source, initial, hooks);
  log.close();
  if (!log) fail(ErrorCode::io_error, "failed writing " + log_path.string());

  const std::size_t nodes = config.regime == RegimeKind::size_robust ? 0 : config.M;
  result.best.nodes = nodes;
  result.last.nodes = nodes;
  const fs::path checkpoint = out_dir / "checkpoint.txt";
  const fs::path last = out_dir / "last.txt";
  save_params(checkpoint, result.best);
  save_params(last, result.last);

  json extra = {
      {"regime", regime_name(config.regime)},
      {"resumed_from", resume ? json(resume->string()) : json(nullptr)},
      {"first_step", pos.next_step},
      {"steps", result.log.step_loss.size()},
      {"initial_holdout_mean", result.log.initial_holdout_mean},
      {"epoch_holdout_mean", result.log.epoch_holdout_mean},
      {"best_epoch", result.log.best_epoch},
      {"checkpoints", {{"best", {{"path", checkpoint.filename().string()},
                                 {"git_blob_sha1", git_blob_hash(checkpoint)}}},
                       {"last", {{"path", last.filename().string()},
                                 {"git_blob_sha1", git_blob_hash(last)}}}}},
      {"outputs", outputs_json({checkpoint, last, log_path})},
  };
  write_manifest(out_dir, "train", config, std::move(extra));
  return {std::move(result.best), std::move(result.log), checkpoint};
}

// ---------------------------------------------------------------------------
// evaluation and sweeps

const MethodSummary* ExperimentResult::find(Method m, std::size_t M, double d) const {
  for (const MethodSummary& row : rows)
    if (row.method == m && row.M == M && row.density == d) return &row;
  return nullptr;
}

Vector allocate(Method method, const ChannelMatrix& ch, const ExperimentConfig& config,
                const ModelParams* model) {
  switch (method) {
    case Method::wmmse: return wmmse_power(ch, config.p_max, config.max_iter, config.tol);
    case Method::tr_wmmse: return truncated_wmmse_power(ch, config.p_max, config.tr_iterations);
    case Method::uwmmse:
    case Method::ro_uwmmse:
      if (!model) fail(ErrorCode::invalid_argument, std::string(method_name(method)) + " needs model parameters");
      return uwmmse_power(ch, *model);
  }
  fail(ErrorCode::invalid_argument, "unknown method");
}

ExperimentResult evaluate_methods(const ExperimentConfig& config,
                                  const std::map<Method, ModelParams>& models,
                                  const std::vector<DatasetSample>& samples,
                                  const std::vector<Method>& methods) {
  if (samples.empty()) fail(ErrorCode::invalid_argument, "dataset is empty");
  const std::size_t m = samples.front().channel.size();
  for (const auto& s : samples)
    if (s.channel.size() != m)
      fail(ErrorCode::invalid_argument, "dataset mixes network sizes " + std::to_string(m) +
                                            " and " + std::to_string(s.channel.size()));
  for (const auto& [method, theta] : models)
    if (theta.nodes != 0 && theta.nodes != m)
      fail(ErrorCode::invalid_argument, std::string(method_name(method)) +
                                            " checkpoint was trained for M=" +
                                            std::to_string(theta.nodes) + " but the dataset has M=" +
                                            std::to_string(m));

  ExperimentResult result{"eval", {}, {}};
  for (Method method : methods) {
    const auto it = models.find(method);
    result.rows.push_back(run_method(method, config, it == models.end() ? nullptr : &it->second, samples));
  }
  const double d = result.rows.front().density;
  const auto* uw = result.find(Method::uwmmse, m, d);
  const auto* ro = result.find(Method::ro_uwmmse, m, d);
  const auto* tr = result.find(Method::tr_wmmse, m, d);
  if (uw && tr)
    result.checks.push_back(ordering_check("mean(uwmmse) >= mean(tr_wmmse)", uw->summary.mean, tr->summary.mean));
  if (ro && tr)
    result.checks.push_back(ordering_check("mean(ro_uwmmse) >= mean(tr_wmmse)", ro->summary.mean, tr->summary.mean));
  return result;
}

ExperimentResult cmd_eval(const ExperimentConfig& config, const CheckpointMap& checkpoints,
                          const fs::path& dataset_dir, const std::vector<Method>& methods,
                          const fs::path& out_dir) {
  config.validate();
  const Dataset ds = load_dataset(dataset_dir);
  if (ds.samples.empty())
    fail(ErrorCode::invalid_argument, "dataset " + dataset_dir.string() + " is empty");
  const auto models = load_models(config, checkpoints, methods);
  ExperimentResult result = evaluate_methods(config, models, ds.samples, methods);

  ensure_dir(out_dir);
  const auto files = write_result_csvs(result, out_dir);
  write_manifest(out_dir, result.experiment, config,
                 {{"dataset", {{"path", dataset_dir.string()},
                               {"config", json::parse(config_to_json(ds.config))},
                               {"manifest_git_blob_sha1", git_blob_hash(dataset_dir / "manifest.json")}}},
                  {"checkpoints", checkpoints_json(used_checkpoints(checkpoints, methods))},
                  {"checks", result.checks},
                  {"outputs", outputs_json(files)}});
  return result;
}

ExperimentResult sweep_density(const ExperimentConfig& config,
                               const std::map<Method, ModelParams>& models,
                               const std::vector<Method>& methods) {
  config.validate();
  if (config.d_list.empty()) fail(ErrorCode::invalid_argument, "d_list is empty");
  require_nonempty_samples(config.samples_per_point);
  const Topology base = config.base_topology();
  ExperimentResult result{"sweep_density", {}, {}};
  for (double d : config.d_list) {
    std::vector<DatasetSample> samples;
    for (std::size_t j = 0; j < config.samples_per_point; ++j) {
      const SamplePlan plan{sweep_seed(config, j), d, std::nullopt};
      samples.push_back({j, plan.seed, d, make_channel(base, config.sigma, plan)});
    }
    for (Method method : methods) {
      const auto it = models.find(method);
      result.rows.push_back(run_method(method, config, it == models.end() ? nullptr : &it->second, samples));
    }
    const auto* ro = result.find(Method::ro_uwmmse, config.M, d);
    const auto* uw = result.find(Method::uwmmse, config.M, d);
    const auto* tr = result.find(Method::tr_wmmse, config.M, d);
    const std::string at = " at d=" + format_double(d);
    if (ro && tr)
      result.checks.push_back(ordering_check("mean(ro_uwmmse) >= mean(tr_wmmse)" + at, ro->summary.mean, tr->summary.mean));
    if (ro && uw && d != 1.0)
      result.checks.push_back(ordering_check("mean(ro_uwmmse) >= mean(uwmmse)" + at, ro->summary.mean, uw->summary.mean));
  }
  return result;
}

ExperimentResult sweep_size(const ExperimentConfig& config,
                            const std::map<Method, ModelParams>& models,
                            const std::vector<Method>& methods) {
  config.validate();
  if (config.n_list.empty()) fail(ErrorCode::invalid_argument, "n_list is empty");
  require_nonempty_samples(config.samples_per_point);
  const Topology base = config.base_topology();
  ExperimentResult result{"sweep_size", {}, {}};
  for (std::size_t n : config.n_list) {
    std::vector<DatasetSample> samples;
    for (std::size_t j = 0; j < config.samples_per_point; ++j) {
      const SamplePlan plan{sweep_seed(config, j), std::nullopt, n};
      samples.push_back({j, plan.seed, 1.0, make_channel(base, config.sigma, plan)});
    }
    for (Method method : methods) {
      const auto it = models.find(method);
      result.rows.push_back(run_method(method, config, it == models.end() ? nullptr : &it->second, samples));
    }
    const auto* ro = result.find(Method::ro_uwmmse, n, 1.0);
    const auto* uw = result.find(Method::uwmmse, n, 1.0);
    const auto* tr = result.find(Method::tr_wmmse, n, 1.0);
    const std::string at = " at M=" + std::to_string(n);
    if (ro && tr)
      result.checks.push_back(ordering_check("mean(ro_uwmmse) >= mean(tr_wmmse)" + at, ro->summary.mean, tr->summary.mean));
    const std::size_t trained = uw ? models.at(Method::uwmmse).nodes : 0;
    if (ro && uw && n != trained)
      result.checks.push_back(ordering_check("mean(ro_uwmmse) >= mean(uwmmse)" + at, ro->summary.mean, uw->summary.mean));
  }
  return result;
}

namespace {

ExperimentResult run_sweep(const ExperimentConfig& config, const CheckpointMap& checkpoints,
                           const std::vector<Method>& methods, const fs::path& out_dir,
                           bool density) {
  config.validate();
  const auto models = load_models(config, checkpoints, methods);
  ExperimentResult result =
      density ? sweep_density(config, models, methods) : sweep_size(config, models, methods);
  ensure_dir(out_dir);
  const auto files = write_result_csvs(result, out_dir);
  write_manifest(out_dir, result.experiment, config,
                 {{"checkpoints", checkpoints_json(used_checkpoints(checkpoints, methods))},
                  {"checks", result.checks},
                  {"outputs", outputs_json(files)}});
  return result;
}

}  // namespace

ExperimentResult cmd_sweep_density(const ExperimentConfig& config, const CheckpointMap& checkpoints,
                                   const std::vector<Method>& methods, const fs::path& out_dir) {
  return run_sweep(config, checkpoints, methods, out_dir, true);
}

ExperimentResult cmd_sweep_size(const ExperimentConfig& config, const CheckpointMap& checkpoints,
                                const std::vector<Method>& methods, const fs::path& out_dir) {
  return run_sweep(config, checkpoints, methods, out_dir, false);
}

// ---------------------------------------------------------------------------
// timing

std::vector<TimingRow> bench_time(const ExperimentConfig& config, const ModelParams& model,
                                  const std::vector<DatasetSample>& samples) {
  config.validate();
  if (samples.empty()) fail(ErrorCode::invalid_argument, "dataset is empty");
  const std::size_t bs = config.bench_batch_size;
  const std::vector<std::pair<Method, std::size_t>> plan{
      {Method::wmmse, config.max_iter},
      {Method::tr_wmmse, config.tr_iterations},
      {Method::uwmmse, model.depth()}};

  std::vector<TimingRow> rows;
  double sink = 0.0;  // keeps the optimizer from dropping the work
  for (const auto& [method, iterations] : plan) {
    std::vector<double> per_sample;
    std::size_t cursor = 0;
    for (std::size_t b = 0; b <= config.bench_batches; ++b) {
      const auto t0 = std::chrono::steady_clock::now();
      for (std::size_t i = 0; i < bs; ++i, cursor = (cursor + 1) % samples.size()) {
        const Vector p = allocate(method, samples[cursor].channel, config, &model);
        sink += p.front();
      }
      const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      if (b > 0) per_sample.push_back(dt / static_cast<double>(bs));  // batch 0 is warm-up
    }
    const EvalSummary s = summarize(per_sample);
    rows.push_back({method, iterations, config.bench_batches, bs, s.median, s.mean, 0.0});
  }
  if (!std::isfinite(sink)) fail(ErrorCode::non_finite, "non-finite power during timing");
  for (TimingRow& r : rows) r.ratio_to_wmmse = r.median_per_sample_s / rows.front().median_per_sample_s;
  return rows;
}

std::vector<TimingRow> cmd_bench_time(const ExperimentConfig& config, const fs::path& checkpoint,
                                      const fs::path& dataset_dir, const fs::path& out_dir) {
  const Dataset ds = load_dataset(dataset_dir);
  const auto models = load_models(config, {{Method::uwmmse, checkpoint}}, {Method::uwmmse});
  const auto rows = bench_time(config, models.at(Method::uwmmse), ds.samples);

  ensure_dir(out_dir);
  const fs::path path = out_dir / "bench_time.csv";
  CsvFile csv(path, kTimingHeader);
  const std::string m = std::to_string(ds.samples.front().channel.size());
  for (const TimingRow& r : rows)
    csv.row(std::to_string(kSchemaVersion) + ",bench_time," + method_name(r.method) + "," +
            std::to_string(r.iterations) + "," + m + "," + std::to_string(r.batches) + "," +
            std::to_string(r.batch_size) + "," + format_double(r.median_per_sample_s) + "," +
            format_double(r.mean_per_sample_s) + "," + format_double(r.ratio_to_wmmse));
  csv.close();
  write_manifest(out_dir, "bench_time", config,
                 {{"dataset", {{"path", dataset_dir.string()},
                               {"manifest_git_blob_sha1", git_blob_hash(dataset_dir / "manifest.json")}}},
                  {"checkpoints", checkpoints_json({{Method::uwmmse, checkpoint}})},
                  {"outputs", outputs_json({path})}});
  return rows;
}

// ---------------------------------------------------------------------------
// selftest

std::vector<SelftestLine> cmd_selftest(std::uint64_t seed) {
  std::vector<SelftestLine> lines;
  auto run = [&](const std::function<checks::CheckResult()>& fn, const char* name) {
    try {
      const checks::CheckResult r = fn();
      lines.push_back({r.name, r.passed, r.detail});
    } catch (const Error& e) {
      lines.push_back({name, false, std::string("error: ") + e.what()});
    }
  };
  run([&] { return checks::monotone_descent(30, seed); }, "monotone-descent");
  // well-conditioned noise level; the low-noise case converges too slowly
  // for a quick suite
  run([&] { return checks::local_optimality(10, seed, {1.0}, 200); }, "local-optimality");
  run([&] { return checks::reduction_anchor(20, seed); }, "reduction-anchor");
  run([&] { return checks::permutation_equivariance(20, seed); }, "permutation-equivariance");
  run([&] { return checks::gradient_check(2, seed); }, "gradient-check");
  run([&] { return checks::feasibility_fuzz(2000, seed); }, "feasibility");
  return lines;
}

}  // namespace uwmmse::exp
