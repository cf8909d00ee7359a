#include "incctr/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

#include "incctr/rng.hpp"
#include "incctr/serialize.hpp"

namespace incctr {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot open for writing: " + path);
  out << content;
  if (!out) throw DataError("write failed: " + path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open: " + path);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

}  // namespace

KvConfig KvConfig::parse_file(const std::string& path) {
  return parse_string(read_text_file(path));
}

KvConfig KvConfig::parse_string(const std::string& text) {
  KvConfig cfg;
  std::istringstream in(text);
  std::string line, section;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("line " + std::to_string(line_no) + ": unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty section");
      cfg.sections_[section];
      continue;
    }
    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty key");
    if (section.empty())
      throw ConfigError("line " + std::to_string(line_no) + ": key outside any [section]");
    cfg.sections_[section][key] = value;
  }
  return cfg;
}

bool KvConfig::has(const std::string& section, const std::string& key) const {
  auto s = sections_.find(section);
  return s != sections_.end() && s->second.count(key) > 0;
}

std::string KvConfig::get(const std::string& section, const std::string& key,
                          const std::string& fallback) const {
  auto s = sections_.find(section);
  if (s == sections_.end()) return fallback;
  auto k = s->second.find(key);
  return k == s->second.end() ? fallback : k->second;
}

long long KvConfig::get_int(const std::string& section, const std::string& key,
                            long long fallback) const {
  if (!has(section, key)) return fallback;
  const std::string v = get(section, key, "");
  try {
    std::size_t used = 0;
    long long out = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("[" + section + "] " + key + ": expected integer, got '" + v + "'");
  }
}

std::uint64_t KvConfig::get_uint64(const std::string& section, const std::string& key,
                                   std::uint64_t fallback) const {
  if (!has(section, key)) return fallback;
  const std::string v = get(section, key, "");
  try {
    std::size_t used = 0;
    std::uint64_t out = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("[" + section + "] " + key + ": expected unsigned integer, got '" + v + "'");
  }
}

double KvConfig::get_double(const std::string& section, const std::string& key,
                            double fallback) const {
  if (!has(section, key)) return fallback;
  const std::string v = get(section, key, "");
  try {
    std::size_t used = 0;
    double out = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("[" + section + "] " + key + ": expected number, got '" + v + "'");
  }
}

bool KvConfig::get_bool(const std::string& section, const std::string& key, bool fallback) const {
  if (!has(section, key)) return fallback;
  const std::string v = get(section, key, "");
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("[" + section + "] " + key + ": expected boolean, got '" + v + "'");
}

std::vector<std::string> KvConfig::get_list(const std::string& section,
                                            const std::string& key) const {
  std::vector<std::string> out;
  std::string v = get(section, key, "");
  std::size_t start = 0;
  while (start <= v.size()) {
    std::size_t comma = v.find(',', start);
    std::string item =
        trim(comma == std::string::npos ? v.substr(start) : v.substr(start, comma - start));
    if (!item.empty()) out.push_back(item);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

std::vector<std::string> KvConfig::sections() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : sections_) out.push_back(name);
  return out;
}

std::vector<std::string> KvConfig::keys(const std::string& section) const {
  std::vector<std::string> out;
  auto s = sections_.find(section);
  if (s == sections_.end()) return out;
  for (const auto& [key, _] : s->second) out.push_back(key);
  return out;
}

namespace {

const std::set<std::string> kExperimentKeys = {"out",        "seed",          "w",
                                               "T",          "arms",          "data",
                                               "stream_dir", "jobs",          "delay_max_gap",
                                               "save_checkpoints"};
const std::set<std::string> kModelKeys = {"k", "cross_layers", "mlp_hidden", "random_scale"};
const std::set<std::string> kRegistryKeys = {"threshold", "per_field_vocab"};
const std::set<std::string> kSynthKeys = {"days",        "samples_per_day", "fields",
                                          "base_vocab_per_field", "new_rate_first",
                                          "new_rate_last", "drift_rate",    "positive_rate",
                                          "weight_scale", "seed"};
const std::set<std::string> kPipelineKeys = {"neg_sample_target_ratio", "filter_min_count",
                                             "log_base", "apply_filter", "seed"};
const std::set<std::string> kArmKeys = {
    "mode",      "delay",     "epoch_cap", "kd_epoch_ceiling", "lr_existing",
    "lr_new",    "lr_network", "batch_size", "optimizer",       "tau",
    "lambda",    "l2",        "epsilon",   "expand_features",  "inherit_moments",
    "seed"};

void check_keys(const KvConfig& kv, const std::string& section,
                const std::set<std::string>& allowed) {
  for (const std::string& key : kv.keys(section))
    if (!allowed.count(key))
      throw ConfigError("unknown key '" + key + "' in section [" + section + "]");
}

TrainConfig arm_train_from_kv(const KvConfig& kv, const std::string& section,
                              const TrainConfig& base) {
  TrainConfig t = base;
  t.epoch_cap = static_cast<int>(kv.get_int(section, "epoch_cap", t.epoch_cap));
  t.kd_epoch_ceiling = static_cast<int>(kv.get_int(section, "kd_epoch_ceiling", t.kd_epoch_ceiling));
  t.lr_existing = kv.get_double(section, "lr_existing", t.lr_existing);
  t.lr_new = kv.get_double(section, "lr_new", t.lr_new);
  t.lr_network = kv.get_double(section, "lr_network", t.lr_network);
  t.batch_size = static_cast<int>(kv.get_int(section, "batch_size", t.batch_size));
  const std::string opt = kv.get(section, "optimizer", t.optimizer == OptimizerKind::adam ? "adam" : "sgd");
  if (opt == "adam")
    t.optimizer = OptimizerKind::adam;
  else if (opt == "sgd")
    t.optimizer = OptimizerKind::sgd;
  else
    throw ConfigError("[" + section + "] optimizer: expected adam or sgd, got '" + opt + "'");
  t.loss.tau = kv.get_double(section, "tau", t.loss.tau);
  t.loss.lambda = kv.get_double(section, "lambda", t.loss.lambda);
  t.loss.l2 = kv.get_double(section, "l2", t.loss.l2);
  t.loss.epsilon = kv.get_double(section, "epsilon", t.loss.epsilon);
  t.expand_features = kv.get_bool(section, "expand_features", t.expand_features);
  t.inherit_moments = kv.get_bool(section, "inherit_moments", t.inherit_moments);
  return t;
}

// Mode and delay inferred from the arm name (ft*, kd_batch*, kd_self*,
// batch<i>*) unless overridden by explicit keys.
ArmSpec parse_arm(const std::string& name, const KvConfig& kv, std::uint64_t global_seed) {
  const std::string section = "arm." + name;
  check_keys(kv, section, kArmKeys);

  std::string inferred_mode;
  int inferred_delay = 0;
  if (name.rfind("kd_batch", 0) == 0)
    inferred_mode = "kd_batch";
  else if (name.rfind("kd_self", 0) == 0)
    inferred_mode = "kd_self";
  else if (name.rfind("ft", 0) == 0)
    inferred_mode = "ft";
  else if (name.rfind("batch", 0) == 0) {
    inferred_mode = "batch";
    std::size_t pos = 5;
    std::string digits;
    while (pos < name.size() && std::isdigit(static_cast<unsigned char>(name[pos])))
      digits.push_back(name[pos++]);
    if (!digits.empty()) inferred_delay = std::stoi(digits);
  }
  const std::string mode = kv.get(section, "mode", inferred_mode);
  if (mode.empty())
    throw ConfigError("arm '" + name + "': cannot infer mode from name; set mode= explicitly");

  ArmSpec arm;
  arm.name = name;
  arm.train = arm_train_from_kv(kv, section, TrainConfig{});
  arm.train.mode = train_mode_from_name(mode);
  arm.batch_delay = static_cast<int>(kv.get_int(section, "delay", inferred_delay));
  if (arm.batch_delay < 0) throw ConfigError("arm '" + name + "': delay must be >= 0");
  if (kv.has(section, "seed"))
    arm.train.seed = kv.get_uint64(section, "seed", 0);
  else
    arm.train.seed = splitmix64(global_seed ^ fnv1a64(name.data(), name.size()));
  arm.train.validate();
  return arm;
}

}  // namespace

ExperimentConfig ExperimentConfig::defaults() {
  ExperimentConfig cfg;
  cfg.build.init.k = 16;
  cfg.build.model.cross_layers = 2;
  cfg.build.model.mlp_hidden = {64, 32};
  cfg.synth.new_feature_rate_schedule = geometric_schedule(cfg.synth.days, 0.12, 0.04);
  cfg.warm_train.mode = TrainMode::batch;
  for (const char* name : {"batch0", "ft", "kd_self"}) {
    ArmSpec arm;
    arm.name = name;
    arm.train.mode = train_mode_from_name(name == std::string("batch0") ? "batch" : name);
    arm.batch_delay = 0;
    arm.train.seed = splitmix64(cfg.seed ^ fnv1a64(name, std::strlen(name)));
    cfg.arms.push_back(std::move(arm));
  }
  cfg.warm_train.seed = splitmix64(cfg.seed ^ 0x7761726dULL);
  cfg.synth.seed = splitmix64(cfg.seed ^ 0x73796eULL);
  cfg.pipeline.seed = splitmix64(cfg.seed ^ 0x706970ULL);
  return cfg;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
  return from_kv(KvConfig::parse_file(path));
}

ExperimentConfig ExperimentConfig::from_kv(const KvConfig& kv) {
  check_keys(kv, "experiment", kExperimentKeys);
  check_keys(kv, "model", kModelKeys);
  check_keys(kv, "registry", kRegistryKeys);
  check_keys(kv, "synth", kSynthKeys);
  check_keys(kv, "pipeline", kPipelineKeys);
  check_keys(kv, "warm", kArmKeys);
  for (const std::string& section : kv.sections()) {
    static const std::set<std::string> known = {"experiment", "model", "registry", "synth",
                                                "pipeline", "warm"};
    if (known.count(section) || section.rfind("arm.", 0) == 0) continue;
    throw ConfigError("unknown section [" + section + "]");
  }

  ExperimentConfig cfg;
  cfg.out_dir = kv.get("experiment", "out", "");
  cfg.seed = kv.get_uint64("experiment", "seed", 42);
  cfg.w = static_cast<int>(kv.get_int("experiment", "w", 7));
  cfg.T = static_cast<int>(kv.get_int("experiment", "T", 23));
  cfg.data = kv.get("experiment", "data", "synth");
  cfg.stream_dir = kv.get("experiment", "stream_dir", "");
  cfg.jobs = static_cast<int>(kv.get_int("experiment", "jobs", 1));
  cfg.delay_max_gap = static_cast<int>(kv.get_int("experiment", "delay_max_gap", 5));
  cfg.save_checkpoints = kv.get_bool("experiment", "save_checkpoints", true);
  if (cfg.w < 1 || cfg.T <= cfg.w) throw ConfigError("[experiment] requires T > w >= 1");
  if (cfg.data != "synth" && cfg.data != "blocks")
    throw ConfigError("[experiment] data must be synth or blocks");
  if (cfg.data == "blocks" && cfg.stream_dir.empty())
    throw ConfigError("[experiment] data=blocks requires stream_dir");
  if (cfg.jobs < 1) throw ConfigError("[experiment] jobs must be >= 1");
  if (cfg.delay_max_gap < 0) throw ConfigError("[experiment] delay_max_gap must be >= 0");

  cfg.build.init.k = static_cast<int>(kv.get_int("model", "k", 16));
  if (cfg.build.init.k < 1) throw ConfigError("[model] k must be >= 1");
  cfg.build.init.random_scale = kv.get_double("model", "random_scale", 0.0);
  cfg.build.model.cross_layers = static_cast<int>(kv.get_int("model", "cross_layers", 2));
  if (cfg.build.model.cross_layers < 0) throw ConfigError("[model] cross_layers must be >= 0");
  cfg.build.model.mlp_hidden.clear();
  if (kv.has("model", "mlp_hidden")) {
    for (const std::string& item : kv.get_list("model", "mlp_hidden"))
      cfg.build.model.mlp_hidden.push_back(std::stoi(item));
  } else {
    cfg.build.model.mlp_hidden = {64, 32};
  }

  cfg.build.registry.threshold =
      static_cast<std::uint64_t>(kv.get_int("registry", "threshold", 19));
  cfg.build.registry.per_field_vocab = kv.get_bool("registry", "per_field_vocab", true);

  cfg.synth.days = static_cast<int>(kv.get_int("synth", "days", 24));
  cfg.synth.samples_per_day = static_cast<int>(kv.get_int("synth", "samples_per_day", 2000));
  cfg.synth.fields = static_cast<int>(kv.get_int("synth", "fields", 6));
  cfg.synth.base_vocab_per_field =
      static_cast<int>(kv.get_int("synth", "base_vocab_per_field", 40));
  cfg.synth.new_feature_rate_schedule = geometric_schedule(
      cfg.synth.days, kv.get_double("synth", "new_rate_first", 0.12),
      kv.get_double("synth", "new_rate_last", 0.04));
  cfg.synth.drift_rate = kv.get_double("synth", "drift_rate", 0.1);
  cfg.synth.positive_rate = kv.get_double("synth", "positive_rate", 0.5);
  cfg.synth.weight_scale = kv.get_double("synth", "weight_scale", 0.5);
  cfg.synth.seed = kv.has("synth", "seed") ? kv.get_uint64("synth", "seed", 0)
                                            : splitmix64(cfg.seed ^ 0x73796eULL);
  cfg.synth.validate();

  cfg.pipeline.neg_sample_target_ratio =
      kv.get_double("pipeline", "neg_sample_target_ratio", 0.5);
  cfg.pipeline.log_base = kv.get("pipeline", "log_base", "natural");
  if (cfg.pipeline.log_base != "natural")
    throw ConfigError("[pipeline] log_base: only 'natural' is supported");
  cfg.pipeline.filter_min_count =
      static_cast<std::uint64_t>(kv.get_int("pipeline", "filter_min_count", 20));
  cfg.ingest_apply_filter = kv.get_bool("pipeline", "apply_filter", false);
  cfg.pipeline.seed = kv.has("pipeline", "seed") ? kv.get_uint64("pipeline", "seed", 0)
                                                  : splitmix64(cfg.seed ^ 0x706970ULL);

  cfg.warm_train = arm_train_from_kv(kv, "warm", TrainConfig{});
  cfg.warm_train.mode = TrainMode::batch;
  cfg.warm_train.seed = kv.has("warm", "seed") ? kv.get_uint64("warm", "seed", 0)
                                                : splitmix64(cfg.seed ^ 0x7761726dULL);
  cfg.warm_train.validate();

  std::vector<std::string> arm_names = kv.get_list("experiment", "arms");
  if (arm_names.empty()) arm_names = {"batch0", "ft", "kd_self"};
  std::set<std::string> seen;
  for (const std::string& name : arm_names) {
    if (!seen.insert(name).second) throw ConfigError("duplicate arm '" + name + "'");
    cfg.arms.push_back(parse_arm(name, kv, cfg.seed));
  }
  for (const std::string& section : kv.sections()) {
    if (section.rfind("arm.", 0) != 0) continue;
    const std::string name = section.substr(4);
    if (!seen.count(name))
      throw ConfigError("section [" + section + "] has no matching entry in arms");
  }
  return cfg;
}

std::string ExperimentConfig::echo() const {
  std::ostringstream out;
  out << "[experiment]\n";
  out << "out = " << out_dir << "\n";
  out << "seed = " << seed << "\n";
  out << "w = " << w << "\n";
  out << "T = " << T << "\n";
  out << "arms =";
  for (std::size_t i = 0; i < arms.size(); ++i) out << (i ? ", " : " ") << arms[i].name;
  out << "\n";
  out << "data = " << data << "\n";
  if (!stream_dir.empty()) out << "stream_dir = " << stream_dir << "\n";
  out << "jobs = " << jobs << "\n";
  out << "delay_max_gap = " << delay_max_gap << "\n";
  out << "save_checkpoints = " << (save_checkpoints ? "true" : "false") << "\n";

  out << "\n[model]\n";
  out << "k = " << build.init.k << "\n";
  out << "cross_layers = " << build.model.cross_layers << "\n";
  out << "mlp_hidden =";
  for (std::size_t i = 0; i < build.model.mlp_hidden.size(); ++i)
    out << (i ? ", " : " ") << build.model.mlp_hidden[i];
  out << "\n";
  out << "random_scale = " << fmt(build.init.random_scale) << "\n";

  out << "\n[registry]\n";
  out << "threshold = " << build.registry.threshold << "\n";
  out << "per_field_vocab = " << (build.registry.per_field_vocab ? "true" : "false") << "\n";

  out << "\n[synth]\n";
  out << "days = " << synth.days << "\n";
  out << "samples_per_day = " << synth.samples_per_day << "\n";
  out << "fields = " << synth.fields << "\n";
  out << "base_vocab_per_field = " << synth.base_vocab_per_field << "\n";
  out << "new_rate_first = "
      << fmt(synth.new_feature_rate_schedule.size() > 1 ? synth.new_feature_rate_schedule[1] : 0.0)
      << "\n";
  out << "new_rate_last = "
      << fmt(synth.new_feature_rate_schedule.empty() ? 0.0
                                                     : synth.new_feature_rate_schedule.back())
      << "\n";
  out << "drift_rate = " << fmt(synth.drift_rate) << "\n";
  out << "positive_rate = " << fmt(synth.positive_rate) << "\n";
  out << "weight_scale = " << fmt(synth.weight_scale) << "\n";
  out << "seed = " << synth.seed << "\n";

  out << "\n[pipeline]\n";
  out << "neg_sample_target_ratio = " << fmt(pipeline.neg_sample_target_ratio) << "\n";
  out << "log_base = " << pipeline.log_base << "\n";
  out << "filter_min_count = " << pipeline.filter_min_count << "\n";
  out << "apply_filter = " << (ingest_apply_filter ? "true" : "false") << "\n";
  out << "seed = " << pipeline.seed << "\n";

  auto emit_train = [&out](const TrainConfig& t, int delay, bool with_delay) {
    out << "mode = " << train_mode_name(t.mode) << "\n";
    if (with_delay) out << "delay = " << delay << "\n";
    out << "epoch_cap = " << t.epoch_cap << "\n";
    out << "kd_epoch_ceiling = " << t.kd_epoch_ceiling << "\n";
    out << "lr_existing = " << fmt(t.lr_existing) << "\n";
    out << "lr_new = " << fmt(t.lr_new) << "\n";
    out << "lr_network = " << fmt(t.lr_network) << "\n";
    out << "batch_size = " << t.batch_size << "\n";
    out << "optimizer = " << (t.optimizer == OptimizerKind::adam ? "adam" : "sgd") << "\n";
    out << "tau = " << fmt(t.loss.tau) << "\n";
    out << "lambda = " << fmt(t.loss.lambda) << "\n";
    out << "l2 = " << fmt(t.loss.l2) << "\n";
    out << "epsilon = " << fmt(t.loss.epsilon) << "\n";
    out << "expand_features = " << (t.expand_features ? "true" : "false") << "\n";
    out << "inherit_moments = " << (t.inherit_moments ? "true" : "false") << "\n";
    out << "seed = " << t.seed << "\n";
  };

  out << "\n[warm]\n";
  emit_train(warm_train, 0, false);
  for (const ArmSpec& arm : arms) {
    out << "\n[arm." << arm.name << "]\n";
    emit_train(arm.train, arm.batch_delay, arm.train.mode == TrainMode::batch);
  }
  return out.str();
}

std::string default_config_text() { return ExperimentConfig::defaults().echo(); }

std::vector<std::string> cmd_synth_gen(const ExperimentConfig& cfg, const std::string& out_dir) {
  if (out_dir.empty()) throw ConfigError("synth-gen requires an output directory");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw DataError("cannot create " + out_dir + ": " + ec.message());

  std::vector<DayBlock> stream = generate_synthetic(cfg.synth);
  std::vector<std::string> paths;
  for (const DayBlock& block : stream) {
    char name[64];
    std::snprintf(name, sizeof name, "block_%03d.blk", block.day_index);
    std::string path = (fs::path(out_dir) / name).string();
    write_block(block, path);
    paths.push_back(std::move(path));
  }
  write_text_file((fs::path(out_dir) / "synth_provenance.json").string(),
                  synth_config_json(cfg.synth));
  return paths;
}

std::vector<std::string> cmd_ingest(const std::string& raw_dir, const ExperimentConfig& cfg,
                                    const std::string& out_dir) {
  if (out_dir.empty()) throw ConfigError("ingest requires an output directory");
  if (!fs::is_directory(raw_dir)) throw DataError("not a directory: " + raw_dir);

  std::vector<std::pair<int, fs::path>> files;
  for (const auto& entry : fs::directory_iterator(raw_dir)) {
    const std::string name = entry.path().filename().string();
    int day = 0;
    if (std::sscanf(name.c_str(), "day_%d.tsv", &day) == 1) files.emplace_back(day, entry.path());
  }
  if (files.empty()) throw DataError("no day_<i>.tsv files in " + raw_dir);
  std::sort(files.begin(), files.end());

  std::vector<DayBlock> blocks;
  for (const auto& [day, path] : files) {
    DayBlock block;
    block.day_index = day;
    block.num_fields = kCriteoFields;

    std::ifstream in(path);
    if (!in) throw DataError("cannot open: " + path.string());
    std::string line;
    std::size_t line_no = 0, failures = 0;
    std::string first_failure;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      try {
        CriteoRow row = parse_criteo(line, line_no);
        block.push_sample(row.label, criteo_tokens(row));
      } catch (const DataError& e) {
        ++failures;
        if (first_failure.empty()) first_failure = e.what();
      }
    }
    if (failures > 0)
      throw DataError(std::to_string(failures) + " parse failures in " + path.string() +
                      " (first: " + first_failure + ")");
    blocks.push_back(downsample_negatives(block, cfg.pipeline));
  }
  if (cfg.ingest_apply_filter) blocks = filter_infrequent(std::move(blocks), cfg.pipeline);

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw DataError("cannot create " + out_dir + ": " + ec.message());
  std::vector<std::string> paths;
  for (const DayBlock& block : blocks) {
    char name[64];
    std::snprintf(name, sizeof name, "block_%03d.blk", block.day_index);
    std::string path = (fs::path(out_dir) / name).string();
    write_block(block, path);
    paths.push_back(std::move(path));
  }
  return paths;
}

std::vector<DayBlock> load_stream(const std::string& dir) {
  if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir);
  std::vector<DayBlock> stream;
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.path().extension() == ".blk") files.push_back(entry.path());
  if (files.empty()) throw DataError("no .blk files in " + dir);
  std::sort(files.begin(), files.end());
  for (const auto& path : files) stream.push_back(read_block(path.string()));
  std::sort(stream.begin(), stream.end(),
            [](const DayBlock& a, const DayBlock& b) { return a.day_index < b.day_index; });
  return stream;
}

namespace {

struct ReportData {
  std::vector<ArmSummary> summaries;
  std::string best_incremental;
  double best_auc = 0.0;
};

bool is_incremental_name(const std::string& name) {
  return name.rfind("ft", 0) == 0 || name.rfind("kd", 0) == 0;
}

ReportData build_report(const std::vector<MetricsRow>& rows) {
  ReportData data;
  data.summaries = efficiency_summary(rows, "batch0");
  for (const auto& s : data.summaries) {
    if (is_incremental_name(s.arm) && s.mean_auc > data.best_auc) {
      data.best_auc = s.mean_auc;
      data.best_incremental = s.arm;
    }
  }
  return data;
}

}  // namespace

std::string report_tsv(const std::vector<MetricsRow>& rows) {
  ReportData data = build_report(rows);
  std::ostringstream out;
  out << "arm\tupdates\tauc\tlogloss\tavg_epochs\tavg_time_s\tspeedup_x\timpr_abs\timpr_rel_pct\n";
  for (const auto& s : data.summaries) {
    char line[512];
    const double impr_abs = data.best_incremental.empty() ? 0.0 : data.best_auc - s.mean_auc;
    const double impr_rel =
        data.best_incremental.empty() || s.mean_auc == 0.0 ? 0.0 : impr_abs / s.mean_auc * 100.0;
    std::snprintf(line, sizeof line, "%s\t%zu\t%.6f\t%.6f\t%.3f\t%.3f\t%.2f\t%.6f\t%.4f\n",
                  s.arm.c_str(), s.updates, s.mean_auc, s.mean_logloss, s.avg_epochs,
                  s.avg_wall_ms / 1000.0, s.speedup, impr_abs, impr_rel);
    out << line;
  }
  return out.str();
}

std::string report_json(const std::vector<MetricsRow>& rows) {
  ReportData data = build_report(rows);
  nlohmann::json doc;
  doc["best_incremental"] = data.best_incremental;
  doc["arms"] = nlohmann::json::array();
  for (const auto& s : data.summaries) {
    const double impr_abs = data.best_incremental.empty() ? 0.0 : data.best_auc - s.mean_auc;
    doc["arms"].push_back({{"arm", s.arm},
                           {"updates", s.updates},
                           {"auc", s.mean_auc},
                           {"logloss", s.mean_logloss},
                           {"avg_epochs", s.avg_epochs},
                           {"avg_time_s", s.avg_wall_ms / 1000.0},
                           {"speedup_x", s.speedup},
                           {"impr_abs", impr_abs},
                           {"impr_rel_pct",
                            s.mean_auc == 0.0 ? 0.0 : impr_abs / s.mean_auc * 100.0}});
  }
  return doc.dump(2);
}

RunArtifacts cmd_run(const ExperimentConfig& cfg) {
  if (cfg.out_dir.empty()) throw ConfigError("run requires an output directory (out=)");
  std::error_code ec;
  fs::create_directories(cfg.out_dir, ec);
  if (ec) throw DataError("cannot create " + cfg.out_dir + ": " + ec.message());

  std::vector<DayBlock> stream =
      cfg.data == "synth" ? generate_synthetic(cfg.synth) : load_stream(cfg.stream_dir);

  ScheduleConfig sc;
  sc.w = cfg.w;
  sc.T = cfg.T;
  sc.build = cfg.build;
  sc.warm_train = cfg.warm_train;
  sc.arms = cfg.arms;
  sc.jobs = cfg.jobs;

  RunArtifacts artifacts;
  artifacts.config = cfg;
  artifacts.schedule = run_schedule(stream, sc);
  const ScheduleResult& res = artifacts.schedule;

  write_text_file((fs::path(cfg.out_dir) / "config.txt").string(), cfg.echo());

  std::ostringstream metrics;
  metrics << metrics_header() << "\n";
  for (const MetricsRow& row : res.rows) metrics << format_metrics_row(row) << "\n";
  artifacts.metrics_path = (fs::path(cfg.out_dir) / "metrics.tsv").string();
  write_text_file(artifacts.metrics_path, metrics.str());

  std::string report = report_tsv(res.rows);
  for (const ArmOutcome& arm : res.arms)
    if (arm.failed) report += "# arm " + arm.name + " FAILED: " + arm.error + "\n";
  artifacts.report_tsv_path = (fs::path(cfg.out_dir) / "report.tsv").string();
  write_text_file(artifacts.report_tsv_path, report);
  artifacts.report_json_path = (fs::path(cfg.out_dir) / "report.json").string();
  write_text_file(artifacts.report_json_path, report_json(res.rows));

  if (cfg.delay_max_gap > 0) {
    const int max_gap = std::min(cfg.delay_max_gap, cfg.T - cfg.w);
    DelayCurve curve = delay_degradation(res.warm, stream, cfg.w - 1, max_gap);
    std::ostringstream out;
    out << "gap\tauc\tdegradation_pct\n";
    for (std::size_t i = 0; i < curve.gaps.size(); ++i) {
      char line[128];
      std::snprintf(line, sizeof line, "%d\t%.6f\t%.4f\n", curve.gaps[i], curve.auc_at_gap[i],
                    curve.relative_degradation_pct[i]);
      out << line;
    }
    artifacts.delay_curve_path = (fs::path(cfg.out_dir) / "delay_curve.tsv").string();
    write_text_file(artifacts.delay_curve_path, out.str());
  }

  if (cfg.save_checkpoints) {
    const std::string ckpt_dir = (fs::path(cfg.out_dir) / "checkpoints").string();
    fs::create_directories(ckpt_dir, ec);
    if (ec) throw DataError("cannot create " + ckpt_dir + ": " + ec.message());
    auto save_with_policy = [&](const std::string& name, const Checkpoint& ckpt) {
      std::string path = (fs::path(ckpt_dir) / (name + ".ckpt")).string();
      save_checkpoint(ckpt, path);
      write_text_file((fs::path(ckpt_dir) / (name + ".policy.json")).string(),
                      ckpt.policy.to_json(ckpt.freq));
      artifacts.checkpoint_paths[name] = std::move(path);
    };
    save_with_policy("warm", res.warm);
    for (const ArmOutcome& arm : res.arms)
      if (arm.final_checkpoint) save_with_policy(arm.name, *arm.final_checkpoint);
  }
  return artifacts;
}

EvalReport cmd_eval(const std::string& checkpoint_path, const std::string& block_path) {
  Checkpoint ckpt = load_checkpoint(checkpoint_path);
  DayBlock block = read_block(block_path);
  InferenceResult inf = inference(ckpt, block);
  return evaluate(inf.predictions, block.labels, ckpt.train_config.loss.epsilon);
}

}  // namespace incctr
