#include "incctr/data_pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <unordered_map>

#include "json.hpp"

#include "incctr/rng.hpp"
#include "incctr/serialize.hpp"

namespace incctr {

namespace {
constexpr char kBlockMagic[8] = {'I', 'N', 'C', 'B', 'L', 'K', '0', '1'};
}

CriteoRow parse_criteo(const std::string& line, std::size_t line_number) {
  CriteoRow row;
  std::vector<std::string> cols;
  cols.reserve(kCriteoFields + 1);
  std::size_t start = 0;
  while (true) {
    std::size_t tab = line.find('\t', start);
    if (tab == std::string::npos) {
      cols.push_back(line.substr(start));
      break;
    }
    cols.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  if (cols.size() != kCriteoFields + 1)
    throw DataError("line " + std::to_string(line_number) + ": expected " +
                    std::to_string(kCriteoFields + 1) + " columns, got " +
                    std::to_string(cols.size()));

  if (cols[0] == "0")
    row.label = 0;
  else if (cols[0] == "1")
    row.label = 1;
  else
    throw DataError("line " + std::to_string(line_number) + ": bad label '" + cols[0] + "'");

  for (int i = 0; i < kCriteoNumeric; ++i) {
    const std::string& c = cols[1 + i];
    if (c.empty()) continue;
    try {
      std::size_t used = 0;
      long long v = std::stoll(c, &used);
      if (used != c.size()) throw std::invalid_argument(c);
      row.numeric[i] = v;
    } catch (const std::exception&) {
      throw DataError("line " + std::to_string(line_number) + ": bad numeric '" + c + "'");
    }
  }
  for (int i = 0; i < kCriteoCategorical; ++i) {
    const std::string& c = cols[1 + kCriteoNumeric + i];
    if (!c.empty()) row.categorical[i] = c;
  }
  return row;
}

std::string discretize(double v) {
  if (v > 2.0) {
    const double lv = std::log(v);
    return std::to_string(static_cast<long long>(std::floor(lv * lv)));
  }
  return std::to_string(static_cast<long long>(std::llround(v)));
}

std::vector<std::string> criteo_tokens(const CriteoRow& row) {
  std::vector<std::string> out;
  out.reserve(kCriteoFields);
  for (int i = 0; i < kCriteoNumeric; ++i)
    out.push_back(row.numeric[i] ? discretize(static_cast<double>(*row.numeric[i]))
                                 : std::string(kMissingToken));
  for (int i = 0; i < kCriteoCategorical; ++i)
    out.push_back(row.categorical[i] ? *row.categorical[i] : std::string(kMissingToken));
  return out;
}

DayBlock downsample_negatives(const DayBlock& block, const PipelineConfig& cfg) {
  block.validate();
  const double r = cfg.neg_sample_target_ratio;
  if (r <= 0.0 || r >= 1.0) throw ConfigError("neg_sample_target_ratio must be in (0,1)");

  std::size_t positives = 0;
  for (auto y : block.labels) positives += y;
  if (positives == 0) throw DataError("block has no positives; target ratio unattainable");
  const std::size_t negatives = block.size() - positives;

  double keep_p = 1.0;
  if (negatives > 0) {
    keep_p = static_cast<double>(positives) * (1.0 - r) / (r * static_cast<double>(negatives));
    if (keep_p > 1.0) keep_p = 1.0;
  }

  Rng rng(splitmix64(cfg.seed ^ (0x647377ULL + static_cast<std::uint64_t>(block.day_index))));
  DayBlock out;
  out.day_index = block.day_index;
  out.num_fields = block.num_fields;
  for (std::size_t i = 0; i < block.size(); ++i) {
    const bool keep = block.labels[i] == 1 || rng.bernoulli(keep_p);
    if (!keep) continue;
    out.labels.push_back(block.labels[i]);
    auto toks = block.sample_tokens(i);
    out.tokens.insert(out.tokens.end(), toks.begin(), toks.end());
  }
  return out;
}

std::vector<DayBlock> filter_infrequent(std::vector<DayBlock> scope, const PipelineConfig& cfg) {
  if (cfg.filter_min_count == 0) return scope;
  std::unordered_map<std::string, std::uint64_t> counts;
  auto key = [](int field, const std::string& token) {
    return std::to_string(field) + "\x1f" + token;
  };
  for (const auto& block : scope) {
    block.validate();
    for (std::size_t i = 0; i < block.size(); ++i)
      for (int f = 0; f < block.num_fields; ++f) ++counts[key(f, block.token_at(i, f))];
  }
  for (auto& block : scope) {
    const std::size_t n = block.size();
    for (std::size_t i = 0; i < n; ++i)
      for (int f = 0; f < block.num_fields; ++f) {
        std::string& token =
            block.tokens[i * static_cast<std::size_t>(block.num_fields) + f];
        if (counts[key(f, token)] < cfg.filter_min_count) token = kOthersToken;
      }
  }
  return scope;
}

WindowSlice slice_windows(const std::vector<DayBlock>& stream, int s, int w) {
  if (w < 1) throw ConfigError("window size must be >= 1");
  std::map<int, const DayBlock*> by_day;
  for (const auto& block : stream) by_day[block.day_index] = &block;

  WindowSlice slice;
  for (int day = s; day < s + w; ++day) {
    auto it = by_day.find(day);
    if (it == by_day.end()) throw DataError("stream is missing day " + std::to_string(day));
    slice.batch_window.push_back(it->second);
  }
  slice.incremental = slice.batch_window.front();
  return slice;
}

void SynthConfig::validate() const {
  if (days <= 0 || samples_per_day <= 0 || fields <= 0 || base_vocab_per_field <= 0)
    throw ConfigError("synth sizes must be positive");
  if (drift_rate < 0.0 || drift_rate > 1.0) throw ConfigError("drift_rate must be in [0,1]");
  if (positive_rate <= 0.0 || positive_rate >= 1.0)
    throw ConfigError("positive_rate must be in (0,1)");
  for (double r : new_feature_rate_schedule)
    if (r < 0.0 || r > 1.0) throw ConfigError("new feature rates must be in [0,1]");
  if (weight_scale <= 0.0) throw ConfigError("weight_scale must be positive");
}

std::vector<double> geometric_schedule(int days, double first, double last) {
  std::vector<double> out(static_cast<std::size_t>(std::max(days, 1)), first);
  if (days <= 2) return out;
  const double ratio = std::pow(last / first, 1.0 / static_cast<double>(days - 2));
  double r = first;
  for (int d = 1; d < days; ++d) {
    out[d] = r;
    r *= ratio;
  }
  return out;
}

std::vector<DayBlock> generate_synthetic(const SynthConfig& cfg) {
  cfg.validate();

  struct FieldState {
    std::vector<std::string> tokens;
    std::vector<double> weights;
  };
  std::vector<FieldState> fields(cfg.fields);

  Rng world(splitmix64(cfg.seed ^ 0x73796e7468ULL));   // vocab + weights
  Rng labels(splitmix64(cfg.seed ^ 0x6c6162ULL));      // token picks + labels

  for (int f = 0; f < cfg.fields; ++f) {
    for (int t = 0; t < cfg.base_vocab_per_field; ++t) {
      fields[f].tokens.push_back("f" + std::to_string(f) + "_t" + std::to_string(t));
      fields[f].weights.push_back(cfg.weight_scale * world.normal());
    }
  }

  auto rate_for_day = [&](int d) -> double {
    if (cfg.new_feature_rate_schedule.empty()) return 0.0;
    if (d < static_cast<int>(cfg.new_feature_rate_schedule.size()))
      return cfg.new_feature_rate_schedule[d];
    return cfg.new_feature_rate_schedule.back();
  };

  // Calibrates the bias so the mean label probability hits positive_rate.
  auto calibrate_bias = [&](std::uint64_t day_seed) {
    Rng probe(splitmix64(cfg.seed ^ (0x62696173ULL + day_seed)));
    const int probes = 4096;
    std::vector<double> zs(probes, 0.0);
    for (int i = 0; i < probes; ++i) {
      double z = 0.0;
      for (int f = 0; f < cfg.fields; ++f)
        z += fields[f].weights[probe.below(fields[f].weights.size())];
      zs[i] = z;
    }
    double b = std::log(cfg.positive_rate / (1.0 - cfg.positive_rate));
    for (int iter = 0; iter < 40; ++iter) {
      double mean = 0.0, slope = 0.0;
      for (double z : zs) {
        const double p = 1.0 / (1.0 + std::exp(-(b + z)));
        mean += p;
        slope += p * (1.0 - p);
      }
      mean /= probes;
      slope /= probes;
      if (slope < 1e-12) break;
      const double step = (mean - cfg.positive_rate) / slope;
      b -= step;
      if (std::fabs(step) < 1e-10) break;
    }
    return b;
  };

  std::vector<DayBlock> stream;
  stream.reserve(cfg.days);
  const double rho = cfg.drift_rate;
  const double keep_frac = std::sqrt(std::max(0.0, 1.0 - rho * rho));

  int next_token_idx = cfg.base_vocab_per_field;
  for (int d = 0; d < cfg.days; ++d) {
    if (d > 0) {
      if (rho > 0.0)
        for (auto& fs : fields)
          for (double& wgt : fs.weights)
            wgt = keep_frac * wgt + rho * cfg.weight_scale * world.normal();
      const double rate = rate_for_day(d);
      if (rate > 0.0) {
        int injected_idx = next_token_idx;
        int max_added = 0;
        for (int f = 0; f < cfg.fields; ++f) {
          const int add = static_cast<int>(
              std::llround(rate * static_cast<double>(fields[f].tokens.size())));
          max_added = std::max(max_added, add);
          for (int t = 0; t < add; ++t) {
            fields[f].tokens.push_back("f" + std::to_string(f) + "_t" +
                                       std::to_string(injected_idx + t));
            fields[f].weights.push_back(cfg.weight_scale * world.normal());
          }
        }
        next_token_idx += max_added;
      }
    }

    const double bias = calibrate_bias(static_cast<std::uint64_t>(d));

    DayBlock block;
    block.day_index = d;
    block.num_fields = cfg.fields;
    block.labels.reserve(cfg.samples_per_day);
    block.tokens.reserve(static_cast<std::size_t>(cfg.samples_per_day) * cfg.fields);
    for (int i = 0; i < cfg.samples_per_day; ++i) {
      double z = bias;
      for (int f = 0; f < cfg.fields; ++f) {
        const std::size_t idx = labels.below(fields[f].tokens.size());
        block.tokens.push_back(fields[f].tokens[idx]);
        z += fields[f].weights[idx];
      }
      const double p = 1.0 / (1.0 + std::exp(-z));
      block.labels.push_back(labels.bernoulli(p) ? 1 : 0);
    }
    stream.push_back(std::move(block));
  }
  return stream;
}

void write_block(const DayBlock& block, const std::string& path) {
  block.validate();
  BinaryWriter w;
  w.u32(static_cast<std::uint32_t>(block.day_index));
  w.u32(static_cast<std::uint32_t>(block.num_fields));
  w.u64(block.size());

  // Per-field token dictionaries keep the container compact while preserving
  // the raw tokens the incremental feature path needs.
  std::vector<std::unordered_map<std::string, std::uint32_t>> dict_index(block.num_fields);
  std::vector<std::vector<const std::string*>> dict_tokens(block.num_fields);
  std::vector<std::uint32_t> indices;
  indices.reserve(block.tokens.size());
  for (std::size_t i = 0; i < block.size(); ++i) {
    for (int f = 0; f < block.num_fields; ++f) {
      const std::string& token = block.token_at(i, f);
      auto [it, inserted] =
          dict_index[f].emplace(token, static_cast<std::uint32_t>(dict_tokens[f].size()));
      if (inserted) dict_tokens[f].push_back(&token);
      indices.push_back(it->second);
    }
  }
  for (int f = 0; f < block.num_fields; ++f) {
    w.u32(static_cast<std::uint32_t>(dict_tokens[f].size()));
    for (const std::string* token : dict_tokens[f]) w.str(*token);
  }
  for (std::uint8_t y : block.labels) w.u8(y);
  for (std::uint32_t idx : indices) w.u32(idx);

  write_container(path, kBlockMagic, 1, w.buffer());
}

DayBlock read_block(const std::string& path) {
  BinaryReader r(read_container(path, kBlockMagic, 1));
  DayBlock block;
  block.day_index = static_cast<int>(r.u32());
  block.num_fields = static_cast<int>(r.u32());
  const std::uint64_t n = r.u64();

  std::vector<std::vector<std::string>> dicts(block.num_fields);
  for (int f = 0; f < block.num_fields; ++f) {
    const std::uint32_t count = r.u32();
    dicts[f].reserve(count);
    for (std::uint32_t t = 0; t < count; ++t) dicts[f].push_back(r.str());
  }
  block.labels.resize(n);
  for (std::uint64_t i = 0; i < n; ++i) block.labels[i] = r.u8();
  block.tokens.reserve(n * block.num_fields);
  for (std::uint64_t i = 0; i < n; ++i)
    for (int f = 0; f < block.num_fields; ++f) {
      const std::uint32_t idx = r.u32();
      if (idx >= dicts[f].size()) throw DataError("token index out of range in " + path);
      block.tokens.push_back(dicts[f][idx]);
    }
  if (!r.exhausted()) throw DataError("trailing bytes in " + path);
  block.validate();
  return block;
}

std::string synth_config_json(const SynthConfig& cfg) {
  nlohmann::json doc;
  doc["format"] = "incctr-synth";
  doc["version"] = 1;
  doc["days"] = cfg.days;
  doc["samples_per_day"] = cfg.samples_per_day;
  doc["fields"] = cfg.fields;
  doc["base_vocab_per_field"] = cfg.base_vocab_per_field;
  doc["new_feature_rate_schedule"] = cfg.new_feature_rate_schedule;
  doc["drift_rate"] = cfg.drift_rate;
  doc["positive_rate"] = cfg.positive_rate;
  doc["weight_scale"] = cfg.weight_scale;
  doc["seed"] = cfg.seed;
  return doc.dump(2);
}

SynthConfig synth_config_from_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad synth sidecar: ") + e.what());
  }
  SynthConfig cfg;
  cfg.days = doc.at("days").get<int>();
  cfg.samples_per_day = doc.at("samples_per_day").get<int>();
  cfg.fields = doc.at("fields").get<int>();
  cfg.base_vocab_per_field = doc.at("base_vocab_per_field").get<int>();
  cfg.new_feature_rate_schedule = doc.at("new_feature_rate_schedule").get<std::vector<double>>();
  cfg.drift_rate = doc.at("drift_rate").get<double>();
  cfg.positive_rate = doc.at("positive_rate").get<double>();
  cfg.weight_scale = doc.at("weight_scale").get<double>();
  cfg.seed = doc.at("seed").get<std::uint64_t>();
  return cfg;
}

}  // namespace incctr
