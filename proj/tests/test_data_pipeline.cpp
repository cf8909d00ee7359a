#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "doctest.h"

#include "incctr/data_pipeline.hpp"
#include "incctr/feature_registry.hpp"
#include "incctr/rng.hpp"

using namespace incctr;

namespace {

std::string make_criteo_line(std::uint8_t label,
                             const std::vector<std::string>& numeric,
                             const std::vector<std::string>& categorical) {
  std::ostringstream out;
  out << int(label);
  for (const auto& v : numeric) out << '\t' << v;
  for (const auto& v : categorical) out << '\t' << v;
  return out.str();
}

std::string tmp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("criteo parsing splits fields and flags missing values") {
  std::vector<std::string> nums(13, "");
  nums[0] = "5";
  nums[4] = "-3";
  std::vector<std::string> cats(26, "");
  cats[0] = "a9f3b1c2";
  cats[25] = "deadbeef";
  CriteoRow row = parse_criteo(make_criteo_line(1, nums, cats));
  CHECK(row.label == 1);
  REQUIRE(row.numeric[0].has_value());
  CHECK(*row.numeric[0] == 5);
  CHECK(*row.numeric[4] == -3);
  CHECK_FALSE(row.numeric[1].has_value());
  CHECK(*row.categorical[0] == "a9f3b1c2");
  CHECK(*row.categorical[25] == "deadbeef");
  CHECK_FALSE(row.categorical[1].has_value());

  auto tokens = criteo_tokens(row);
  REQUIRE(tokens.size() == std::size_t(kCriteoFields));
  CHECK(tokens[0] == discretize(5.0));
  CHECK(tokens[1] == kMissingToken);
  CHECK(tokens[4] == "-3");
  CHECK(tokens[13] == "a9f3b1c2");
  CHECK(tokens[14] == kMissingToken);
}

TEST_CASE("criteo parsing rejects malformed lines") {
  CHECK_THROWS_AS(parse_criteo("1\t2\t3", 17), DataError);
  std::vector<std::string> nums(13, "1"), cats(26, "x");
  std::string good = make_criteo_line(0, nums, cats);
  CHECK_NOTHROW(parse_criteo(good));
  CHECK_THROWS_AS(parse_criteo("7" + good.substr(1)), DataError);  // bad label
  std::string bad_num = good;
  bad_num.replace(2, 1, "zz");
  CHECK_THROWS_AS(parse_criteo(bad_num), DataError);
}

TEST_CASE("generate-then-parse round trip preserves fields") {
  Rng rng(31);
  for (int iter = 0; iter < 20; ++iter) {
    CriteoRow row;
    row.label = rng.bernoulli(0.5);
    std::vector<std::string> nums(13), cats(26);
    for (int i = 0; i < 13; ++i) {
      if (rng.bernoulli(0.3)) {
        nums[i] = "";
      } else {
        long long v = static_cast<long long>(rng.below(1000)) - 100;
        row.numeric[i] = v;
        nums[i] = std::to_string(v);
      }
    }
    for (int i = 0; i < 26; ++i) {
      if (rng.bernoulli(0.3)) {
        cats[i] = "";
      } else {
        cats[i] = "c" + std::to_string(rng.below(99999));
        row.categorical[i] = cats[i];
      }
    }
    CriteoRow parsed = parse_criteo(make_criteo_line(row.label, nums, cats));
    CHECK(parsed.label == row.label);
    for (int i = 0; i < 13; ++i) CHECK(parsed.numeric[i] == row.numeric[i]);
    for (int i = 0; i < 26; ++i) CHECK(parsed.categorical[i] == row.categorical[i]);
  }
}

TEST_CASE("discretization follows the log-square rule with passthrough at or below 2") {
  CHECK(discretize(1.0) == "1");
  CHECK(discretize(0.0) == "0");
  CHECK(discretize(-7.0) == "-7");
  CHECK(discretize(2.0) == "2");
  const double e2 = std::exp(2.0);
  CHECK(discretize(e2) == "4");      // ln(e^2)^2 = 4 exactly
  CHECK(discretize(100.0) == "21");  // ln(100)^2 = 21.207...
  CHECK(discretize(3.0) == "1");

  // Passthrough tokens are fixed points of the rule.
  CHECK(discretize(std::stod(discretize(1.0))) == "1");
  CHECK(discretize(std::stod(discretize(-7.0))) == "-7");
}

TEST_CASE("negative downsampling hits the target ratio") {
  PipelineConfig cfg;
  cfg.seed = 5;

  // Balanced block: keep probability 1, block unchanged.
  DayBlock balanced;
  balanced.day_index = 0;
  balanced.num_fields = 1;
  for (int i = 0; i < 50; ++i) balanced.push_sample(1, {"p"});
  for (int i = 0; i < 50; ++i) balanced.push_sample(0, {"n"});
  DayBlock kept = downsample_negatives(balanced, cfg);
  CHECK(kept.size() == 100);
  CHECK(kept.labels == balanced.labels);

  // 3 positives / 97 negatives at target 0.5: p = 3/97, every positive kept.
  DayBlock skewed;
  skewed.day_index = 1;
  skewed.num_fields = 1;
  for (int i = 0; i < 3; ++i) skewed.push_sample(1, {"p"});
  for (int i = 0; i < 97; ++i) skewed.push_sample(0, {"n" + std::to_string(i)});
  DayBlock sampled = downsample_negatives(skewed, cfg);
  std::size_t pos = 0;
  for (auto y : sampled.labels) pos += y;
  CHECK(pos == 3);
  CHECK(sampled.size() <= skewed.size());

  // Statistical run: 3% positives, 1e5 samples, kept ratio within +-2%.
  DayBlock big;
  big.day_index = 2;
  big.num_fields = 1;
  Rng rng(17);
  for (int i = 0; i < 100000; ++i) big.push_sample(rng.bernoulli(0.03) ? 1 : 0, {"t"});
  DayBlock ds = downsample_negatives(big, cfg);
  std::size_t dpos = 0;
  for (auto y : ds.labels) dpos += y;
  const double ratio = static_cast<double>(dpos) / ds.size();
  CHECK(ratio > 0.48);
  CHECK(ratio < 0.52);

  // Deterministic under the same seed.
  DayBlock ds2 = downsample_negatives(big, cfg);
  CHECK(ds.labels == ds2.labels);
  CHECK(ds.tokens == ds2.tokens);

  DayBlock no_pos;
  no_pos.day_index = 3;
  no_pos.num_fields = 1;
  no_pos.push_sample(0, {"n"});
  CHECK_THROWS_AS(downsample_negatives(no_pos, cfg), DataError);
}

TEST_CASE("infrequent-feature filtering rewrites below-threshold tokens") {
  PipelineConfig cfg;
  cfg.filter_min_count = 20;
  DayBlock block;
  block.day_index = 0;
  block.num_fields = 1;
  for (int i = 0; i < 19; ++i) block.push_sample(0, {"rare"});
  for (int i = 0; i < 20; ++i) block.push_sample(0, {"kept"});
  auto out = filter_infrequent({block}, cfg);
  REQUIRE(out.size() == 1);
  std::size_t others = 0, kept = 0;
  for (std::size_t i = 0; i < out[0].size(); ++i) {
    if (out[0].token_at(i, 0) == kOthersToken) ++others;
    if (out[0].token_at(i, 0) == "kept") ++kept;
  }
  CHECK(others == 19);
  CHECK(kept == 20);

  // Recount: no surviving token below the threshold.
  std::map<std::string, int> counts;
  for (std::size_t i = 0; i < out[0].size(); ++i) ++counts[out[0].token_at(i, 0)];
  for (const auto& [token, count] : counts)
    if (token != kOthersToken) CHECK(count >= 20);
}

TEST_CASE("filtering counts span the whole scope, per field") {
  PipelineConfig cfg;
  cfg.filter_min_count = 3;
  DayBlock d0, d1;
  d0.day_index = 0;
  d0.num_fields = 2;
  d1.day_index = 1;
  d1.num_fields = 2;
  // Field-0 "x" reaches 3 only across both days; field-1 "x" stays rare.
  d0.push_sample(0, {"x", "y"});
  d0.push_sample(0, {"x", "y"});
  d1.push_sample(0, {"x", "y"});
  d1.push_sample(0, {"z", "x"});
  auto out = filter_infrequent({d0, d1}, cfg);
  CHECK(out[0].token_at(0, 0) == "x");
  CHECK(out[1].token_at(0, 0) == "x");
  CHECK(out[1].token_at(1, 0) == kOthersToken);  // z appears once
  CHECK(out[1].token_at(1, 1) == kOthersToken);  // field-1 x appears once
  CHECK(out[0].token_at(0, 1) == "y");
}

TEST_CASE("window slicing is half-open and overlaps by w-1") {
  SynthConfig cfg;
  cfg.days = 12;
  cfg.samples_per_day = 10;
  cfg.fields = 2;
  cfg.base_vocab_per_field = 5;
  cfg.seed = 3;
  auto stream = generate_synthetic(cfg);

  WindowSlice s0 = slice_windows(stream, 0, 7);
  REQUIRE(s0.batch_window.size() == 7);
  for (int d = 0; d < 7; ++d) CHECK(s0.batch_window[d]->day_index == d);
  CHECK(s0.incremental->day_index == 0);

  WindowSlice s1 = slice_windows(stream, 1, 7);
  std::set<int> shared;
  for (const DayBlock* a : s0.batch_window)
    for (const DayBlock* b : s1.batch_window)
      if (a == b) shared.insert(a->day_index);
  CHECK(shared.size() == 6);  // consecutive windows share w-1 days

  // Matches explicit filtering by day index.
  for (const DayBlock* block : s1.batch_window) {
    CHECK(block->day_index >= 1);
    CHECK(block->day_index < 8);
  }

  CHECK_THROWS_AS(slice_windows(stream, 8, 7), DataError);
}

TEST_CASE("synthetic stream is reproducible and schema-stable") {
  SynthConfig cfg;
  cfg.days = 5;
  cfg.samples_per_day = 200;
  cfg.fields = 4;
  cfg.base_vocab_per_field = 12;
  cfg.new_feature_rate_schedule = geometric_schedule(5, 0.12, 0.04);
  cfg.drift_rate = 0.2;
  cfg.seed = 99;
  auto a = generate_synthetic(cfg);
  auto b = generate_synthetic(cfg);
  REQUIRE(a.size() == 5);
  for (std::size_t d = 0; d < a.size(); ++d) {
    CHECK(a[d].labels == b[d].labels);
    CHECK(a[d].tokens == b[d].tokens);
    CHECK(a[d].num_fields == 4);
    a[d].validate();
  }
}

TEST_CASE("zero drift and zero injection give identically distributed days") {
  SynthConfig cfg;
  cfg.days = 6;
  cfg.samples_per_day = 4000;
  cfg.fields = 3;
  cfg.base_vocab_per_field = 10;
  cfg.drift_rate = 0.0;
  cfg.positive_rate = 0.5;
  cfg.seed = 12;
  auto stream = generate_synthetic(cfg);

  std::set<std::string> day0_tokens;
  for (const auto& t : stream[0].tokens) day0_tokens.insert(t);
  for (const auto& block : stream) {
    std::set<std::string> tokens;
    for (const auto& t : block.tokens) tokens.insert(t);
    CHECK(tokens == day0_tokens);  // vocabulary never changes
    double rate = 0.0;
    for (auto y : block.labels) rate += y;
    rate /= block.size();
    CHECK(rate == doctest::Approx(0.5).epsilon(0.06));
  }
}

TEST_CASE("measured new-feature proportions track the schedule") {
  SynthConfig cfg;
  cfg.days = 8;
  cfg.samples_per_day = 6000;
  cfg.fields = 4;
  cfg.base_vocab_per_field = 40;
  cfg.new_feature_rate_schedule = geometric_schedule(8, 0.12, 0.04);
  cfg.drift_rate = 0.0;
  cfg.seed = 21;
  auto stream = generate_synthetic(cfg);

  RegistryConfig reg;
  reg.threshold = 19;
  FrequencyTable freq(reg);
  AssignmentPolicy policy(reg);
  freq.record_occurrences(stream[0]);
  policy.update(freq, stream[0]);
  REQUIRE(policy.size() == 4 * 40);

  for (int d = 1; d < cfg.days; ++d) {
    freq.record_occurrences(stream[d]);
    const double measured = policy.new_feature_proportion(freq, stream[d]);
    CHECK(std::fabs(measured - cfg.new_feature_rate_schedule[d]) < 0.02);
    policy.update(freq, stream[d]);
  }
}

TEST_CASE("empirical positive rate tracks the configured rate") {
  SynthConfig cfg;
  cfg.days = 5;
  cfg.samples_per_day = 20000;  // 1e5 total
  cfg.fields = 5;
  cfg.base_vocab_per_field = 30;
  cfg.drift_rate = 0.15;
  cfg.positive_rate = 0.3;
  cfg.seed = 8;
  auto stream = generate_synthetic(cfg);
  double pos = 0.0, n = 0.0;
  for (const auto& block : stream) {
    for (auto y : block.labels) pos += y;
    n += block.size();
  }
  CHECK(std::fabs(pos / n - 0.3) < 0.02);
}

TEST_CASE("block container round-trips and detects corruption") {
  SynthConfig cfg;
  cfg.days = 1;
  cfg.samples_per_day = 500;
  cfg.fields = 3;
  cfg.base_vocab_per_field = 10;
  cfg.seed = 4;
  DayBlock block = generate_synthetic(cfg)[0];

  const std::string path = tmp_path("incctr_test_block.blk");
  write_block(block, path);
  DayBlock loaded = read_block(path);
  CHECK(loaded.day_index == block.day_index);
  CHECK(loaded.num_fields == block.num_fields);
  CHECK(loaded.labels == block.labels);
  CHECK(loaded.tokens == block.tokens);

  // Flip one payload byte: the checksum must catch it.
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekg(40);
    char c = 0;
    f.get(c);
    f.seekp(40);
    f.put(static_cast<char>(c ^ 0x5a));
  }
  CHECK_THROWS_AS(read_block(path), DataError);
  std::filesystem::remove(path);
}

TEST_CASE("synth config sidecar round-trips") {
  SynthConfig cfg;
  cfg.days = 9;
  cfg.samples_per_day = 123;
  cfg.fields = 7;
  cfg.base_vocab_per_field = 11;
  cfg.new_feature_rate_schedule = geometric_schedule(9, 0.12, 0.04);
  cfg.drift_rate = 0.25;
  cfg.positive_rate = 0.4;
  cfg.weight_scale = 0.7;
  cfg.seed = 31337;
  SynthConfig back = synth_config_from_json(synth_config_json(cfg));
  CHECK(back.days == cfg.days);
  CHECK(back.samples_per_day == cfg.samples_per_day);
  CHECK(back.fields == cfg.fields);
  CHECK(back.new_feature_rate_schedule == cfg.new_feature_rate_schedule);
  CHECK(back.drift_rate == cfg.drift_rate);
  CHECK(back.positive_rate == cfg.positive_rate);
  CHECK(back.weight_scale == cfg.weight_scale);
  CHECK(back.seed == cfg.seed);
}
