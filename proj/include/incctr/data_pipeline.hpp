#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "incctr/types.hpp"

namespace incctr {

inline constexpr int kCriteoNumeric = 13;
inline constexpr int kCriteoCategorical = 26;
inline constexpr int kCriteoFields = kCriteoNumeric + kCriteoCategorical;

struct PipelineConfig {
  double neg_sample_target_ratio = 0.5;  // desired positive fraction
  std::uint64_t filter_min_count = 20;   // tokens below this become Others
  // Base of the discretization logarithm; natural log is the only supported
  // choice, kept explicit so configs record it.
  std::string log_base = "natural";
  std::uint64_t seed = 0;
};

struct CriteoRow {
  std::uint8_t label = 0;
  std::array<std::optional<long long>, kCriteoNumeric> numeric;
  std::array<std::optional<std::string>, kCriteoCategorical> categorical;
};

// Splits one tab-separated Criteo line (40 columns, empties allowed).
// line_number only feeds the error message.
CriteoRow parse_criteo(const std::string& line, std::size_t line_number = 0);

// Numeric bucketing: v > 2 maps to floor(ln(v)^2); v <= 2 (including zero and
// negatives, where the log trick is not usable) passes through as the integer
// itself.
std::string discretize(double v);

// Full row -> sample tokens (numeric fields first, then categorical).
// Missing values become the missing token.
std::vector<std::string> criteo_tokens(const CriteoRow& row);

// Keeps every positive; keeps each negative with the probability that makes
// the expected positive ratio hit the target. Deterministic in (block, seed).
DayBlock downsample_negatives(const DayBlock& block, const PipelineConfig& cfg);

// Rewrites tokens occurring fewer than filter_min_count times across the
// given scope to the Others token. Counts are namespaced per field.
std::vector<DayBlock> filter_infrequent(std::vector<DayBlock> scope, const PipelineConfig& cfg);

// Half-open day-index slices: batch window [s, s+w) and incremental block
// [s, s+1). Throws DataError when the requested days are absent.
struct WindowSlice {
  std::vector<const DayBlock*> batch_window;
  const DayBlock* incremental = nullptr;
};
WindowSlice slice_windows(const std::vector<DayBlock>& stream, int s, int w);

struct SynthConfig {
  int days = 24;
  int samples_per_day = 2000;
  int fields = 6;
  int base_vocab_per_field = 40;
  // Per-day fraction of new tokens relative to the current per-field vocab.
  // Day 0 is the base vocabulary; entry d applies to day d (entry 0 ignored).
  std::vector<double> new_feature_rate_schedule;
  double drift_rate = 0.0;     // per-day decorrelation of token weights, in [0,1]
  double positive_rate = 0.5;
  double weight_scale = 0.5;   // stddev of latent per-token weights
  std::uint64_t seed = 0;

  void validate() const;
};

// Geometric interpolation from `first` (day 1) to `last` (final day).
std::vector<double> geometric_schedule(int days, double first, double last);

// Latent-logistic stream generator. Labels are Bernoulli draws from a
// logistic model over per-token weights; weights follow a stationary AR(1)
// process with per-day decorrelation drift_rate, and each day injects fresh
// tokens per the schedule. Fully reproducible from cfg.seed.
std::vector<DayBlock> generate_synthetic(const SynthConfig& cfg);

// Versioned binary block container with payload checksum.
void write_block(const DayBlock& block, const std::string& path);
DayBlock read_block(const std::string& path);

// Synth provenance sidecar (JSON round-trip of SynthConfig).
std::string synth_config_json(const SynthConfig& cfg);
SynthConfig synth_config_from_json(const std::string& text);

}  // namespace incctr
