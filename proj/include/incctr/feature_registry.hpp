#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "incctr/types.hpp"

namespace incctr {

struct RegistryConfig {
  // A feature is promoted to its own id once its cumulative count strictly
  // exceeds this value.
  std::uint64_t threshold = 19;
  // Namespace tokens by field so identical strings in different fields get
  // distinct ids. With false, all fields share one vocabulary.
  bool per_field_vocab = true;
};

// Internal vocabulary key. field is -1 when the vocabulary is global.
struct FeatureKey {
  std::int32_t field = 0;
  std::string token;

  bool operator==(const FeatureKey&) const = default;
};

struct FeatureKeyHash {
  std::size_t operator()(const FeatureKey& k) const {
    std::size_t h = std::hash<std::string>{}(k.token);
    return h ^ (static_cast<std::size_t>(k.field + 1) * 0x9e3779b97f4a7c15ULL);
  }
};

// Cumulative occurrence counts per feature. Counts only grow.
class FrequencyTable {
 public:
  explicit FrequencyTable(RegistryConfig cfg = {}) : cfg_(cfg) {}

  // Adds one count per field-value occurrence in the block.
  void record_occurrences(const DayBlock& block);

  void record(const RawFeature& raw);

  std::uint64_t count(const RawFeature& raw) const;
  std::uint64_t total() const { return total_; }
  std::size_t distinct() const { return counts_.size(); }
  const RegistryConfig& config() const { return cfg_; }

  const std::unordered_map<FeatureKey, std::uint64_t, FeatureKeyHash>& raw_counts() const {
    return counts_;
  }

  FeatureKey make_key(int field_index, const std::string& token) const {
    return FeatureKey{cfg_.per_field_vocab ? field_index : -1, token};
  }

  // Snapshot restore only; bypasses the monotone-update path.
  static FrequencyTable restore(RegistryConfig cfg,
                                const std::vector<std::pair<FeatureKey, std::uint64_t>>& entries);

 private:
  RegistryConfig cfg_;
  std::unordered_map<FeatureKey, std::uint64_t, FeatureKeyHash> counts_;
  std::uint64_t total_ = 0;
};

// Auto-increment feature -> id map. Ids are dense in [1, next_id); id 0 is the
// Others dummy feature and never appears in the map. Entries are never removed
// or reassigned, so the vocabulary only grows across incremental steps.
class AssignmentPolicy {
 public:
  explicit AssignmentPolicy(RegistryConfig cfg = {}) : cfg_(cfg) {}

  // Algorithm: every feature occurring in the block that is not yet mapped and
  // whose cumulative count strictly exceeds the threshold receives the next
  // id, in first-occurrence order within the block. `freq` must already
  // reflect the block. Returns the number of features promoted.
  std::size_t update(const FrequencyTable& freq, const DayBlock& block);

  FeatureId lookup(const RawFeature& raw) const;
  FeatureId lookup_token(int field_index, const std::string& token) const;

  bool contains(int field_index, const std::string& token) const;

  // Number of mapped features (excludes Others).
  std::size_t size() const { return by_id_.size(); }
  FeatureId next_id() const { return static_cast<FeatureId>(by_id_.size() + 1); }
  const RegistryConfig& config() const { return cfg_; }

  // Mapped keys ordered by id (index i holds id i+1).
  const std::vector<FeatureKey>& keys_by_id() const { return by_id_; }

  // Fraction of the prior vocabulary newly promoted by this block.
  // `freq_after` must already reflect the block; `*this` is the prior policy.
  double new_feature_proportion(const FrequencyTable& freq_after, const DayBlock& block) const;

  // Self-describing JSON snapshot carrying cfg, next_id and one
  // (field_index, token, id, count) record per counted feature; mapped
  // features first in id order, unmapped after, sorted by (field, token).
  std::string to_json(const FrequencyTable& freq) const;
  static std::pair<AssignmentPolicy, FrequencyTable> from_json(const std::string& text);

 private:
  void add(const FeatureKey& key);

  RegistryConfig cfg_;
  std::unordered_map<FeatureKey, FeatureId, FeatureKeyHash> mapping_;
  std::vector<FeatureKey> by_id_;
};

}  // namespace incctr
