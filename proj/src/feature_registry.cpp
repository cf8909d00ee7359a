#include "incctr/feature_registry.hpp"

#include <algorithm>

#include "json.hpp"

namespace incctr {

void FrequencyTable::record_occurrences(const DayBlock& block) {
  block.validate();
  const std::size_t n = block.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (int f = 0; f < block.num_fields; ++f) {
      ++counts_[make_key(f, block.token_at(i, f))];
      ++total_;
    }
  }
}

void FrequencyTable::record(const RawFeature& raw) {
  if (raw.field_index < 0) throw DataError("negative field index");
  if (raw.token.empty()) throw DataError("empty token");
  ++counts_[make_key(raw.field_index, raw.token)];
  ++total_;
}

std::uint64_t FrequencyTable::count(const RawFeature& raw) const {
  auto it = counts_.find(make_key(raw.field_index, raw.token));
  return it == counts_.end() ? 0 : it->second;
}

FrequencyTable FrequencyTable::restore(
    RegistryConfig cfg, const std::vector<std::pair<FeatureKey, std::uint64_t>>& entries) {
  FrequencyTable freq(cfg);
  for (const auto& [key, count] : entries) {
    freq.counts_[key] = count;
    freq.total_ += count;
  }
  return freq;
}

std::size_t AssignmentPolicy::update(const FrequencyTable& freq, const DayBlock& block) {
  block.validate();
  const std::size_t before = by_id_.size();
  const std::size_t n = block.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (int f = 0; f < block.num_fields; ++f) {
      const std::string& token = block.token_at(i, f);
      if (token == kOthersToken) continue;
      FeatureKey key{cfg_.per_field_vocab ? f : -1, token};
      if (mapping_.count(key)) continue;
      auto it = freq.raw_counts().find(key);
      std::uint64_t count = it == freq.raw_counts().end() ? 0 : it->second;
      if (count > cfg_.threshold) add(key);
    }
  }
  return by_id_.size() - before;
}

void AssignmentPolicy::add(const FeatureKey& key) {
  FeatureId id = next_id();
  mapping_.emplace(key, id);
  by_id_.push_back(key);
}

FeatureId AssignmentPolicy::lookup(const RawFeature& raw) const {
  return lookup_token(raw.field_index, raw.token);
}

FeatureId AssignmentPolicy::lookup_token(int field_index, const std::string& token) const {
  auto it = mapping_.find(FeatureKey{cfg_.per_field_vocab ? field_index : -1, token});
  return it == mapping_.end() ? kOthersId : it->second;
}

bool AssignmentPolicy::contains(int field_index, const std::string& token) const {
  return mapping_.count(FeatureKey{cfg_.per_field_vocab ? field_index : -1, token}) > 0;
}

double AssignmentPolicy::new_feature_proportion(const FrequencyTable& freq_after,
                                                const DayBlock& block) const {
  if (by_id_.empty()) throw DataError("new-feature proportion undefined for empty policy");
  block.validate();
  std::unordered_map<FeatureKey, bool, FeatureKeyHash> seen;
  std::size_t newly_eligible = 0;
  const std::size_t n = block.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (int f = 0; f < block.num_fields; ++f) {
      const std::string& token = block.token_at(i, f);
      if (token == kOthersToken) continue;
      FeatureKey key{cfg_.per_field_vocab ? f : -1, token};
      if (mapping_.count(key)) continue;
      if (!seen.emplace(key, true).second) continue;
      auto it = freq_after.raw_counts().find(key);
      if (it != freq_after.raw_counts().end() && it->second > cfg_.threshold) ++newly_eligible;
    }
  }
  return static_cast<double>(newly_eligible) / static_cast<double>(by_id_.size());
}

std::string AssignmentPolicy::to_json(const FrequencyTable& freq) const {
  nlohmann::json doc;
  doc["format"] = "incctr-policy";
  doc["version"] = 1;
  doc["config"]["threshold"] = cfg_.threshold;
  doc["config"]["per_field_vocab"] = cfg_.per_field_vocab;
  doc["next_id"] = next_id();

  nlohmann::json records = nlohmann::json::array();
  for (std::size_t i = 0; i < by_id_.size(); ++i) {
    const FeatureKey& key = by_id_[i];
    auto it = freq.raw_counts().find(key);
    std::uint64_t count = it == freq.raw_counts().end() ? 0 : it->second;
    records.push_back({key.field, key.token, i + 1, count});
  }
  std::vector<const FeatureKey*> unmapped;
  for (const auto& [key, count] : freq.raw_counts())
    if (!mapping_.count(key)) unmapped.push_back(&key);
  std::sort(unmapped.begin(), unmapped.end(), [](const FeatureKey* a, const FeatureKey* b) {
    return a->field != b->field ? a->field < b->field : a->token < b->token;
  });
  for (const FeatureKey* key : unmapped)
    records.push_back({key->field, key->token, 0, freq.raw_counts().at(*key)});
  doc["records"] = std::move(records);
  return doc.dump();
}

std::pair<AssignmentPolicy, FrequencyTable> AssignmentPolicy::from_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad policy snapshot: ") + e.what());
  }
  if (doc.value("format", "") != "incctr-policy" || doc.value("version", 0) != 1)
    throw DataError("unrecognized policy snapshot header");

  RegistryConfig cfg;
  cfg.threshold = doc.at("config").at("threshold").get<std::uint64_t>();
  cfg.per_field_vocab = doc.at("config").at("per_field_vocab").get<bool>();

  AssignmentPolicy policy(cfg);
  std::vector<std::pair<FeatureKey, std::uint64_t>> counts;
  std::vector<std::pair<FeatureId, FeatureKey>> mapped;
  for (const auto& rec : doc.at("records")) {
    FeatureKey key{rec.at(0).get<std::int32_t>(), rec.at(1).get<std::string>()};
    FeatureId id = rec.at(2).get<FeatureId>();
    std::uint64_t count = rec.at(3).get<std::uint64_t>();
    counts.emplace_back(key, count);
    if (id != kOthersId) mapped.emplace_back(id, std::move(key));
  }
  std::sort(mapped.begin(), mapped.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  for (std::size_t i = 0; i < mapped.size(); ++i) {
    if (mapped[i].first != i + 1) throw DataError("policy snapshot ids are not dense");
    policy.add(mapped[i].second);
  }
  if (policy.next_id() != doc.at("next_id").get<FeatureId>())
    throw DataError("policy snapshot next_id mismatch");
  return {std::move(policy), FrequencyTable::restore(cfg, counts)};
}

}  // namespace incctr
