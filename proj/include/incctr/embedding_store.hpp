#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "incctr/feature_registry.hpp"
#include "incctr/types.hpp"

namespace incctr {

struct InitConfig {
  int k = 16;
  // Fresh rows are drawn uniform in [-random_scale, +random_scale].
  // Defaults to 1/sqrt(k) so initial dot products stay scale-free in k.
  double random_scale = 0.0;
  std::uint64_t seed = 0;

  double scale_or_default() const {
    return random_scale > 0.0 ? random_scale : 1.0 / std::sqrt(static_cast<double>(k));
  }
};

// Dense (n+1) x k embedding matrix. Row 0 is the Others dummy feature; row i
// holds feature id i. new_ids marks the rows freshly initialized by the most
// recent warm/cold start.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  EmbeddingTable(std::size_t rows, int k) : k_(k), data_(rows * static_cast<std::size_t>(k), 0.0) {}

  int k() const { return k_; }
  std::size_t rows() const { return k_ == 0 ? 0 : data_.size() / static_cast<std::size_t>(k_); }

  std::span<double> row(FeatureId id) {
    return {data_.data() + static_cast<std::size_t>(id) * k_, static_cast<std::size_t>(k_)};
  }
  std::span<const double> row(FeatureId id) const {
    return {data_.data() + static_cast<std::size_t>(id) * k_, static_cast<std::size_t>(k_)};
  }

  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  // Fresh rows always form a contiguous id suffix, so new_ids is sorted.
  const std::vector<FeatureId>& new_ids() const { return new_ids_; }
  void set_new_ids(std::vector<FeatureId> ids) { new_ids_ = std::move(ids); }
  bool is_new(FeatureId id) const { return !new_ids_.empty() && id >= new_ids_.front(); }

 private:
  int k_ = 0;
  std::vector<double> data_;
  std::vector<FeatureId> new_ids_;
};

// Copies every pre-existing row bit-exactly and draws rows for newly assigned
// ids from the seeded generator. Throws DataError on k mismatch or if the new
// policy is smaller than the previous table (the vocabulary never shrinks).
EmbeddingTable warm_start(const EmbeddingTable& prev, const AssignmentPolicy& policy_new,
                          const InitConfig& cfg);

// All rows random, new_ids covers every id including Others.
EmbeddingTable cold_start(const AssignmentPolicy& policy, const InitConfig& cfg);

// Per-field instance embedding: univalent fields take their row verbatim,
// multivalent fields average their rows. Output is m*k row-major.
std::vector<double> field_embed(const EmbeddingTable& table,
                                const std::vector<std::vector<FeatureId>>& ids_per_field);

}  // namespace incctr
