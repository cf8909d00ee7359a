#include "incctr/embedding_store.hpp"

#include "incctr/rng.hpp"

namespace incctr {

namespace {

void fill_random_rows(EmbeddingTable& table, FeatureId first, FeatureId end, const InitConfig& cfg) {
  Rng rng(cfg.seed);
  const double scale = cfg.scale_or_default();
  for (FeatureId id = first; id < end; ++id)
    for (double& v : table.row(id)) v = rng.uniform_signed(scale);
}

}  // namespace

EmbeddingTable warm_start(const EmbeddingTable& prev, const AssignmentPolicy& policy_new,
                          const InitConfig& cfg) {
  if (prev.k() != cfg.k)
    throw DataError("embedding size mismatch: table k=" + std::to_string(prev.k()) +
                    ", config k=" + std::to_string(cfg.k));
  const std::size_t new_rows = policy_new.next_id();
  if (new_rows < prev.rows())
    throw DataError("policy shrank from " + std::to_string(prev.rows() - 1) + " to " +
                    std::to_string(new_rows - 1) + " features; vocabulary is monotone");

  EmbeddingTable table(new_rows, cfg.k);
  std::copy(prev.values().begin(), prev.values().end(), table.values().begin());
  fill_random_rows(table, static_cast<FeatureId>(prev.rows()), static_cast<FeatureId>(new_rows),
                   cfg);

  std::vector<FeatureId> fresh;
  for (std::size_t id = prev.rows(); id < new_rows; ++id)
    fresh.push_back(static_cast<FeatureId>(id));
  table.set_new_ids(std::move(fresh));
  return table;
}

EmbeddingTable cold_start(const AssignmentPolicy& policy, const InitConfig& cfg) {
  const std::size_t rows = policy.next_id();
  EmbeddingTable table(rows, cfg.k);
  fill_random_rows(table, 0, static_cast<FeatureId>(rows), cfg);

  std::vector<FeatureId> fresh(rows);
  for (std::size_t id = 0; id < rows; ++id) fresh[id] = static_cast<FeatureId>(id);
  table.set_new_ids(std::move(fresh));
  return table;
}

std::vector<double> field_embed(const EmbeddingTable& table,
                                const std::vector<std::vector<FeatureId>>& ids_per_field) {
  const int k = table.k();
  std::vector<double> out(ids_per_field.size() * static_cast<std::size_t>(k), 0.0);
  for (std::size_t f = 0; f < ids_per_field.size(); ++f) {
    const auto& ids = ids_per_field[f];
    if (ids.empty()) throw DataError("field " + std::to_string(f) + " has no feature ids");
    double* dst = out.data() + f * static_cast<std::size_t>(k);
    for (FeatureId id : ids) {
      if (id >= table.rows())
        throw DataError("feature id " + std::to_string(id) + " out of range (" +
                        std::to_string(table.rows()) + " rows)");
      auto src = table.row(id);
      for (int j = 0; j < k; ++j) dst[j] += src[j];
    }
    const double inv = 1.0 / static_cast<double>(ids.size());
    for (int j = 0; j < k; ++j) dst[j] *= inv;
  }
  return out;
}

}  // namespace incctr
