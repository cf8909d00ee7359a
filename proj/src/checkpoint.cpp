#include <string>

#include "incctr/serialize.hpp"
#include "incctr/trainer.hpp"

namespace incctr {

namespace {

constexpr char kCkptMagic[8] = {'I', 'N', 'C', 'C', 'K', 'P', 'T', '1'};

void write_vec(BinaryWriter& w, const std::vector<double>& v) {
  w.u64(v.size());
  for (double x : v) w.f64(x);
}

std::vector<double> read_vec(BinaryReader& r) {
  std::vector<double> v(r.u64());
  for (double& x : v) x = r.f64();
  return v;
}

void write_matrix(BinaryWriter& w, const Matrix& m) {
  w.u32(static_cast<std::uint32_t>(m.rows));
  w.u32(static_cast<std::uint32_t>(m.cols));
  for (double x : m.a) w.f64(x);
}

Matrix read_matrix(BinaryReader& r) {
  const int rows = static_cast<int>(r.u32());
  const int cols = static_cast<int>(r.u32());
  Matrix m(rows, cols);
  for (double& x : m.a) x = r.f64();
  return m;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  BinaryWriter w;
  w.u32(static_cast<std::uint32_t>(ckpt.step_t));
  w.u32(static_cast<std::uint32_t>(ckpt.train_begin_day));
  w.u32(static_cast<std::uint32_t>(ckpt.train_end_day));
  w.str(ckpt.policy.to_json(ckpt.freq));
  w.str(ckpt.train_config.to_json());

  const ModelState& m = ckpt.model;
  w.u32(static_cast<std::uint32_t>(m.config.fields));
  w.u32(static_cast<std::uint32_t>(m.config.cross_layers));
  w.u32(static_cast<std::uint32_t>(m.config.mlp_hidden.size()));
  for (int h : m.config.mlp_hidden) w.u32(static_cast<std::uint32_t>(h));
  w.u64(m.config.seed);

  w.u32(static_cast<std::uint32_t>(m.embeddings.k()));
  w.u64(m.embeddings.rows());
  for (double x : m.embeddings.values()) w.f64(x);
  w.u64(m.embeddings.new_ids().size());
  for (FeatureId id : m.embeddings.new_ids()) w.u32(id);

  w.u32(static_cast<std::uint32_t>(m.cross_w.size()));
  for (std::size_t l = 0; l < m.cross_w.size(); ++l) {
    write_vec(w, m.cross_w[l]);
    write_vec(w, m.cross_b[l]);
  }
  w.u32(static_cast<std::uint32_t>(m.mlp_w.size()));
  for (std::size_t p = 0; p < m.mlp_w.size(); ++p) {
    write_matrix(w, m.mlp_w[p]);
    write_vec(w, m.mlp_b[p]);
  }
  write_vec(w, m.head_w);
  w.f64(m.head_b);

  write_container(path, kCkptMagic, 1, w.buffer());
}

Checkpoint load_checkpoint(const std::string& path) {
  BinaryReader r(read_container(path, kCkptMagic, 1));
  Checkpoint ckpt;
  ckpt.step_t = static_cast<int>(r.u32());
  ckpt.train_begin_day = static_cast<int>(r.u32());
  ckpt.train_end_day = static_cast<int>(r.u32());
  auto [policy, freq] = AssignmentPolicy::from_json(r.str());
  ckpt.policy = std::move(policy);
  ckpt.freq = std::move(freq);
  ckpt.train_config = TrainConfig::from_json(r.str());

  ModelState& m = ckpt.model;
  m.config.fields = static_cast<int>(r.u32());
  m.config.cross_layers = static_cast<int>(r.u32());
  const std::uint32_t n_hidden = r.u32();
  m.config.mlp_hidden.clear();
  for (std::uint32_t i = 0; i < n_hidden; ++i) m.config.mlp_hidden.push_back(static_cast<int>(r.u32()));
  m.config.seed = r.u64();

  const int k = static_cast<int>(r.u32());
  const std::uint64_t rows = r.u64();
  m.embeddings = EmbeddingTable(rows, k);
  for (double& x : m.embeddings.values()) x = r.f64();
  std::vector<FeatureId> new_ids(r.u64());
  for (FeatureId& id : new_ids) id = r.u32();
  m.embeddings.set_new_ids(std::move(new_ids));

  const std::uint32_t n_cross = r.u32();
  for (std::uint32_t l = 0; l < n_cross; ++l) {
    m.cross_w.push_back(read_vec(r));
    m.cross_b.push_back(read_vec(r));
  }
  const std::uint32_t n_mlp = r.u32();
  for (std::uint32_t p = 0; p < n_mlp; ++p) {
    m.mlp_w.push_back(read_matrix(r));
    m.mlp_b.push_back(read_vec(r));
  }
  m.head_w = read_vec(r);
  m.head_b = r.f64();

  if (!r.exhausted()) throw DataError("trailing bytes in " + path);
  if (m.embeddings.rows() != ckpt.policy.next_id())
    throw DataError("checkpoint embedding rows disagree with policy size");
  return ckpt;
}

}  // namespace incctr
