#include "incctr/ctr_model.hpp"

#include <cmath>

#include "incctr/rng.hpp"

namespace incctr {

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double clamp_pred(double p, double eps) {
  if (p < eps) return eps;
  if (p > 1.0 - eps) return 1.0 - eps;
  return p;
}

void check_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw NumericError(std::string("non-finite value in ") + what);
}

}  // namespace

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

ModelState ModelState::init(EmbeddingTable embeddings, const ModelConfig& cfg) {
  ModelState state;
  state.embeddings = std::move(embeddings);
  state.config = cfg;
  const int d = cfg.fields * state.embeddings.k();

  Rng rng(splitmix64(cfg.seed ^ 0x6e657477UL));
  auto draw = [&](int fan_in) { return rng.uniform_signed(1.0 / std::sqrt(static_cast<double>(fan_in))); };

  for (int l = 0; l < cfg.cross_layers; ++l) {
    std::vector<double> w(d), b(d, 0.0);
    for (double& v : w) v = draw(d);
    state.cross_w.push_back(std::move(w));
    state.cross_b.push_back(std::move(b));
  }

  int prev = d;
  for (int h : cfg.mlp_hidden) {
    Matrix w(h, prev);
    for (double& v : w.a) v = draw(prev);
    state.mlp_w.push_back(std::move(w));
    // Small random biases keep pre-activations off the exact ReLU kink.
    std::vector<double> b(h);
    for (double& v : b) v = draw(prev);
    state.mlp_b.push_back(std::move(b));
    prev = h;
  }

  const int head_dim = d + (cfg.mlp_hidden.empty() ? d : cfg.mlp_hidden.back());
  state.head_w.resize(head_dim);
  for (double& v : state.head_w) v = draw(head_dim);
  state.head_b = 0.0;
  return state;
}

Gradients Gradients::zeros_like(const ModelState& state) {
  Gradients g;
  for (const auto& w : state.cross_w) g.cross_w.emplace_back(w.size(), 0.0);
  for (const auto& b : state.cross_b) g.cross_b.emplace_back(b.size(), 0.0);
  for (const auto& w : state.mlp_w) g.mlp_w.emplace_back(w.rows, w.cols);
  for (const auto& b : state.mlp_b) g.mlp_b.emplace_back(b.size(), 0.0);
  g.head_w.assign(state.head_w.size(), 0.0);
  g.head_b = 0.0;
  return g;
}

std::vector<ForwardResult> forward(const ModelState& state, const ResolvedBatch& batch,
                                   std::vector<ForwardCache>* caches) {
  const int m = state.config.fields;
  const int k = state.embeddings.k();
  const int d = m * k;
  const int n_cross = static_cast<int>(state.cross_w.size());
  const int n_mlp = static_cast<int>(state.mlp_w.size());
  const std::size_t rows = state.embeddings.rows();

  if (batch.num_fields != m)
    throw DataError("batch has " + std::to_string(batch.num_fields) + " fields, model expects " +
                    std::to_string(m));

  std::vector<ForwardResult> results(batch.size());
  if (caches) caches->assign(batch.size(), ForwardCache{});

  std::vector<double> x0(d), xc(d), xn(d), h, a;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const FeatureId* ids = batch.sample_ids(i);
    for (int f = 0; f < m; ++f) {
      if (ids[f] >= rows)
        throw DataError("feature id " + std::to_string(ids[f]) + " out of embedding range");
      auto row = state.embeddings.row(ids[f]);
      for (int j = 0; j < k; ++j) x0[f * k + j] = row[j];
    }

    ForwardCache* cache = caches ? &(*caches)[i] : nullptr;
    if (cache) {
      cache->x0 = x0;
      cache->cross_x.clear();
      cache->cross_dot.clear();
      cache->mlp_pre.clear();
      cache->mlp_act.clear();
    }

    // Cross network: x_{l+1} = x0 * (x_l . w_l) + b_l + x_l
    xc = x0;
    for (int l = 0; l < n_cross; ++l) {
      if (cache) cache->cross_x.push_back(xc);
      const double s = dot(xc, state.cross_w[l]);
      if (cache) cache->cross_dot.push_back(s);
      const auto& b = state.cross_b[l];
      for (int j = 0; j < d; ++j) xn[j] = x0[j] * s + b[j] + xc[j];
      xc.swap(xn);
    }
    if (cache) cache->cross_x.push_back(xc);

    // MLP tower on x0.
    h = x0;
    for (int p = 0; p < n_mlp; ++p) {
      const Matrix& w = state.mlp_w[p];
      a.assign(w.rows, 0.0);
      for (int r = 0; r < w.rows; ++r) {
        const double* wr = w.row_ptr(r);
        double s = state.mlp_b[p][r];
        for (int c = 0; c < w.cols; ++c) s += wr[c] * h[c];
        a[r] = s;
      }
      if (cache) cache->mlp_pre.push_back(a);
      for (double& v : a) v = v > 0.0 ? v : 0.0;
      if (cache) cache->mlp_act.push_back(a);
      h = a;
    }

    double z = state.head_b;
    for (int j = 0; j < d; ++j) z += state.head_w[j] * xc[j];
    for (std::size_t j = 0; j < h.size(); ++j) z += state.head_w[d + j] * h[j];
    check_finite(z, "logit");

    results[i].logit = z;
    results[i].prediction = sigmoid(z);
  }
  return results;
}

double ce_loss(double label, double prediction, double epsilon) {
  const double p = clamp_pred(prediction, epsilon);
  return -label * std::log(p) - (1.0 - label) * std::log(1.0 - p);
}

double batch_ce(const std::vector<std::uint8_t>& labels, const std::vector<ForwardResult>& results,
                double epsilon) {
  if (labels.size() != results.size()) throw DataError("label/prediction length mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i)
    sum += ce_loss(labels[i], results[i].prediction, epsilon);
  return sum;
}

double kd_loss(const std::vector<double>& student_logits, const std::vector<double>& teacher_logits,
               const LossConfig& cfg) {
  if (student_logits.size() != teacher_logits.size())
    throw DataError("student/teacher logit length mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < student_logits.size(); ++i) {
    const double ps = sigmoid(student_logits[i] / cfg.tau);
    const double pt = sigmoid(teacher_logits[i] / cfg.tau);
    sum += ce_loss(pt, ps, cfg.epsilon);
  }
  return sum;
}

double l2_penalty(const ModelState& state, const ResolvedBatch& batch, const LossConfig& cfg) {
  if (cfg.l2 == 0.0) return 0.0;
  double sum = 0.0;
  for (const auto& w : state.cross_w) sum += dot(w, w);
  for (const auto& b : state.cross_b) sum += dot(b, b);
  for (const auto& w : state.mlp_w)
    for (double v : w.a) sum += v * v;
  for (const auto& b : state.mlp_b) sum += dot(b, b);
  sum += dot(state.head_w, state.head_w);
  sum += state.head_b * state.head_b;

  std::unordered_map<FeatureId, bool> touched;
  for (FeatureId id : batch.ids) touched.emplace(id, true);
  for (const auto& [id, _] : touched) {
    auto row = state.embeddings.row(id);
    for (double v : row) sum += v * v;
  }
  return cfg.l2 * sum;
}

double ft_loss(const ModelState& state, const ResolvedBatch& batch,
               const std::vector<ForwardResult>& results, const LossConfig& cfg) {
  return batch_ce(batch.labels, results, cfg.epsilon) + l2_penalty(state, batch, cfg);
}

double combined_loss(const ModelState& state, const ResolvedBatch& batch,
                     const std::vector<ForwardResult>& results,
                     const std::vector<double>& teacher_logits, const LossConfig& cfg) {
  if (teacher_logits.size() != batch.size())
    throw DataError("teacher logits missing or sized wrong for KD objective");
  std::vector<double> student_logits(results.size());
  for (std::size_t i = 0; i < results.size(); ++i) student_logits[i] = results[i].logit;
  return cfg.lambda * batch_ce(batch.labels, results, cfg.epsilon) +
         kd_loss(student_logits, teacher_logits, cfg) + l2_penalty(state, batch, cfg);
}

Gradients backward(const ModelState& state, const ResolvedBatch& batch,
                   const std::vector<ForwardResult>& results,
                   const std::vector<ForwardCache>& caches,
                   const std::vector<double>* teacher_logits, const LossConfig& cfg) {
  const int m = state.config.fields;
  const int k = state.embeddings.k();
  const int d = m * k;
  const int n_cross = static_cast<int>(state.cross_w.size());
  const int n_mlp = static_cast<int>(state.mlp_w.size());
  const bool kd_mode = teacher_logits != nullptr;

  if (caches.size() != batch.size()) throw DataError("forward caches missing for backward");
  if (kd_mode && teacher_logits->size() != batch.size())
    throw DataError("teacher logits missing or sized wrong for KD objective");

  Gradients g = Gradients::zeros_like(state);

  std::vector<double> g_x0(d), g_c(d), g_h, g_a;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const ForwardCache& cache = caches[i];
    const double y = batch.labels[i];
    const double yhat = results[i].prediction;

    double gz;
    if (kd_mode) {
      const double ps = sigmoid(results[i].logit / cfg.tau);
      const double pt = sigmoid((*teacher_logits)[i] / cfg.tau);
      gz = cfg.lambda * (yhat - y) + (ps - pt) / cfg.tau;
    } else {
      gz = yhat - y;
    }

    // Head.
    const auto& cross_out = cache.cross_x[n_cross];
    const auto& mlp_out = n_mlp > 0 ? cache.mlp_act.back() : cache.x0;
    for (int j = 0; j < d; ++j) g.head_w[j] += gz * cross_out[j];
    for (std::size_t j = 0; j < mlp_out.size(); ++j) g.head_w[d + j] += gz * mlp_out[j];
    g.head_b += gz;

    std::fill(g_x0.begin(), g_x0.end(), 0.0);

    // MLP backward.
    g_h.assign(mlp_out.size(), 0.0);
    for (std::size_t j = 0; j < mlp_out.size(); ++j) g_h[j] = gz * state.head_w[d + j];
    for (int p = n_mlp - 1; p >= 0; --p) {
      const Matrix& w = state.mlp_w[p];
      g_a = g_h;
      for (int r = 0; r < w.rows; ++r)
        if (cache.mlp_pre[p][r] <= 0.0) g_a[r] = 0.0;
      const auto& input = p == 0 ? cache.x0 : cache.mlp_act[p - 1];
      Matrix& gw = g.mlp_w[p];
      for (int r = 0; r < w.rows; ++r) {
        const double gr = g_a[r];
        if (gr == 0.0) continue;
        double* gwr = gw.row_ptr(r);
        for (int c = 0; c < w.cols; ++c) gwr[c] += gr * input[c];
        g.mlp_b[p][r] += gr;
      }
      g_h.assign(w.cols, 0.0);
      for (int r = 0; r < w.rows; ++r) {
        const double gr = g_a[r];
        if (gr == 0.0) continue;
        const double* wr = w.row_ptr(r);
        for (int c = 0; c < w.cols; ++c) g_h[c] += gr * wr[c];
      }
    }
    if (n_mlp > 0)
      for (int j = 0; j < d; ++j) g_x0[j] += g_h[j];
    else
      for (std::size_t j = 0; j < mlp_out.size(); ++j) g_x0[j] += gz * state.head_w[d + j];

    // Cross backward.
    for (int j = 0; j < d; ++j) g_c[j] = gz * state.head_w[j];
    for (int l = n_cross - 1; l >= 0; --l) {
      const double s = cache.cross_dot[l];
      const auto& xl = cache.cross_x[l];
      const double gdot_x0 = dot(g_c, cache.x0);
      for (int j = 0; j < d; ++j) {
        g.cross_b[l][j] += g_c[j];
        g.cross_w[l][j] += gdot_x0 * xl[j];
        g_x0[j] += g_c[j] * s;  // direct x0 term, before g_c is updated
      }
      for (int j = 0; j < d; ++j) g_c[j] += gdot_x0 * state.cross_w[l][j];
    }
    for (int j = 0; j < d; ++j) g_x0[j] += g_c[j];

    // Embedding rows (univalent fields: one id per field).
    const FeatureId* ids = batch.sample_ids(i);
    for (int f = 0; f < m; ++f) {
      auto [it, inserted] = g.embedding_rows.try_emplace(ids[f]);
      if (inserted) it->second.assign(k, 0.0);
      for (int j = 0; j < k; ++j) it->second[j] += g_x0[f * k + j];
    }
  }

  // L2 term.
  if (cfg.l2 != 0.0) {
    const double c2 = 2.0 * cfg.l2;
    for (int l = 0; l < n_cross; ++l)
      for (int j = 0; j < d; ++j) {
        g.cross_w[l][j] += c2 * state.cross_w[l][j];
        g.cross_b[l][j] += c2 * state.cross_b[l][j];
      }
    for (int p = 0; p < n_mlp; ++p) {
      for (std::size_t j = 0; j < g.mlp_w[p].a.size(); ++j)
        g.mlp_w[p].a[j] += c2 * state.mlp_w[p].a[j];
      for (std::size_t j = 0; j < g.mlp_b[p].size(); ++j)
        g.mlp_b[p][j] += c2 * state.mlp_b[p][j];
    }
    for (std::size_t j = 0; j < g.head_w.size(); ++j) g.head_w[j] += c2 * state.head_w[j];
    g.head_b += c2 * state.head_b;
    for (auto& [id, grow] : g.embedding_rows) {
      auto row = state.embeddings.row(id);
      for (int j = 0; j < k; ++j) grow[j] += c2 * row[j];
    }
  }

  for (const auto& [id, grow] : g.embedding_rows)
    for (double v : grow)
      if (!std::isfinite(v))
        throw NumericError("non-finite gradient for embedding row " + std::to_string(id));
  for (double v : g.head_w) check_finite(v, "head gradient");

  return g;
}

}  // namespace incctr
