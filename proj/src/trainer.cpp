#include "incctr/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <thread>

#include "json.hpp"

#include "incctr/rng.hpp"

namespace incctr {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

}  // namespace

const char* train_mode_name(TrainMode mode) {
  switch (mode) {
    case TrainMode::batch: return "batch";
    case TrainMode::ft: return "ft";
    case TrainMode::kd_batch: return "kd_batch";
    case TrainMode::kd_self: return "kd_self";
  }
  return "?";
}

TrainMode train_mode_from_name(const std::string& name) {
  if (name == "batch") return TrainMode::batch;
  if (name == "ft") return TrainMode::ft;
  if (name == "kd_batch") return TrainMode::kd_batch;
  if (name == "kd_self") return TrainMode::kd_self;
  throw ConfigError("unknown train mode '" + name + "'");
}

void TrainConfig::validate() const {
  if (epoch_cap < 1) throw ConfigError("epoch_cap must be >= 1");
  if (kd_epoch_ceiling < epoch_cap) throw ConfigError("kd_epoch_ceiling must be >= epoch_cap");
  if (lr_existing < 0 || lr_new < 0 || lr_network < 0)
    throw ConfigError("learning rates must be non-negative");
  if (lr_existing > lr_new)
    throw ConfigError("lr_existing must not exceed lr_new (existing features train slower)");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (loss.tau <= 0) throw ConfigError("tau must be positive");
  if (loss.lambda < 0) throw ConfigError("lambda must be non-negative");
  if (loss.l2 < 0) throw ConfigError("l2 must be non-negative");
  if (loss.epsilon <= 0 || loss.epsilon >= 0.5) throw ConfigError("epsilon must be in (0, 0.5)");
}

std::string TrainConfig::to_json() const {
  nlohmann::json doc;
  doc["mode"] = train_mode_name(mode);
  doc["epoch_cap"] = epoch_cap;
  doc["kd_epoch_ceiling"] = kd_epoch_ceiling;
  doc["lr_existing"] = lr_existing;
  doc["lr_new"] = lr_new;
  doc["lr_network"] = lr_network;
  doc["batch_size"] = batch_size;
  doc["optimizer"] = optimizer == OptimizerKind::adam ? "adam" : "sgd";
  doc["adam"] = {{"beta1", adam.beta1}, {"beta2", adam.beta2}, {"eps", adam.eps}};
  doc["loss"] = {{"tau", loss.tau},
                 {"lambda", loss.lambda},
                 {"l2", loss.l2},
                 {"epsilon", loss.epsilon}};
  doc["expand_features"] = expand_features;
  doc["inherit_moments"] = inherit_moments;
  doc["seed"] = seed;
  return doc.dump();
}

TrainConfig TrainConfig::from_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad train config: ") + e.what());
  }
  TrainConfig cfg;
  cfg.mode = train_mode_from_name(doc.at("mode").get<std::string>());
  cfg.epoch_cap = doc.at("epoch_cap").get<int>();
  cfg.kd_epoch_ceiling = doc.at("kd_epoch_ceiling").get<int>();
  cfg.lr_existing = doc.at("lr_existing").get<double>();
  cfg.lr_new = doc.at("lr_new").get<double>();
  cfg.lr_network = doc.at("lr_network").get<double>();
  cfg.batch_size = doc.at("batch_size").get<int>();
  cfg.optimizer =
      doc.at("optimizer").get<std::string>() == "adam" ? OptimizerKind::adam : OptimizerKind::sgd;
  cfg.adam.beta1 = doc.at("adam").at("beta1").get<double>();
  cfg.adam.beta2 = doc.at("adam").at("beta2").get<double>();
  cfg.adam.eps = doc.at("adam").at("eps").get<double>();
  cfg.loss.tau = doc.at("loss").at("tau").get<double>();
  cfg.loss.lambda = doc.at("loss").at("lambda").get<double>();
  cfg.loss.l2 = doc.at("loss").at("l2").get<double>();
  cfg.loss.epsilon = doc.at("loss").at("epsilon").get<double>();
  cfg.expand_features = doc.at("expand_features").get<bool>();
  cfg.inherit_moments = doc.at("inherit_moments").get<bool>();
  cfg.seed = doc.at("seed").get<std::uint64_t>();
  return cfg;
}

Moments Moments::zeros_like(const ModelState& state) {
  Moments mo;
  mo.emb_m.assign(state.embeddings.values().size(), 0.0);
  mo.emb_v.assign(state.embeddings.values().size(), 0.0);
  for (const auto& w : state.cross_w) {
    mo.cw_m.emplace_back(w.size(), 0.0);
    mo.cw_v.emplace_back(w.size(), 0.0);
  }
  for (const auto& b : state.cross_b) {
    mo.cb_m.emplace_back(b.size(), 0.0);
    mo.cb_v.emplace_back(b.size(), 0.0);
  }
  for (const auto& w : state.mlp_w) {
    mo.mw_m.emplace_back(w.rows, w.cols);
    mo.mw_v.emplace_back(w.rows, w.cols);
  }
  for (const auto& b : state.mlp_b) {
    mo.mb_m.emplace_back(b.size(), 0.0);
    mo.mb_v.emplace_back(b.size(), 0.0);
  }
  mo.hw_m.assign(state.head_w.size(), 0.0);
  mo.hw_v.assign(state.head_w.size(), 0.0);
  return mo;
}

void Moments::grow_embeddings(std::size_t values_size) {
  if (values_size < emb_m.size()) throw DataError("embedding moments cannot shrink");
  emb_m.resize(values_size, 0.0);
  emb_v.resize(values_size, 0.0);
}

ResolvedBatch resolve(const AssignmentPolicy& policy, const DayBlock& block) {
  block.validate();
  ResolvedBatch rb;
  rb.num_fields = block.num_fields;
  rb.labels = block.labels;
  rb.ids.reserve(block.tokens.size());
  const std::size_t n = block.size();
  for (std::size_t i = 0; i < n; ++i)
    for (int f = 0; f < block.num_fields; ++f)
      rb.ids.push_back(policy.lookup_token(f, block.token_at(i, f)));
  return rb;
}

ResolvedBatch resolve_many(const AssignmentPolicy& policy,
                           const std::vector<const DayBlock*>& blocks) {
  if (blocks.empty()) throw DataError("no blocks to resolve");
  ResolvedBatch rb;
  rb.num_fields = blocks.front()->num_fields;
  for (const DayBlock* block : blocks) {
    ResolvedBatch one = resolve(policy, *block);
    if (one.num_fields != rb.num_fields) throw DataError("blocks disagree on field count");
    rb.labels.insert(rb.labels.end(), one.labels.begin(), one.labels.end());
    rb.ids.insert(rb.ids.end(), one.ids.begin(), one.ids.end());
  }
  return rb;
}

InferenceResult infer_resolved(const ModelState& model, const ResolvedBatch& batch) {
  std::vector<ForwardResult> results = forward(model, batch);
  InferenceResult out;
  out.logits.reserve(results.size());
  out.predictions.reserve(results.size());
  for (const auto& r : results) {
    out.logits.push_back(r.logit);
    out.predictions.push_back(r.prediction);
  }
  return out;
}

InferenceResult inference(const Checkpoint& ckpt, const DayBlock& block) {
  return infer_resolved(ckpt.model, resolve(ckpt.policy, block));
}

namespace {

inline void adam_step(double& param, double grad, double& m, double& v, double lr,
                      const AdamParams& a, double bc1, double bc2) {
  m = a.beta1 * m + (1.0 - a.beta1) * grad;
  v = a.beta2 * v + (1.0 - a.beta2) * grad * grad;
  param -= lr * (m / bc1) / (std::sqrt(v / bc2) + a.eps);
}

}  // namespace

void apply_gradients(ModelState& model, const Gradients& grads, Moments& mo,
                     const TrainConfig& cfg) {
  const int k = model.embeddings.k();
  ++mo.t;

  if (cfg.optimizer == OptimizerKind::sgd) {
    for (const auto& [id, grow] : grads.embedding_rows) {
      const double lr = model.embeddings.is_new(id) ? cfg.lr_new : cfg.lr_existing;
      auto row = model.embeddings.row(id);
      for (int j = 0; j < k; ++j) row[j] -= lr * grow[j];
    }
    const double lr = cfg.lr_network;
    for (std::size_t l = 0; l < model.cross_w.size(); ++l)
      for (std::size_t j = 0; j < model.cross_w[l].size(); ++j) {
        model.cross_w[l][j] -= lr * grads.cross_w[l][j];
        model.cross_b[l][j] -= lr * grads.cross_b[l][j];
      }
    for (std::size_t p = 0; p < model.mlp_w.size(); ++p) {
      for (std::size_t j = 0; j < model.mlp_w[p].a.size(); ++j)
        model.mlp_w[p].a[j] -= lr * grads.mlp_w[p].a[j];
      for (std::size_t j = 0; j < model.mlp_b[p].size(); ++j)
        model.mlp_b[p][j] -= lr * grads.mlp_b[p][j];
    }
    for (std::size_t j = 0; j < model.head_w.size(); ++j) model.head_w[j] -= lr * grads.head_w[j];
    model.head_b -= lr * grads.head_b;
    return;
  }

  const double bc1 = 1.0 - std::pow(cfg.adam.beta1, static_cast<double>(mo.t));
  const double bc2 = 1.0 - std::pow(cfg.adam.beta2, static_cast<double>(mo.t));

  // Lazy sparse Adam over touched embedding rows.
  for (const auto& [id, grow] : grads.embedding_rows) {
    const double lr = model.embeddings.is_new(id) ? cfg.lr_new : cfg.lr_existing;
    auto row = model.embeddings.row(id);
    const std::size_t base = static_cast<std::size_t>(id) * k;
    for (int j = 0; j < k; ++j)
      adam_step(row[j], grow[j], mo.emb_m[base + j], mo.emb_v[base + j], lr, cfg.adam, bc1, bc2);
  }
  const double lr = cfg.lr_network;
  for (std::size_t l = 0; l < model.cross_w.size(); ++l)
    for (std::size_t j = 0; j < model.cross_w[l].size(); ++j) {
      adam_step(model.cross_w[l][j], grads.cross_w[l][j], mo.cw_m[l][j], mo.cw_v[l][j], lr,
                cfg.adam, bc1, bc2);
      adam_step(model.cross_b[l][j], grads.cross_b[l][j], mo.cb_m[l][j], mo.cb_v[l][j], lr,
                cfg.adam, bc1, bc2);
    }
  for (std::size_t p = 0; p < model.mlp_w.size(); ++p) {
    for (std::size_t j = 0; j < model.mlp_w[p].a.size(); ++j)
      adam_step(model.mlp_w[p].a[j], grads.mlp_w[p].a[j], mo.mw_m[p].a[j], mo.mw_v[p].a[j], lr,
                cfg.adam, bc1, bc2);
    for (std::size_t j = 0; j < model.mlp_b[p].size(); ++j)
      adam_step(model.mlp_b[p][j], grads.mlp_b[p][j], mo.mb_m[p][j], mo.mb_v[p][j], lr, cfg.adam,
                bc1, bc2);
  }
  for (std::size_t j = 0; j < model.head_w.size(); ++j)
    adam_step(model.head_w[j], grads.head_w[j], mo.hw_m[j], mo.hw_v[j], lr, cfg.adam, bc1, bc2);
  adam_step(model.head_b, grads.head_b, mo.hb_m, mo.hb_v, lr, cfg.adam, bc1, bc2);
}

namespace {

struct EpochResult {
  double avg_objective = 0.0;
  double avg_kd = 0.0;
};

// One pass over the data in shuffled mini-batches; losses are measured on the
// same forward pass that produces the gradients.
EpochResult run_epoch(TrainerState& ts, const ResolvedBatch& data,
                      const std::vector<double>* teacher, const TrainConfig& cfg, Rng& shuffle_rng) {
  const std::size_t n = data.size();
  const int m = data.num_fields;
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  shuffle_rng.shuffle(order);

  const bool kd_mode = teacher != nullptr;
  double objective_sum = 0.0;
  double kd_sum = 0.0;

  ResolvedBatch mini;
  mini.num_fields = m;
  std::vector<double> mini_teacher;
  std::vector<ForwardCache> caches;

  for (std::size_t begin = 0; begin < n; begin += cfg.batch_size) {
    const std::size_t end = std::min(n, begin + cfg.batch_size);
    const std::size_t bs = end - begin;
    mini.labels.resize(bs);
    mini.ids.resize(bs * m);
    if (kd_mode) mini_teacher.resize(bs);
    for (std::size_t i = 0; i < bs; ++i) {
      const std::size_t src = order[begin + i];
      mini.labels[i] = data.labels[src];
      const FeatureId* ids = data.sample_ids(src);
      std::copy(ids, ids + m, mini.ids.begin() + i * m);
      if (kd_mode) mini_teacher[i] = (*teacher)[src];
    }

    std::vector<ForwardResult> results = forward(ts.model, mini, &caches);
    if (kd_mode) {
      std::vector<double> student_logits(bs);
      for (std::size_t i = 0; i < bs; ++i) student_logits[i] = results[i].logit;
      const double kd = kd_loss(student_logits, mini_teacher, cfg.loss);
      kd_sum += kd;
      objective_sum += cfg.loss.lambda * batch_ce(mini.labels, results, cfg.loss.epsilon) + kd +
                       l2_penalty(ts.model, mini, cfg.loss);
    } else {
      objective_sum += ft_loss(ts.model, mini, results, cfg.loss);
    }

    Gradients grads =
        backward(ts.model, mini, results, caches, kd_mode ? &mini_teacher : nullptr, cfg.loss);
    apply_gradients(ts.model, grads, ts.moments, cfg);
    ++ts.optimizer_steps;
  }

  EpochResult res;
  res.avg_objective = objective_sum / static_cast<double>(n);
  res.avg_kd = kd_sum / static_cast<double>(n);
  return res;
}

}  // namespace

TrainStats train_with_ft(TrainerState& ts, const ResolvedBatch& data, const TrainConfig& cfg) {
  if (data.size() == 0) throw DataError("empty training data");
  TrainStats stats;
  Rng shuffle_rng(splitmix64(cfg.seed ^ 0x73687566ULL));
  while (ts.ep < cfg.epoch_cap) {
    EpochResult res = run_epoch(ts, data, nullptr, cfg, shuffle_rng);
    ++ts.ep;
    stats.epoch_avg_objective.push_back(res.avg_objective);
    if (!std::isfinite(res.avg_objective))
      throw NumericError("non-finite training loss at epoch " + std::to_string(ts.ep));
  }
  stats.epochs = ts.ep;
  stats.optimizer_steps = ts.optimizer_steps;
  return stats;
}

TrainStats train_with_kd(TrainerState& ts, const ResolvedBatch& data,
                         const std::vector<double>& teacher_logits, const TrainConfig& cfg) {
  if (data.size() == 0) throw DataError("empty training data");
  if (teacher_logits.size() != data.size())
    throw DataError("teacher logits do not cover the block");
  TrainStats stats;
  Rng shuffle_rng(splitmix64(cfg.seed ^ 0x73687566ULL));
  while (true) {
    EpochResult res = run_epoch(ts, data, &teacher_logits, cfg, shuffle_rng);
    ++ts.ep;
    stats.epoch_avg_objective.push_back(res.avg_objective);
    stats.epoch_avg_kd.push_back(res.avg_kd);
    if (!std::isfinite(res.avg_objective))
      throw NumericError("non-finite training loss at epoch " + std::to_string(ts.ep));

    const bool kd_did_not_decrease = ts.last_kd_loss && res.avg_kd >= *ts.last_kd_loss;
    ts.last_kd_loss = res.avg_kd;
    if (ts.ep >= cfg.epoch_cap && kd_did_not_decrease) break;
    if (ts.ep >= cfg.kd_epoch_ceiling) break;
  }
  stats.epochs = ts.ep;
  stats.optimizer_steps = ts.optimizer_steps;
  return stats;
}

Checkpoint train_batch(const std::vector<const DayBlock*>& window, const TrainConfig& cfg,
                       const BuildInputs& build, TrainStats* stats) {
  if (window.empty()) throw DataError("batch training window is empty");
  cfg.validate();

  FrequencyTable freq(build.registry);
  for (const DayBlock* block : window) freq.record_occurrences(*block);
  AssignmentPolicy policy(build.registry);
  for (const DayBlock* block : window) policy.update(freq, *block);

  InitConfig init = build.init;
  init.seed = splitmix64(cfg.seed ^ 0x636f6c64ULL);
  ModelConfig model_cfg = build.model;
  model_cfg.fields = window.front()->num_fields;
  model_cfg.seed = splitmix64(cfg.seed ^ 0x6d6f64656cULL);

  TrainerState ts;
  ts.model = ModelState::init(cold_start(policy, init), model_cfg);
  ts.moments = Moments::zeros_like(ts.model);

  ResolvedBatch data = resolve_many(policy, window);
  TrainStats local = train_with_ft(ts, data, cfg);
  if (stats) *stats = local;

  Checkpoint ckpt;
  ckpt.policy = std::move(policy);
  ckpt.freq = std::move(freq);
  ckpt.model = std::move(ts.model);
  ckpt.train_config = cfg;
  ckpt.step_t = 0;
  ckpt.train_begin_day = window.front()->day_index;
  ckpt.train_end_day = window.back()->day_index + 1;
  return ckpt;
}

Checkpoint incremental_step(const Checkpoint& prev, const DayBlock& block,
                            const Checkpoint* teacher, const TrainConfig& cfg,
                            const InitConfig& init, TrainStats* stats,
                            Moments* carried_moments) {
  cfg.validate();
  if (cfg.mode == TrainMode::batch)
    throw ConfigError("incremental_step requires mode ft, kd_batch or kd_self");
  const bool kd_mode = cfg.mode == TrainMode::kd_batch || cfg.mode == TrainMode::kd_self;
  if (cfg.mode == TrainMode::kd_batch && teacher == nullptr)
    throw DataError("kd_batch requires a teacher checkpoint");
  if (cfg.mode == TrainMode::kd_self) teacher = &prev;

  AssignmentPolicy policy = prev.policy;
  FrequencyTable freq = prev.freq;
  freq.record_occurrences(block);
  if (cfg.expand_features) policy.update(freq, block);

  InitConfig step_init = init;
  step_init.k = prev.model.embeddings.k();
  step_init.seed =
      splitmix64(cfg.seed ^ (0x7761726dULL + static_cast<std::uint64_t>(prev.step_t + 1)));

  TrainerState ts;
  ts.model.config = prev.model.config;
  ts.model.embeddings = warm_start(prev.model.embeddings, policy, step_init);
  ts.model.cross_w = prev.model.cross_w;
  ts.model.cross_b = prev.model.cross_b;
  ts.model.mlp_w = prev.model.mlp_w;
  ts.model.mlp_b = prev.model.mlp_b;
  ts.model.head_w = prev.model.head_w;
  ts.model.head_b = prev.model.head_b;

  if (cfg.inherit_moments && carried_moments && !carried_moments->emb_m.empty()) {
    ts.moments = std::move(*carried_moments);
    ts.moments.grow_embeddings(ts.model.embeddings.values().size());
  } else {
    ts.moments = Moments::zeros_like(ts.model);
  }

  // Teacher soft targets are produced once for the whole block, through the
  // teacher's own policy.
  std::vector<double> teacher_logits;
  if (kd_mode) teacher_logits = inference(*teacher, block).logits;

  ResolvedBatch data = resolve(policy, block);
  TrainStats local = kd_mode ? train_with_kd(ts, data, teacher_logits, cfg)
                             : train_with_ft(ts, data, cfg);
  if (stats) *stats = local;
  if (carried_moments) *carried_moments = std::move(ts.moments);

  Checkpoint ckpt;
  ckpt.policy = std::move(policy);
  ckpt.freq = std::move(freq);
  ckpt.model = std::move(ts.model);
  ckpt.train_config = cfg;
  ckpt.step_t = prev.step_t + 1;
  ckpt.train_begin_day = block.day_index;
  ckpt.train_end_day = block.day_index + 1;
  return ckpt;
}

namespace {

const DayBlock& day_at(const std::vector<DayBlock>& stream, int day) {
  for (const auto& block : stream)
    if (block.day_index == day) return block;
  throw DataError("stream is missing day " + std::to_string(day));
}

std::vector<const DayBlock*> days_range(const std::vector<DayBlock>& stream, int begin, int end) {
  std::vector<const DayBlock*> out;
  for (int day = begin; day < end; ++day) out.push_back(&day_at(stream, day));
  return out;
}

MetricsRow eval_row(const Checkpoint& ckpt, const DayBlock& eval_block, int step,
                    const std::string& arm, double epochs, double wall_ms) {
  if (eval_block.day_index < ckpt.train_end_day)
    throw DataError("evaluation day " + std::to_string(eval_block.day_index) +
                    " overlaps training range ending " + std::to_string(ckpt.train_end_day));
  InferenceResult inf = inference(ckpt, eval_block);
  MetricsRow row;
  row.step = step;
  row.arm = arm;
  row.auc = auc(inf.predictions, eval_block.labels);
  row.logloss = logloss(inf.predictions, eval_block.labels, ckpt.train_config.loss.epsilon);
  row.epochs = epochs;
  row.wall_ms = wall_ms;
  return row;
}

// Batch-0: the per-step window retrain. The window's latest day first serves
// as validation for a model trained on the other w-1 days, then the same
// model is fine-tuned on it, so the training process runs twice per update.
Checkpoint train_batch0_step(const std::vector<DayBlock>& stream, int s, int w,
                             const TrainConfig& cfg, const BuildInputs& build, TrainStats* stats,
                             double* val_auc) {
  auto window = days_range(stream, s - w + 1, s + 1);
  const DayBlock& latest = day_at(stream, s);

  FrequencyTable freq(build.registry);
  for (const DayBlock* block : window) freq.record_occurrences(*block);
  AssignmentPolicy policy(build.registry);
  for (const DayBlock* block : window) policy.update(freq, *block);

  InitConfig init = build.init;
  init.seed = splitmix64(cfg.seed ^ (0x62307374ULL + static_cast<std::uint64_t>(s)));
  ModelConfig model_cfg = build.model;
  model_cfg.fields = window.front()->num_fields;
  model_cfg.seed = splitmix64(cfg.seed ^ (0x62306d64ULL + static_cast<std::uint64_t>(s)));

  TrainerState ts;
  ts.model = ModelState::init(cold_start(policy, init), model_cfg);
  ts.moments = Moments::zeros_like(ts.model);

  std::vector<const DayBlock*> head(window.begin(), window.end() - 1);
  TrainStats pass1 = train_with_ft(ts, resolve_many(policy, head), cfg);

  InferenceResult val = infer_resolved(ts.model, resolve(policy, latest));
  if (val_auc) *val_auc = auc(val.predictions, latest.labels);

  ts.ep = 0;  // second pass: latest day becomes training data
  TrainStats pass2 = train_with_ft(ts, resolve(policy, latest), cfg);

  if (stats) {
    stats->epochs = pass1.epochs + pass2.epochs;
    stats->optimizer_steps = pass2.optimizer_steps;
    stats->epoch_avg_objective = pass1.epoch_avg_objective;
    stats->epoch_avg_objective.insert(stats->epoch_avg_objective.end(),
                                      pass2.epoch_avg_objective.begin(),
                                      pass2.epoch_avg_objective.end());
  }

  Checkpoint ckpt;
  ckpt.policy = std::move(policy);
  ckpt.freq = std::move(freq);
  ckpt.model = std::move(ts.model);
  ckpt.train_config = cfg;
  ckpt.step_t = 0;
  ckpt.train_begin_day = s - w + 1;
  ckpt.train_end_day = s + 1;
  return ckpt;
}

struct WinCheckpoint {
  Checkpoint ckpt;
  double wall_ms = 0.0;
  double epochs = 0.0;
};

}  // namespace

ScheduleResult run_schedule(const std::vector<DayBlock>& stream, const ScheduleConfig& cfg) {
  if (cfg.w < 1 || cfg.T <= cfg.w) throw ConfigError("schedule requires T > w >= 1");
  if (cfg.arms.empty()) throw ConfigError("no arms configured");
  // Day T is the last evaluation day.
  for (int day = 0; day <= cfg.T; ++day) day_at(stream, day);

  ScheduleResult result;

  auto warm_t0 = Clock::now();
  TrainStats warm_stats;
  result.warm = train_batch(days_range(stream, 0, cfg.w), cfg.warm_train, cfg.build, &warm_stats);
  result.warm_wall_ms = ms_since(warm_t0);

  // Shared single-pass window checkpoints: needed by delayed batch arms and
  // as kd_batch teachers. Index j = last trained day; window [j-w+1, j+1).
  bool need_win = false;
  int max_delay = 0;
  for (const auto& arm : cfg.arms) {
    if (arm.train.mode == TrainMode::batch && arm.batch_delay >= 1) {
      need_win = true;
      max_delay = std::max(max_delay, arm.batch_delay);
    }
    if (arm.train.mode == TrainMode::kd_batch) need_win = true;
  }
  std::map<int, WinCheckpoint> window_ckpts;
  if (need_win) {
    for (int j = cfg.w - 1; j <= cfg.T - 2; ++j) {
      WinCheckpoint wc;
      auto t0 = Clock::now();
      if (j == cfg.w - 1) {
        wc.ckpt = result.warm;
        wc.wall_ms = result.warm_wall_ms;
        wc.epochs = cfg.warm_train.epoch_cap;
      } else {
        TrainStats stats;
        wc.ckpt = train_batch(days_range(stream, j - cfg.w + 1, j + 1), cfg.warm_train, cfg.build,
                              &stats);
        wc.wall_ms = ms_since(t0);
        wc.epochs = stats.epochs;
      }
      window_ckpts.emplace(j, std::move(wc));
    }
  }

  result.arms.resize(cfg.arms.size());

  auto run_arm = [&](std::size_t arm_idx) {
    const ArmSpec& arm = cfg.arms[arm_idx];
    ArmOutcome& outcome = result.arms[arm_idx];
    outcome.name = arm.name;
    try {
      arm.train.validate();
      if (arm.train.mode == TrainMode::batch) {
        if (arm.batch_delay == 0) {
          for (int s = cfg.w; s <= cfg.T - 1; ++s) {
            auto t0 = Clock::now();
            TrainStats stats;
            double val_auc = -1.0;
            Checkpoint ckpt =
                train_batch0_step(stream, s, cfg.w, arm.train, cfg.build, &stats, &val_auc);
            const double wall = ms_since(t0);
            outcome.val_aucs.push_back(val_auc);
            outcome.rows.push_back(
                eval_row(ckpt, day_at(stream, s + 1), s, arm.name, stats.epochs, wall));
            outcome.final_checkpoint = std::move(ckpt);
          }
        } else {
          for (int s = cfg.w; s <= cfg.T - 1; ++s) {
            const int j = s - arm.batch_delay;
            if (j < cfg.w - 1) continue;  // delayed checkpoint does not exist yet
            const WinCheckpoint& wc = window_ckpts.at(j);
            outcome.rows.push_back(
                eval_row(wc.ckpt, day_at(stream, s + 1), s, arm.name, wc.epochs, wc.wall_ms));
            if (s == cfg.T - 1) outcome.final_checkpoint = wc.ckpt;
          }
        }
      } else {
        Checkpoint prev = result.warm;
        prev.train_config = arm.train;
        Moments carried;
        for (int s = cfg.w; s <= cfg.T - 1; ++s) {
          const DayBlock& block = day_at(stream, s);
          const Checkpoint* teacher = nullptr;
          if (arm.train.mode == TrainMode::kd_batch) teacher = &window_ckpts.at(s - 1).ckpt;
          auto t0 = Clock::now();
          TrainStats stats;
          Checkpoint ckpt = incremental_step(prev, block, teacher, arm.train, cfg.build.init,
                                             &stats, &carried);
          const double wall = ms_since(t0);
          outcome.rows.push_back(
              eval_row(ckpt, day_at(stream, s + 1), s, arm.name, stats.epochs, wall));
          prev = std::move(ckpt);
        }
        outcome.final_checkpoint = std::move(prev);
      }
    } catch (const std::exception& e) {
      outcome.failed = true;
      outcome.error = e.what();
    }
  };

  const int jobs = std::max(1, cfg.jobs);
  if (jobs == 1) {
    for (std::size_t i = 0; i < cfg.arms.size(); ++i) run_arm(i);
  } else {
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      while (true) {
        const std::size_t i = next.fetch_add(1);
        if (i >= cfg.arms.size()) return;
        run_arm(i);
      }
    };
    std::vector<std::thread> threads;
    for (int t = 0; t < jobs; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }

  for (const auto& outcome : result.arms)
    result.rows.insert(result.rows.end(), outcome.rows.begin(), outcome.rows.end());
  std::sort(result.rows.begin(), result.rows.end(), [](const MetricsRow& a, const MetricsRow& b) {
    return a.arm != b.arm ? a.arm < b.arm : a.step < b.step;
  });
  return result;
}

}  // namespace incctr
