#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "incctr/ctr_model.hpp"
#include "incctr/evaluation.hpp"
#include "incctr/feature_registry.hpp"
#include "incctr/types.hpp"

namespace incctr {

enum class TrainMode { batch, ft, kd_batch, kd_self };

const char* train_mode_name(TrainMode mode);
TrainMode train_mode_from_name(const std::string& name);

enum class OptimizerKind { sgd, adam };

struct AdamParams {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct TrainConfig {
  TrainMode mode = TrainMode::ft;
  int epoch_cap = 1;         // EPOCH: ft trains exactly this many epochs
  int kd_epoch_ceiling = 5;  // hard stop for the KD stopping rule
  double lr_existing = 1e-3; // inherited embedding rows
  double lr_new = 1e-2;      // rows initialized this step
  double lr_network = 1e-3;  // cross / MLP / head parameters
  int batch_size = 256;
  OptimizerKind optimizer = OptimizerKind::adam;
  AdamParams adam;
  LossConfig loss;
  bool expand_features = true;   // feature-module ablation switch
  bool inherit_moments = false;  // carry optimizer moments across steps
  std::uint64_t seed = 0;

  void validate() const;
  std::string to_json() const;
  static TrainConfig from_json(const std::string& text);
};

// Adam first/second moments (or unused for SGD), laid out like the model.
struct Moments {
  std::vector<double> emb_m, emb_v;
  std::vector<std::vector<double>> cw_m, cw_v, cb_m, cb_v;
  std::vector<Matrix> mw_m, mw_v;
  std::vector<std::vector<double>> mb_m, mb_v;
  std::vector<double> hw_m, hw_v;
  double hb_m = 0.0, hb_v = 0.0;
  long long t = 0;

  static Moments zeros_like(const ModelState& state);
  // Zero-extends the embedding moment rows after a warm start.
  void grow_embeddings(std::size_t values_size);
};

struct TrainerState {
  int ep = 0;
  std::optional<double> last_kd_loss;
  ModelState model;
  Moments moments;
  long long optimizer_steps = 0;
};

struct TrainStats {
  int epochs = 0;
  long long optimizer_steps = 0;
  std::vector<double> epoch_avg_objective;  // per-sample objective per epoch
  std::vector<double> epoch_avg_kd;         // per-sample KD term per epoch
  double val_auc = -1.0;                    // batch0 validation pass, if any
};

struct Checkpoint {
  AssignmentPolicy policy;
  FrequencyTable freq;
  ModelState model;
  TrainConfig train_config;
  int step_t = 0;
  // Days the model was trained on, half-open.
  int train_begin_day = 0;
  int train_end_day = 0;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

struct InferenceResult {
  std::vector<double> logits;
  std::vector<double> predictions;
};

ResolvedBatch resolve(const AssignmentPolicy& policy, const DayBlock& block);
ResolvedBatch resolve_many(const AssignmentPolicy& policy,
                           const std::vector<const DayBlock*>& blocks);

// Pure forward pass through a checkpoint; unknown features route to Others.
InferenceResult inference(const Checkpoint& ckpt, const DayBlock& block);
InferenceResult infer_resolved(const ModelState& model, const ResolvedBatch& batch);

// One optimizer step on summed batch gradients. Embedding rows use
// lr_new / lr_existing depending on the table's new-id partition; everything
// else uses lr_network. Adam moments for embeddings update lazily (touched
// rows only).
void apply_gradients(ModelState& model, const Gradients& grads, Moments& moments,
                     const TrainConfig& cfg);

// Minimizes batch CE + L2 for exactly epoch_cap epochs.
TrainStats train_with_ft(TrainerState& ts, const ResolvedBatch& data, const TrainConfig& cfg);

// Minimizes lambda*CE + KD + L2; stops once ep >= epoch_cap and the epoch
// average of the KD term did not decrease, or at the hard ceiling.
TrainStats train_with_kd(TrainerState& ts, const ResolvedBatch& data,
                         const std::vector<double>& teacher_logits, const TrainConfig& cfg);

struct BuildInputs {
  RegistryConfig registry;
  InitConfig init;
  ModelConfig model;
};

// Batch mode: policy and counts built from scratch over the window, cold-start
// embeddings, fresh network, epoch_cap epochs over the shuffled window.
Checkpoint train_batch(const std::vector<const DayBlock*>& window, const TrainConfig& cfg,
                       const BuildInputs& build, TrainStats* stats = nullptr);

// One incremental update: extend counts/policy on the block (unless expansion
// is disabled), warm-start embeddings, inherit network parameters, then
// dispatch on mode. teacher is required for kd_batch; kd_self uses prev.
// carried_moments, when given, implements inherit_moments across steps.
Checkpoint incremental_step(const Checkpoint& prev, const DayBlock& block,
                            const Checkpoint* teacher, const TrainConfig& cfg,
                            const InitConfig& init, TrainStats* stats = nullptr,
                            Moments* carried_moments = nullptr);

struct ArmSpec {
  std::string name;
  TrainConfig train;
  int batch_delay = 0;  // batch arms: evaluate the checkpoint trained through day s-i
};

struct ScheduleConfig {
  int w = 7;
  int T = 23;
  BuildInputs build;
  TrainConfig warm_train;  // warm-start model and shared window checkpoints
  std::vector<ArmSpec> arms;
  int jobs = 1;
};

struct ArmOutcome {
  std::string name;
  bool failed = false;
  std::string error;
  std::vector<MetricsRow> rows;
  std::optional<Checkpoint> final_checkpoint;
  std::vector<double> val_aucs;  // batch0 validation metrics per step
};

struct ScheduleResult {
  Checkpoint warm;
  double warm_wall_ms = 0.0;
  std::vector<ArmOutcome> arms;
  std::vector<MetricsRow> rows;  // merged, sorted by (arm, step)
};

// Warm-start on days [0, w); one update per s in [w, T-1]; every update is
// evaluated on day s+1. Delayed batch arms reuse a shared memoized family of
// window checkpoints, which also serves kd_batch teachers.
ScheduleResult run_schedule(const std::vector<DayBlock>& stream, const ScheduleConfig& cfg);

}  // namespace incctr
