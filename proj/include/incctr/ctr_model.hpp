#pragma once

#include <cstdint>
#include <optional>
#include <unordered_map>
#include <vector>

#include "incctr/embedding_store.hpp"
#include "incctr/matrix.hpp"
#include "incctr/types.hpp"

namespace incctr {

// A batch with ids already resolved through an assignment policy.
// ids is n x m row-major; every entry must be < embedding row count.
struct ResolvedBatch {
  int num_fields = 0;
  std::vector<std::uint8_t> labels;
  std::vector<FeatureId> ids;

  std::size_t size() const { return labels.size(); }
  const FeatureId* sample_ids(std::size_t i) const {
    return ids.data() + i * static_cast<std::size_t>(num_fields);
  }
};

struct ModelConfig {
  int fields = 0;             // m
  int cross_layers = 2;       // DCN cross depth
  std::vector<int> mlp_hidden = {64, 32};
  std::uint64_t seed = 0;     // network parameter init
};

struct LossConfig {
  double tau = 1.0;      // KD temperature
  double lambda = 1.0;   // weight of the hard-label CE term in KD mode
  double l2 = 0.0;       // coefficient of the L2 regularizer
  double epsilon = 1e-7; // prediction clamp for loss evaluation
};

// Cross-network + MLP tower over field embeddings with a linear head on
// the concatenated outputs. All parameters double precision.
struct ModelState {
  EmbeddingTable embeddings;
  ModelConfig config;
  std::vector<std::vector<double>> cross_w;  // each length d = m*k
  std::vector<std::vector<double>> cross_b;
  std::vector<Matrix> mlp_w;                 // layer p: hidden[p] x prev_width
  std::vector<std::vector<double>> mlp_b;
  std::vector<double> head_w;                // length d + last hidden (or 2d if no MLP)
  double head_b = 0.0;

  int input_dim() const { return config.fields * embeddings.k(); }
  int mlp_out_dim() const { return config.mlp_hidden.empty() ? input_dim() : config.mlp_hidden.back(); }

  // Fresh network parameters (uniform +-1/sqrt(fan_in)), embeddings supplied.
  static ModelState init(EmbeddingTable embeddings, const ModelConfig& cfg);
};

struct ForwardResult {
  double logit = 0.0;
  double prediction = 0.0;  // sigmoid(logit), unclamped
};

// Per-sample activations kept for backprop.
struct ForwardCache {
  std::vector<double> x0;                    // d
  std::vector<std::vector<double>> cross_x;  // cross_layers+1 entries of d
  std::vector<double> cross_dot;             // cross_layers
  std::vector<std::vector<double>> mlp_pre;  // pre-activation per layer
  std::vector<std::vector<double>> mlp_act;  // post-ReLU per layer
};

// Gradients of the batch objective. Embedding gradients are sparse: only rows
// touched by the batch appear.
struct Gradients {
  std::unordered_map<FeatureId, std::vector<double>> embedding_rows;
  std::vector<std::vector<double>> cross_w;
  std::vector<std::vector<double>> cross_b;
  std::vector<Matrix> mlp_w;
  std::vector<std::vector<double>> mlp_b;
  std::vector<double> head_w;
  double head_b = 0.0;

  static Gradients zeros_like(const ModelState& state);
};

double sigmoid(double z);

// Forward pass over a resolved batch. Caches are filled only when `caches`
// is non-null (training path); the logit math is identical either way.
std::vector<ForwardResult> forward(const ModelState& state, const ResolvedBatch& batch,
                                   std::vector<ForwardCache>* caches = nullptr);

// Cross-entropy of one prediction, clamped to [eps, 1-eps].
double ce_loss(double label, double prediction, double epsilon = 1e-7);

// Sum (not mean) of per-sample cross-entropies.
double batch_ce(const std::vector<std::uint8_t>& labels, const std::vector<ForwardResult>& results,
                double epsilon = 1e-7);

// Distillation loss: binary CE between tempered teacher and student sigmoids,
// teacher in the target slot, summed over the batch.
double kd_loss(const std::vector<double>& student_logits, const std::vector<double>& teacher_logits,
               const LossConfig& cfg);

// L2 regularizer: all network parameters plus the embedding rows used by the
// batch, scaled by cfg.l2.
double l2_penalty(const ModelState& state, const ResolvedBatch& batch, const LossConfig& cfg);

// FT objective: batch CE + L2.
double ft_loss(const ModelState& state, const ResolvedBatch& batch,
               const std::vector<ForwardResult>& results, const LossConfig& cfg);

// KD objective: lambda * batch CE + KD + L2. Throws if teacher logits are
// missing or sized wrong.
double combined_loss(const ModelState& state, const ResolvedBatch& batch,
                     const std::vector<ForwardResult>& results,
                     const std::vector<double>& teacher_logits, const LossConfig& cfg);

// Analytic gradients of the FT objective (teacher_logits == nullptr) or KD
// objective (teacher_logits != nullptr) for the whole batch.
Gradients backward(const ModelState& state, const ResolvedBatch& batch,
                   const std::vector<ForwardResult>& results,
                   const std::vector<ForwardCache>& caches,
                   const std::vector<double>* teacher_logits, const LossConfig& cfg);

}  // namespace incctr
