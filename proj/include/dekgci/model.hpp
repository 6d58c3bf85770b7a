#pragma once

#include "dekgci/graph.hpp"
#include "dekgci/ingest.hpp"
#include "dekgci/item_tower.hpp"
#include "dekgci/user_tower.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace dekgci {

struct Hyperparams {
  Index batchsize = 32;
  Index n_neighbor = 8;
  Index dim = 64;
  Scalar lr = 5e-4;
  Index layers = 3;
  Aggregator aggregator = Aggregator::sum;
  Variant variant = Variant::dekgci;
  Index depth = 1;
  Scalar leaky_slope = 0.2;
  Index max_epochs = 50;
  Index patience = 5;
  Scalar weight_decay = 0.0;
  std::uint64_t seed = 42;

  PropagationConfig propagation() const {
    return {layers, dim, aggregator, variant, leaky_slope};
  }
  ReceptiveConfig receptive() const { return {depth, n_neighbor}; }
};

// Throws ConfigError on out-of-range fields, and on depth >= 2 with an
// aggregator whose output dimension differs from dim (the recursion feeds
// item outputs back in as entity embeddings).
void validate(const Hyperparams& h);

struct ModelParams {
  Mat user;               // m x d
  Mat entity;             // |entities| x d; items are rows 0..n_items-1
  Mat relation;           // |relations| x D
  PropagationWeights propagation;  // w1 per layer; w2 per layer for ngcf
  Mat w2;                 // D x d item transform
  Vec b;                  // D

  ItemTowerWeights item_tower_view() const { return {&entity, &relation, &w2, &b}; }
};

// Gradients share the parameter layout exactly.
using GradientSet = ModelParams;

ModelParams zeros_like(const ModelParams& p);

// Visits every tensor as a flat coefficient span, in a fixed order. Used by
// the optimizer and the finite-difference harness.
void for_each_tensor(ModelParams& p,
                     const std::function<void(const std::string&, Scalar*, std::ptrdiff_t)>& fn);
void for_each_tensor(const ModelParams& p,
                     const std::function<void(const std::string&, const Scalar*, std::ptrdiff_t)>& fn);

// Xavier-uniform entries with bound sqrt(6/(fan_in+fan_out)); embedding rows
// count both fans as the embedding dimension. Bias starts at zero.
// Deterministic under seed.
ModelParams init_params(Index n_users, Index n_entities, Index n_relations,
                        const Hyperparams& h, std::uint64_t seed);

// Per-example neighbor-sampling seed. Content-based (not position-based), so
// identical examples in one batch draw identical neighborhoods and the
// sum-loss gradient doubles exactly; epoch varies the draw across epochs.
std::uint64_t example_seed(std::uint64_t run_seed, std::uint64_t epoch, Index user, Index item,
                           int label);

// Salt fit() uses when scoring the eval split; sharing it makes a later
// standalone evaluation bit-identical to the training log.
std::uint64_t eval_salt(std::uint64_t run_seed);

// Full forward for one example given a precomputed user representation
// table (rows are e_u*). Returns sigmoid(e_u* . e_v*) in (0,1).
Scalar predict_one(const LabeledExample& ex, const Mat& user_repr, const ModelParams& p,
                   const KnowledgeGraph& kg, const Hyperparams& h, Rng& rng,
                   ItemNodeTrace* trace = nullptr);

// Scores a list of examples with a fresh propagation pass. Sampling seeds
// derive from (seed_salt, user, item), independent of epoch, so evaluation
// is stable for fixed parameters.
std::vector<Scalar> predict_scores(const std::vector<LabeledExample>& examples,
                                   const ModelParams& p, const InteractionGraph& g,
                                   const KnowledgeGraph& kg, const Hyperparams& h,
                                   std::uint64_t seed_salt);

// Sum of binary cross-entropy over the batch, probabilities clamped to
// [1e-7, 1 - 1e-7]. Throws on an empty batch.
Scalar batch_loss(const std::vector<LabeledExample>& batch, const ModelParams& p,
                  const InteractionGraph& g, const KnowledgeGraph& kg, const Hyperparams& h,
                  std::uint64_t epoch);

// Exact gradient of batch_loss for every parameter reached by the batch.
// loss_out, when non-null, receives the forward loss of the same pass.
GradientSet backward(const std::vector<LabeledExample>& batch, const ModelParams& p,
                     const InteractionGraph& g, const KnowledgeGraph& kg, const Hyperparams& h,
                     std::uint64_t epoch, Scalar* loss_out = nullptr);

struct AdamState {
  ModelParams m, v;
  long step = 0;
};

AdamState make_adam_state(const ModelParams& p);

// Bias-corrected Adam (beta1 0.9, beta2 0.999, eps 1e-8) with optional
// decoupled weight decay.
void adam_step(ModelParams& p, const GradientSet& g, AdamState& st, Scalar lr,
               Scalar weight_decay = 0.0);

struct EpochLog {
  Index epoch = 0;
  Scalar train_loss = 0;  // mean per-example BCE over the epoch
  Scalar eval_auc = 0;
  Scalar eval_acc = 0;
};

struct FitResult {
  ModelParams params;  // best eval-AUC parameters
  std::vector<EpochLog> log;
  Index best_epoch = 0;
  Scalar best_eval_auc = 0;
};

// Mini-batch training with per-epoch eval AUC, keeping the best epoch's
// parameters and stopping early after `patience` epochs without improvement.
// Throws TrainingDiverged when the loss or a parameter goes non-finite.
FitResult fit(const DatasetSplit& split, const InteractionGraph& g, const KnowledgeGraph& kg,
              const Hyperparams& h,
              const std::function<void(const EpochLog&)>& on_epoch = nullptr);

}  // namespace dekgci
