#pragma once

#include "dekgci/graph.hpp"
#include "dekgci/types.hpp"

#include <vector>

namespace dekgci {

struct ReceptiveConfig {
  Index depth = 1;      // hops of KG neighborhood folded into the item
  Index n_neighbor = 8;
};

// Throws ConfigError unless depth >= 1 and n_neighbor >= 1.
void validate(const ReceptiveConfig& cfg);

// pi_hat(u, r) = e_u* . e_r. Dimensions must agree.
Scalar user_relation_score(const Vec& user_repr, const Vec& relation_emb);

// Numerically stable softmax; throws on empty input.
Vec attention_weights(const Vec& raw_scores);

// V_N(v) = sum_i weights[i] * neighbor_embs.row(i).
Vec neighbor_representation(const Vec& weights, const Mat& neighbor_embs);

// e_v* = LeakyReLU(W2 (v0 + V_N) + b).
Vec item_final(const Vec& v0, const Vec& v_neigh, const Mat& w2, const Vec& b, Scalar slope);

// Weights and bias of the item transform, separated from ModelParams so the
// tower stays independent of the training module.
struct ItemTowerWeights {
  const Mat* entity;    // |entities| x d
  const Mat* relation;  // |relations| x D
  const Mat* w2;        // D x d
  const Vec* b;         // D
};

struct ItemTowerGrads {
  Mat* entity;
  Mat* relation;
  Mat* w2;
  Vec* b;
};

// One node of the receptive-field tree recorded during the forward pass.
// Leaves (depth 1) read raw entity rows; inner nodes read their children's
// outputs, which requires D == d (checked when the tree is built).
struct ItemNodeTrace {
  Index entity = 0;
  NeighborSample sample;
  Vec weights;                          // n_neighbor softmax weights
  Mat neigh_embs;                       // n_neighbor x d rows actually aggregated
  Vec x;                                // v0 + V_N(v)
  Vec out;                              // e_v* of this node (D)
  std::vector<ItemNodeTrace> children;  // empty at depth 1
};

// Full item-side forward for one (user, item) pair. user_repr is e_u* from
// the user tower; neighbor draws come from rng, so pass a per-example stream
// for reproducibility.
ItemNodeTrace item_representation(Index item, const KnowledgeGraph& kg, const Vec& user_repr,
                                  const ItemTowerWeights& w, const ReceptiveConfig& cfg,
                                  Scalar slope, Rng& rng);

// Reverse pass through the recorded tree. g_out is dLoss/d e_v*; gradients
// accumulate into g (caller-zeroed) and g_user_repr (dLoss/d e_u*, the
// attention path).
void item_backward(const ItemNodeTrace& trace, const Vec& g_out, const Vec& user_repr,
                   const ItemTowerWeights& w, Scalar slope, ItemTowerGrads& g,
                   Vec& g_user_repr);

}  // namespace dekgci
