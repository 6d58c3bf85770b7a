#pragma once

#include "dekgci/graph.hpp"
#include "dekgci/types.hpp"

#include <string>
#include <vector>

namespace dekgci {

enum class Aggregator { sum, concat, neighbor };
enum class Variant { dekgci, ngcf, lightgcn };

Aggregator parse_aggregator(const std::string& name);
Variant parse_variant(const std::string& name);
std::string to_string(Aggregator a);
std::string to_string(Variant v);

struct PropagationConfig {
  Index layers = 3;
  Index dim = 64;
  Aggregator aggregator = Aggregator::sum;
  Variant variant = Variant::dekgci;
  Scalar leaky_slope = 0.2;
};

// Throws ConfigError on non-positive layers/dim or slope outside (0, 1].
void validate(const PropagationConfig& cfg);

// Dimension of the aggregated user representation:
// sum -> dim, concat -> (layers+1)*dim, neighbor -> layers*dim.
Index final_dim(const PropagationConfig& cfg);

// Full record of a forward propagation pass. user[l]/item[l] are the layer-l
// tables (row per node); index 0 holds the base embeddings. user_s[l]/item_s[l]
// cache the degree-normalized neighbor sums feeding layer l, which the
// backward pass reuses. lightgcn writes no caches (its layers ARE the sums).
struct PropagationTrace {
  std::vector<Mat> user, item;
  std::vector<Mat> user_s, item_s;
};

// Per-layer transforms. w1 has one d x d matrix per layer for dekgci and
// ngcf, none for lightgcn; w2 is ngcf's interaction-term transform.
struct PropagationWeights {
  std::vector<Mat> w1;
  std::vector<Mat> w2;
};

// Single-edge message at layer l: (1/sqrt(|N_v||N_u|)) W1[l] e_v^(l-1).
// Layers are 1-based; prev holds the layer l-1 tables.
Vec message(Index u, Index v, Index layer, const InteractionGraph& g,
            const PropagationWeights& w, const PropagationTrace& prev);

// Appends the layer-l tables (and caches) for both sides to the trace.
// Requires trace.user/item to hold layers 0..l-1 already.
void propagate_layer(Index l, const InteractionGraph& g, const PropagationConfig& cfg,
                     const PropagationWeights& w, PropagationTrace& trace);

// Runs all layers from the base tables. user0 is n_users x dim; item0 is
// n_items x dim (the item rows of the entity table).
PropagationTrace propagate(const InteractionGraph& g, const PropagationConfig& cfg,
                           const PropagationWeights& w, const Mat& user0, const Mat& item0);

// Combines per-layer tables row-wise into the final representation.
Mat aggregate(const std::vector<Mat>& layer_tables, Aggregator agg);
Vec aggregate_row(const std::vector<Mat>& layer_tables, Index row, Aggregator agg);

// Reverse pass. g_user/g_item are gradients with respect to the final-layer
// aggregated contributions, one table per layer (same shapes as trace.user /
// trace.item; pass zero tables where nothing flows). On return g_user[0] /
// g_item[0] hold the gradients for the base tables, and g_w the transform
// gradients (shapes mirror w; zero-filled on entry by the caller).
void propagate_backward(const InteractionGraph& g, const PropagationConfig& cfg,
                        const PropagationWeights& w, const PropagationTrace& trace,
                        std::vector<Mat>& g_user, std::vector<Mat>& g_item,
                        PropagationWeights& g_w);

}  // namespace dekgci
