#include "dekgci/item_tower.hpp"

#include <cmath>

namespace dekgci {

void validate(const ReceptiveConfig& cfg) {
  if (cfg.depth < 1) throw ConfigError("receptive depth must be >= 1");
  if (cfg.n_neighbor < 1) throw ConfigError("n_neighbor must be >= 1");
}

Scalar user_relation_score(const Vec& user_repr, const Vec& relation_emb) {
  if (user_repr.size() != relation_emb.size())
    throw Error("user_relation_score: dimension mismatch (" + std::to_string(user_repr.size()) +
                " vs " + std::to_string(relation_emb.size()) + ")");
  return user_repr.dot(relation_emb);
}

Vec attention_weights(const Vec& raw_scores) {
  if (raw_scores.size() == 0) throw Error("attention_weights: empty score set");
  const Scalar m = raw_scores.maxCoeff();
  Vec w = (raw_scores.array() - m).exp();
  w /= w.sum();
  return w;
}

Vec neighbor_representation(const Vec& weights, const Mat& neighbor_embs) {
  if (weights.size() != neighbor_embs.rows())
    throw Error("neighbor_representation: weight/embedding count mismatch");
  return neighbor_embs.transpose() * weights;
}

Vec item_final(const Vec& v0, const Vec& v_neigh, const Mat& w2, const Vec& b, Scalar slope) {
  if (v0.size() != v_neigh.size() || w2.cols() != v0.size() || w2.rows() != b.size())
    throw Error("item_final: dimension mismatch");
  const Vec z = w2 * (v0 + v_neigh) + b;
  return (z.array() >= Scalar(0)).select(z.array(), slope * z.array()).matrix();
}

ItemNodeTrace item_representation(Index item, const KnowledgeGraph& kg, const Vec& user_repr,
                                  const ItemTowerWeights& w, const ReceptiveConfig& cfg,
                                  Scalar slope, Rng& rng) {
  validate(cfg);
  const Index d = w.entity->cols();
  if (cfg.depth > 1 && w.w2->rows() != d)
    throw ConfigError("receptive depth >= 2 requires the item output dimension to equal the "
                      "embedding dimension (use the sum aggregator)");
  if (user_repr.size() != w.relation->cols())
    throw Error("item_representation: user representation does not match relation embeddings");

  ItemNodeTrace node;
  node.entity = item;
  node.sample = sample_neighbors(kg, item, cfg.n_neighbor, rng);
  const auto k = static_cast<Index>(node.sample.tails.size());

  Vec raw(k);
  for (Index i = 0; i < k; ++i)
    raw[i] = user_repr.dot(w.relation->row(node.sample.rels[static_cast<std::size_t>(i)]));
  node.weights = attention_weights(raw);

  node.neigh_embs.resize(k, d);
  if (cfg.depth == 1) {
    for (Index i = 0; i < k; ++i)
      node.neigh_embs.row(i) = w.entity->row(node.sample.tails[static_cast<std::size_t>(i)]);
  } else {
    const ReceptiveConfig inner{cfg.depth - 1, cfg.n_neighbor};
    node.children.reserve(static_cast<std::size_t>(k));
    for (Index i = 0; i < k; ++i) {
      node.children.push_back(item_representation(node.sample.tails[static_cast<std::size_t>(i)],
                                                  kg, user_repr, w, inner, slope, rng));
      node.neigh_embs.row(i) = node.children.back().out.transpose();
    }
  }

  const Vec v_neigh = node.neigh_embs.transpose() * node.weights;
  node.x = w.entity->row(item).transpose() + v_neigh;
  const Vec z = (*w.w2) * node.x + (*w.b);
  node.out = (z.array() >= Scalar(0)).select(z.array(), slope * z.array()).matrix();
  return node;
}

void item_backward(const ItemNodeTrace& trace, const Vec& g_out, const Vec& user_repr,
                   const ItemTowerWeights& w, Scalar slope, ItemTowerGrads& g,
                   Vec& g_user_repr) {
  // LeakyReLU mask from the recorded output sign.
  Vec gz = g_out;
  for (Index i = 0; i < gz.size(); ++i)
    if (trace.out[i] <= Scalar(0)) gz[i] *= slope;

  *g.b += gz;
  g.w2->noalias() += gz * trace.x.transpose();
  const Vec gx = w.w2->transpose() * gz;

  g.entity->row(trace.entity) += gx.transpose();

  // gx doubles as dLoss/dV_N since x = v0 + V_N.
  const auto k = static_cast<Index>(trace.sample.tails.size());
  Vec g_weights(k);
  for (Index i = 0; i < k; ++i) g_weights[i] = trace.neigh_embs.row(i).dot(gx);

  // Softmax Jacobian: g_raw = w .* (g_w - <w, g_w>).
  const Scalar pivot = trace.weights.dot(g_weights);
  const Vec g_raw = (trace.weights.array() * (g_weights.array() - pivot)).matrix();

  for (Index i = 0; i < k; ++i) {
    const Index rel = trace.sample.rels[static_cast<std::size_t>(i)];
    g.relation->row(rel) += g_raw[i] * user_repr.transpose();
    g_user_repr += g_raw[i] * w.relation->row(rel).transpose();
  }

  for (Index i = 0; i < k; ++i) {
    const Vec g_emb = trace.weights[i] * gx;
    if (trace.children.empty()) {
      g.entity->row(trace.sample.tails[static_cast<std::size_t>(i)]) += g_emb.transpose();
    } else {
      item_backward(trace.children[static_cast<std::size_t>(i)], g_emb, user_repr, w, slope, g,
                    g_user_repr);
    }
  }
}

}  // namespace dekgci
