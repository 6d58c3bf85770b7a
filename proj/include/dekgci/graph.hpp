#pragma once

#include "dekgci/ingest.hpp"
#include "dekgci/rng.hpp"
#include "dekgci/types.hpp"

#include <span>
#include <vector>

namespace dekgci {

// Bipartite adjacency over train-split positives, CSR in both directions.
// Immutable after build; safe for concurrent reads.
class InteractionGraph {
 public:
  InteractionGraph() = default;

  // Every example must have label 1 and in-range indices.
  static InteractionGraph build(const std::vector<LabeledExample>& train_positives, Index n_users,
                                Index n_items);

  Index num_users() const { return n_users_; }
  Index num_items() const { return n_items_; }
  std::size_t num_edges() const { return u2i_.size(); }

  std::span<const Index> items_of(Index u) const {
    return {u2i_.data() + u_off_[static_cast<std::size_t>(u)],
            u2i_.data() + u_off_[static_cast<std::size_t>(u) + 1]};
  }
  std::span<const Index> users_of(Index v) const {
    return {i2u_.data() + i_off_[static_cast<std::size_t>(v)],
            i2u_.data() + i_off_[static_cast<std::size_t>(v) + 1]};
  }

  Index user_degree(Index u) const {
    return static_cast<Index>(u_off_[static_cast<std::size_t>(u) + 1] -
                              u_off_[static_cast<std::size_t>(u)]);
  }
  Index item_degree(Index v) const {
    return static_cast<Index>(i_off_[static_cast<std::size_t>(v) + 1] -
                              i_off_[static_cast<std::size_t>(v)]);
  }

  // 1/sqrt(degree), 0 for isolated nodes.
  Scalar inv_sqrt_user_degree(Index u) const { return du_inv_sqrt_[u]; }
  Scalar inv_sqrt_item_degree(Index v) const { return dv_inv_sqrt_[v]; }

  bool has_edge(Index u, Index v) const;

 private:
  Index n_users_ = 0;
  Index n_items_ = 0;
  std::vector<std::size_t> u_off_, i_off_;
  std::vector<Index> u2i_, i2u_;  // sorted neighbor lists
  Vec du_inv_sqrt_, dv_inv_sqrt_;
};

// 1/sqrt(|N_u| |N_v|). Only defined on edges; throws otherwise.
Scalar norm_coeff(Index u, Index v, const InteractionGraph& g);

// Per-entity (relation, tail) adjacency. Bidirectional build inserts the
// reverse edge t -> (r, h) for every triple.
class KnowledgeGraph {
 public:
  KnowledgeGraph() = default;

  static KnowledgeGraph build(const std::vector<Triple>& triples, Index n_entities,
                              Index n_relations, bool bidirectional = true);

  Index num_entities() const { return n_entities_; }
  Index num_relations() const { return n_relations_; }
  std::size_t num_adjacency_entries() const { return tails_.size(); }

  Index degree(Index e) const {
    return static_cast<Index>(off_[static_cast<std::size_t>(e) + 1] -
                              off_[static_cast<std::size_t>(e)]);
  }
  std::span<const Index> tails_of(Index e) const {
    return {tails_.data() + off_[static_cast<std::size_t>(e)],
            tails_.data() + off_[static_cast<std::size_t>(e) + 1]};
  }
  std::span<const Index> rels_of(Index e) const {
    return {rels_.data() + off_[static_cast<std::size_t>(e)],
            rels_.data() + off_[static_cast<std::size_t>(e) + 1]};
  }

 private:
  Index n_entities_ = 0;
  Index n_relations_ = 0;
  std::vector<std::size_t> off_;
  std::vector<Index> tails_, rels_;
};

struct NeighborSample {
  std::vector<Index> tails;
  std::vector<Index> rels;
};

// Fixed-size sample of an entity's adjacency: without replacement when the
// degree allows it, with replacement when 0 < degree < n_neighbor, and the
// sentinel (relation 0, entity itself) repeated n_neighbor times at degree 0.
NeighborSample sample_neighbors(const KnowledgeGraph& kg, Index entity, Index n_neighbor,
                                Rng& rng);

}  // namespace dekgci
