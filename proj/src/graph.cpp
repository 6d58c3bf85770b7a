#include "dekgci/graph.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace dekgci {

InteractionGraph InteractionGraph::build(const std::vector<LabeledExample>& train_positives,
                                         Index n_users, Index n_items) {
  InteractionGraph g;
  g.n_users_ = n_users;
  g.n_items_ = n_items;

  std::vector<std::pair<Index, Index>> edges;
  edges.reserve(train_positives.size());
  for (const auto& ex : train_positives) {
    if (ex.label != 1)
      throw Error("interaction graph: example (" + std::to_string(ex.user) + "," +
                  std::to_string(ex.item) + ") has label 0");
    if (ex.user < 0 || ex.user >= n_users || ex.item < 0 || ex.item >= n_items)
      throw Error("interaction graph: example index out of range");
    edges.emplace_back(ex.user, ex.item);
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());

  const auto nu = static_cast<std::size_t>(n_users);
  const auto nv = static_cast<std::size_t>(n_items);
  g.u_off_.assign(nu + 1, 0);
  g.i_off_.assign(nv + 1, 0);
  for (const auto& [u, v] : edges) {
    ++g.u_off_[static_cast<std::size_t>(u) + 1];
    ++g.i_off_[static_cast<std::size_t>(v) + 1];
  }
  for (std::size_t i = 1; i <= nu; ++i) g.u_off_[i] += g.u_off_[i - 1];
  for (std::size_t i = 1; i <= nv; ++i) g.i_off_[i] += g.i_off_[i - 1];

  g.u2i_.resize(edges.size());
  g.i2u_.resize(edges.size());
  std::vector<std::size_t> ucur(g.u_off_.begin(), g.u_off_.end() - 1);
  std::vector<std::size_t> icur(g.i_off_.begin(), g.i_off_.end() - 1);
  for (const auto& [u, v] : edges) {
    g.u2i_[ucur[static_cast<std::size_t>(u)]++] = v;
    g.i2u_[icur[static_cast<std::size_t>(v)]++] = u;
  }
  // Edges were sorted by (u, v), so user lists are already ascending and the
  // item lists fill in ascending user order.

  g.du_inv_sqrt_.resize(n_users);
  for (Index u = 0; u < n_users; ++u) {
    const Index d = g.user_degree(u);
    g.du_inv_sqrt_[u] = d > 0 ? Scalar(1) / std::sqrt(static_cast<Scalar>(d)) : Scalar(0);
  }
  g.dv_inv_sqrt_.resize(n_items);
  for (Index v = 0; v < n_items; ++v) {
    const Index d = g.item_degree(v);
    g.dv_inv_sqrt_[v] = d > 0 ? Scalar(1) / std::sqrt(static_cast<Scalar>(d)) : Scalar(0);
  }
  return g;
}

bool InteractionGraph::has_edge(Index u, Index v) const {
  if (u < 0 || u >= n_users_ || v < 0 || v >= n_items_) return false;
  const auto items = items_of(u);
  return std::binary_search(items.begin(), items.end(), v);
}

Scalar norm_coeff(Index u, Index v, const InteractionGraph& g) {
  if (!g.has_edge(u, v))
    throw Error("norm_coeff: (" + std::to_string(u) + "," + std::to_string(v) +
                ") is not an edge");
  return g.inv_sqrt_user_degree(u) * g.inv_sqrt_item_degree(v);
}

KnowledgeGraph KnowledgeGraph::build(const std::vector<Triple>& triples, Index n_entities,
                                     Index n_relations, bool bidirectional) {
  KnowledgeGraph kg;
  kg.n_entities_ = n_entities;
  kg.n_relations_ = n_relations;
  for (const auto& t : triples) {
    if (t.head < 0 || t.head >= n_entities || t.tail < 0 || t.tail >= n_entities ||
        t.rel < 0 || t.rel >= n_relations)
      throw Error("knowledge graph: triple (" + std::to_string(t.head) + "," +
                  std::to_string(t.rel) + "," + std::to_string(t.tail) + ") out of range");
  }

  const auto ne = static_cast<std::size_t>(n_entities);
  kg.off_.assign(ne + 1, 0);
  for (const auto& t : triples) {
    ++kg.off_[static_cast<std::size_t>(t.head) + 1];
    if (bidirectional) ++kg.off_[static_cast<std::size_t>(t.tail) + 1];
  }
  for (std::size_t i = 1; i <= ne; ++i) kg.off_[i] += kg.off_[i - 1];

  const std::size_t total = kg.off_.back();
  kg.tails_.resize(total);
  kg.rels_.resize(total);
  std::vector<std::size_t> cur(kg.off_.begin(), kg.off_.end() - 1);
  for (const auto& t : triples) {
    auto& h = cur[static_cast<std::size_t>(t.head)];
    kg.rels_[h] = t.rel;
    kg.tails_[h] = t.tail;
    ++h;
    if (bidirectional) {
      auto& tt = cur[static_cast<std::size_t>(t.tail)];
      kg.rels_[tt] = t.rel;
      kg.tails_[tt] = t.head;
      ++tt;
    }
  }
  return kg;
}

NeighborSample sample_neighbors(const KnowledgeGraph& kg, Index entity, Index n_neighbor,
                                Rng& rng) {
  if (n_neighbor < 1) throw ConfigError("sample_neighbors: n_neighbor must be >= 1");
  if (entity < 0 || entity >= kg.num_entities())
    throw Error("sample_neighbors: entity out of range");

  const Index deg = kg.degree(entity);
  NeighborSample s;
  s.tails.reserve(static_cast<std::size_t>(n_neighbor));
  s.rels.reserve(static_cast<std::size_t>(n_neighbor));

  if (deg == 0) {
    // Sentinel: attend to the entity itself via relation 0, so the
    // aggregation degenerates to the self embedding instead of failing.
    for (Index i = 0; i < n_neighbor; ++i) {
      s.tails.push_back(entity);
      s.rels.push_back(0);
    }
    return s;
  }

  const auto tails = kg.tails_of(entity);
  const auto rels = kg.rels_of(entity);
  if (deg >= n_neighbor) {
    // Floyd's subset sampling: uniform over k-subsets, one draw per slot.
    std::unordered_set<Index> chosen;
    chosen.reserve(static_cast<std::size_t>(n_neighbor) * 2);
    for (Index j = deg - n_neighbor; j < deg; ++j) {
      Index pick = static_cast<Index>(rng.bounded(static_cast<std::uint64_t>(j) + 1));
      if (!chosen.insert(pick).second) {
        pick = j;
        chosen.insert(pick);
      }
      s.tails.push_back(tails[static_cast<std::size_t>(pick)]);
      s.rels.push_back(rels[static_cast<std::size_t>(pick)]);
    }
  } else {
    for (Index i = 0; i < n_neighbor; ++i) {
      const auto pick = static_cast<std::size_t>(rng.bounded(static_cast<std::uint64_t>(deg)));
      s.tails.push_back(tails[pick]);
      s.rels.push_back(rels[pick]);
    }
  }
  return s;
}

}  // namespace dekgci
