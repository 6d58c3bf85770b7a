#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "dekgci/graph.hpp"
#include "dekgci/rng.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <vector>

using namespace dekgci;

namespace {

std::vector<LabeledExample> positives(std::initializer_list<std::pair<Index, Index>> edges) {
  std::vector<LabeledExample> out;
  for (const auto& [u, v] : edges) out.push_back({u, v, 1});
  return out;
}

}  // namespace

TEST_CASE("interaction graph exposes both neighbor directions") {
  // u0-v0, u0-v1, u1-v1, u2-v1: N(v1) = {u0, u1, u2}.
  const auto g = InteractionGraph::build(positives({{0, 0}, {0, 1}, {1, 1}, {2, 1}}), 3, 2);
  CHECK(g.num_edges() == 4);
  const auto nv1 = g.users_of(1);
  CHECK(std::vector<Index>(nv1.begin(), nv1.end()) == std::vector<Index>{0, 1, 2});
  const auto nu0 = g.items_of(0);
  CHECK(std::vector<Index>(nu0.begin(), nu0.end()) == std::vector<Index>{0, 1});
  CHECK(g.user_degree(0) == 2);
  CHECK(g.item_degree(1) == 3);
}

TEST_CASE("two-hop reachability crosses the bipartition") {
  // u0-v1, u2-v1: from u0, via v1, the two-hop set is {u0, u2}.
  const auto g = InteractionGraph::build(positives({{0, 1}, {2, 1}, {1, 0}}), 3, 2);
  std::set<Index> two_hop;
  for (const Index v : g.items_of(0))
    for (const Index u : g.users_of(v)) two_hop.insert(u);
  CHECK(two_hop == std::set<Index>{0, 2});
}

TEST_CASE("edge sets agree between directions") {
  const auto g = InteractionGraph::build(
      positives({{0, 0}, {0, 2}, {1, 1}, {2, 0}, {2, 1}, {2, 2}}), 3, 3);
  std::size_t user_side = 0, item_side = 0;
  for (Index u = 0; u < g.num_users(); ++u) user_side += static_cast<std::size_t>(g.user_degree(u));
  for (Index v = 0; v < g.num_items(); ++v) item_side += static_cast<std::size_t>(g.item_degree(v));
  CHECK(user_side == g.num_edges());
  CHECK(item_side == g.num_edges());
  for (Index u = 0; u < g.num_users(); ++u)
    for (const Index v : g.items_of(u)) {
      const auto users = g.users_of(v);
      CHECK(std::find(users.begin(), users.end(), u) != users.end());
    }
}

TEST_CASE("duplicate edges collapse") {
  const auto g = InteractionGraph::build(positives({{0, 0}, {0, 0}, {0, 0}}), 1, 1);
  CHECK(g.num_edges() == 1);
  CHECK(g.user_degree(0) == 1);
}

TEST_CASE("graph build validates inputs") {
  CHECK_THROWS_AS(InteractionGraph::build({{0, 0, 0}}, 1, 1), Error);   // label 0
  CHECK_THROWS_AS(InteractionGraph::build({{0, 5, 1}}, 1, 2), Error);   // item range
  CHECK_THROWS_AS(InteractionGraph::build({{-1, 0, 1}}, 1, 1), Error);  // user range
}

TEST_CASE("normalization uses both endpoint degrees") {
  // u0: degree 2; v0: degree 2; v1: degree 1; u1: degree 1; u2: degree 3.
  const auto g = InteractionGraph::build(
      positives({{0, 0}, {0, 1}, {1, 0}, {2, 2}, {2, 3}, {2, 4}}), 3, 5);
  CHECK(norm_coeff(0, 0, g) == doctest::Approx(0.5).epsilon(1e-12));          // 1/sqrt(2*2)
  CHECK(norm_coeff(1, 0, g) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
  CHECK(norm_coeff(2, 2, g) == doctest::Approx(1.0 / std::sqrt(3.0)).epsilon(1e-12));

  // Isolated-free singleton edge normalizes to exactly 1.
  const auto g1 = InteractionGraph::build(positives({{0, 0}}), 1, 1);
  CHECK(norm_coeff(0, 0, g1) == doctest::Approx(1.0).epsilon(1e-12));

  // degrees 2 and 3 give 1/sqrt(6).
  const auto g6 = InteractionGraph::build(
      positives({{0, 0}, {0, 1}, {1, 0}, {2, 0}}), 3, 2);
  CHECK(norm_coeff(0, 0, g6) == doctest::Approx(1.0 / std::sqrt(6.0)).epsilon(1e-12));
}

TEST_CASE("normalization is symmetric in its arguments' roles") {
  // Swapping the bipartition (users become items) must preserve coefficients.
  const auto fwd = InteractionGraph::build(positives({{0, 0}, {0, 1}, {1, 1}}), 2, 2);
  const auto rev = InteractionGraph::build(positives({{0, 0}, {1, 0}, {1, 1}}), 2, 2);
  CHECK(norm_coeff(0, 1, fwd) == doctest::Approx(norm_coeff(1, 0, rev)).epsilon(1e-12));
}

TEST_CASE("norm coefficient is only defined on edges") {
  const auto g = InteractionGraph::build(positives({{0, 0}}), 2, 2);
  CHECK_THROWS_AS(norm_coeff(0, 1, g), Error);
  CHECK_THROWS_AS(norm_coeff(1, 0, g), Error);
}

TEST_CASE("isolated nodes report zero inverse degree") {
  const auto g = InteractionGraph::build(positives({{0, 0}}), 2, 2);
  CHECK(g.inv_sqrt_user_degree(1) == 0.0);
  CHECK(g.inv_sqrt_item_degree(1) == 0.0);
  CHECK(g.user_degree(1) == 0);
}

TEST_CASE("bidirectional kg doubles the adjacency") {
  const std::vector<Triple> triples{{0, 0, 1}, {2, 1, 0}};
  const auto kg = KnowledgeGraph::build(triples, 3, 2, true);
  CHECK(kg.num_adjacency_entries() == 4);
  // Entity 0 sees 1 via rel 0 (forward) and 2 via rel 1 (reverse).
  const auto tails = kg.tails_of(0);
  const auto rels = kg.rels_of(0);
  REQUIRE(tails.size() == 2);
  std::map<Index, Index> adj;
  for (std::size_t i = 0; i < tails.size(); ++i) adj[tails[i]] = rels[i];
  CHECK(adj == std::map<Index, Index>{{1, 0}, {2, 1}});

  const auto mono = KnowledgeGraph::build(triples, 3, 2, false);
  CHECK(mono.num_adjacency_entries() == 2);
  CHECK(mono.degree(1) == 0);  // tail-only entity has no forward edges
}

TEST_CASE("kg build validates ranges") {
  CHECK_THROWS_AS(KnowledgeGraph::build({{0, 0, 9}}, 3, 1), Error);
  CHECK_THROWS_AS(KnowledgeGraph::build({{0, 9, 1}}, 3, 1), Error);
}

TEST_CASE("neighbor sampling without replacement at high degree") {
  std::vector<Triple> triples;
  for (Index t = 1; t <= 10; ++t) triples.push_back({0, t % 3, t});
  const auto kg = KnowledgeGraph::build(triples, 11, 3, false);
  Rng rng(17);
  const auto s = sample_neighbors(kg, 0, 4, rng);
  REQUIRE(s.tails.size() == 4);
  REQUIRE(s.rels.size() == 4);
  std::set<Index> distinct(s.tails.begin(), s.tails.end());
  CHECK(distinct.size() == 4);  // degree 10 >= 4: no repeats
  for (std::size_t i = 0; i < s.tails.size(); ++i)
    CHECK(s.rels[i] == s.tails[i] % 3);  // (rel, tail) pairs stay aligned
}

TEST_CASE("neighbor sampling with replacement below the budget") {
  const auto kg = KnowledgeGraph::build({{0, 1, 1}}, 2, 2, false);
  Rng rng(1);
  const auto s = sample_neighbors(kg, 0, 8, rng);
  REQUIRE(s.tails.size() == 8);
  for (std::size_t i = 0; i < 8; ++i) {
    CHECK(s.tails[i] == 1);
    CHECK(s.rels[i] == 1);
  }
}

TEST_CASE("degree-2 sampling hits both neighbors at the expected rate") {
  const auto kg = KnowledgeGraph::build({{0, 0, 1}, {0, 1, 2}}, 3, 2, false);
  Rng rng(2024);
  int both = 0;
  const int trials = 4096;
  for (int t = 0; t < trials; ++t) {
    const auto s = sample_neighbors(kg, 0, 8, rng);
    const std::set<Index> seen(s.tails.begin(), s.tails.end());
    if (seen.size() == 2) ++both;
  }
  // P(both present in 8 draws) = 1 - 2*(1/2)^8 = 0.9921875; allow 4 sigma.
  const double p = 0.9921875;
  const double sigma = std::sqrt(p * (1 - p) / trials);
  CHECK(std::abs(static_cast<double>(both) / trials - p) < 4 * sigma);
}

TEST_CASE("zero-degree entities sample the self sentinel") {
  const auto kg = KnowledgeGraph::build({{0, 1, 1}}, 5, 2, false);
  Rng rng(3);
  const auto s = sample_neighbors(kg, 4, 3, rng);
  REQUIRE(s.tails.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(s.tails[i] == 4);  // the entity itself
    CHECK(s.rels[i] == 0);   // sentinel relation
  }
}

TEST_CASE("neighbor sampling is deterministic under seed") {
  std::vector<Triple> triples;
  for (Index t = 1; t <= 30; ++t) triples.push_back({0, t % 5, t});
  const auto kg = KnowledgeGraph::build(triples, 31, 5, false);
  Rng a(12), b(12);
  for (int rep = 0; rep < 10; ++rep) {
    const auto sa = sample_neighbors(kg, 0, 6, a);
    const auto sb = sample_neighbors(kg, 0, 6, b);
    CHECK(sa.tails == sb.tails);
    CHECK(sa.rels == sb.rels);
  }
}
