#pragma once

#include "dekgci/rng.hpp"
#include "dekgci/types.hpp"

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace dekgci {

struct LabeledExample {
  Index user = 0;
  Index item = 0;
  int label = 0;

  friend bool operator==(const LabeledExample&, const LabeledExample&) = default;
};

// External ids are opaque strings. Dense indices are assigned by first
// appearance; item ids may instead be pinned to KG entity ids, see
// load_ratings.
struct IdMaps {
  std::unordered_map<std::string, Index> user_to_dense;
  std::unordered_map<std::string, Index> item_to_dense;
  std::vector<std::string> user_names;  // dense -> external
  std::vector<std::string> item_names;
};

struct RatingsTable {
  std::vector<LabeledExample> positives;  // label 1, deduplicated
  IdMaps ids;
  Index n_users = 0;
  Index n_items = 0;
  // Every item the user has any rating row for, positive or not, sorted
  // ascending. Negative sampling must avoid all of these.
  std::vector<std::vector<Index>> observed;
};

struct DatasetSplit {
  std::vector<LabeledExample> train;
  std::vector<LabeledExample> eval;
  std::vector<LabeledExample> test;
};

struct Triple {
  Index head = 0;
  Index rel = 0;
  Index tail = 0;

  friend bool operator==(const Triple&, const Triple&) = default;
};

struct KgData {
  std::vector<Triple> triples;
  Index n_entities = 0;
  Index n_relations = 0;
};

struct DatasetStats {
  Index n_users = 0;
  Index n_items = 0;
  std::size_t n_interactions = 0;  // positives + sampled negatives
  Scalar sparsity = 0;
  Index kg_entities = 0;
  Index kg_relations = 0;
  std::size_t kg_triples = 0;
};

// Rows are whitespace-separated `user item rating`; '#' lines and blanks are
// skipped. Rows with rating >= threshold (all rows when threshold is absent)
// become label-1 examples. Duplicate (user,item) pairs collapse to a single
// example, positive if any of the duplicates was positive.
//
// Item identity: with an alignment file (two columns `item_external
// entity_id`), items map to the given KG entity ids, which must cover
// 0..n_items-1 exactly once each. Without one, integer item tokens are taken
// as entity ids verbatim; non-integer tokens fall back to first-appearance
// numbering.
RatingsTable load_ratings(const std::string& path, std::optional<Scalar> positive_threshold,
                          const std::string& item2entity_path = {});

// One uniform negative per positive, drawn from the items the user never
// interacted with. A user with fewer unobserved items than positives yields
// as many distinct negatives as exist; shortfall, when non-null, counts the
// examples that could not be drawn.
std::vector<LabeledExample> sample_negatives(const std::vector<LabeledExample>& positives,
                                             Index n_items, Rng& rng,
                                             const std::vector<std::vector<Index>>& observed = {},
                                             std::size_t* shortfall = nullptr);

// Uniform shuffle, then contiguous 60/20/20 cut with the remainder in test.
// Throws on fewer than 5 examples.
DatasetSplit split_examples(std::vector<LabeledExample> examples, Rng& rng);

// Rows are whitespace-separated non-negative integers `head relation tail`.
// Entity count is 1 + max id seen, but never below min_entities so that item
// ids from the ratings side always index the entity table.
KgData load_kg(const std::string& path, Index min_entities = 0);

DatasetStats compute_stats(Index n_users, Index n_items, std::size_t n_interactions,
                           Index kg_entities, Index kg_relations, std::size_t kg_triples);

// Split manifests: line-delimited `user item label`, replayable without
// re-sampling.
void write_manifest(const std::string& path, const std::vector<LabeledExample>& examples);
std::vector<LabeledExample> read_manifest(const std::string& path);

}  // namespace dekgci
