#include "dekgci/ingest.hpp"

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unordered_set>

namespace dekgci {
namespace {

bool is_comment_or_blank(const std::string& line) {
  const auto pos = line.find_first_not_of(" \t\r");
  return pos == std::string::npos || line[pos] == '#';
}

std::vector<std::string> tokenize(const std::string& line) {
  std::istringstream ss(line);
  std::vector<std::string> out;
  for (std::string tok; ss >> tok;) out.push_back(std::move(tok));
  return out;
}

[[noreturn]] void parse_fail(const std::string& path, std::size_t lineno, const std::string& what) {
  throw ParseError(path + ":" + std::to_string(lineno) + ": " + what);
}

bool parse_index(const std::string& tok, Index& out) {
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc{} || ptr != tok.data() + tok.size() || v < 0) return false;
  out = static_cast<Index>(v);
  return true;
}

bool parse_scalar(const std::string& tok, Scalar& out) {
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (end != tok.c_str() + tok.size() || errno == ERANGE || !std::isfinite(v)) return false;
  out = v;
  return true;
}

std::ifstream open_or_throw(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  return in;
}

// Packs a (user, item) pair for dedup maps. Index values fit comfortably in
// 32 bits for every dataset in scope; guarded at the call site.
std::uint64_t pair_key(Index u, Index v) {
  return (static_cast<std::uint64_t>(u) << 32) | static_cast<std::uint64_t>(v);
}

struct ItemMapping {
  // mode 0: alignment file; mode 1: integer tokens are entity ids;
  // mode 2: first-appearance numbering.
  int mode = 2;
  std::unordered_map<std::string, Index> map;
  Index n_items = 0;
};

ItemMapping load_alignment(const std::string& path) {
  ItemMapping m;
  m.mode = 0;
  std::ifstream in = open_or_throw(path);
  std::string line;
  std::size_t lineno = 0;
  std::unordered_set<Index> seen_entities;
  Index max_entity = -1;
  while (std::getline(in, line)) {
    ++lineno;
    if (is_comment_or_blank(line)) continue;
    const auto toks = tokenize(line);
    if (toks.size() != 2) parse_fail(path, lineno, "expected `item_external entity_id`");
    Index entity = 0;
    if (!parse_index(toks[1], entity)) parse_fail(path, lineno, "entity id must be a non-negative integer");
    if (!m.map.emplace(toks[0], entity).second)
      parse_fail(path, lineno, "duplicate item `" + toks[0] + "`");
    if (!seen_entities.insert(entity).second)
      parse_fail(path, lineno, "entity id " + std::to_string(entity) + " mapped twice");
    max_entity = std::max(max_entity, entity);
  }
  if (m.map.empty()) throw Error(path + ": empty alignment file");
  if (static_cast<std::size_t>(max_entity) + 1 != m.map.size())
    throw ConfigError(path + ": aligned entity ids must cover 0.." +
                      std::to_string(m.map.size() - 1) + " exactly");
  m.n_items = static_cast<Index>(m.map.size());
  return m;
}

}  // namespace

RatingsTable load_ratings(const std::string& path, std::optional<Scalar> positive_threshold,
                          const std::string& item2entity_path) {
  ItemMapping items;
  if (!item2entity_path.empty()) {
    items = load_alignment(item2entity_path);
  } else {
    // First pass decides whether item tokens can serve as entity ids
    // directly; one non-integer token switches the whole file to
    // first-appearance numbering.
    std::ifstream in = open_or_throw(path);
    std::string line;
    std::size_t lineno = 0;
    items.mode = 1;
    while (std::getline(in, line) && items.mode == 1) {
      ++lineno;
      if (is_comment_or_blank(line)) continue;
      const auto toks = tokenize(line);
      if (toks.size() < 3) parse_fail(path, lineno, "expected `user item rating`");
      Index ignored = 0;
      if (!parse_index(toks[1], ignored)) items.mode = 2;
    }
  }

  struct Row {
    std::string user;
    Index item;
    bool positive;
  };
  std::vector<Row> rows;

  {
    std::ifstream in = open_or_throw(path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (is_comment_or_blank(line)) continue;
      const auto toks = tokenize(line);
      if (toks.size() < 3) parse_fail(path, lineno, "expected `user item rating`");
      Scalar rating = 0;
      if (!parse_scalar(toks[2], rating)) parse_fail(path, lineno, "rating must be a finite number");

      Index item = -1;
      switch (items.mode) {
        case 0: {
          const auto it = items.map.find(toks[1]);
          if (it == items.map.end()) continue;  // item outside the KG alignment
          item = it->second;
          break;
        }
        case 1:
          if (!parse_index(toks[1], item)) parse_fail(path, lineno, "item id must be an integer");
          items.n_items = std::max(items.n_items, item + 1);
          break;
        default: {
          const auto [it, inserted] = items.map.emplace(toks[1], items.n_items);
          if (inserted) ++items.n_items;
          item = it->second;
          break;
        }
      }
      const bool positive = !positive_threshold || rating >= *positive_threshold;
      rows.push_back({toks[0], item, positive});
    }
  }
  if (rows.empty()) throw Error(path + ": no rating rows");
  if (items.n_items >= (Index(1) << 31)) throw Error(path + ": item id space too large");

  RatingsTable t;
  t.n_items = items.n_items;
  if (items.mode != 1) {
    t.ids.item_to_dense = std::move(items.map);
    t.ids.item_names.assign(static_cast<std::size_t>(t.n_items), {});
    for (const auto& [name, idx] : t.ids.item_to_dense)
      t.ids.item_names[static_cast<std::size_t>(idx)] = name;
  } else {
    // Identity mapping: the external name of item i is the decimal string i.
    t.ids.item_names.reserve(static_cast<std::size_t>(t.n_items));
    for (Index i = 0; i < t.n_items; ++i) t.ids.item_names.push_back(std::to_string(i));
    for (Index i = 0; i < t.n_items; ++i)
      t.ids.item_to_dense.emplace(t.ids.item_names[static_cast<std::size_t>(i)], i);
  }

  // Users earn an index only once they have a positive; users whose every
  // row falls below the threshold contribute nothing (no positives, so no
  // negatives either) and are dropped.
  for (const auto& r : rows) {
    if (!r.positive) continue;
    const auto [it, inserted] = t.ids.user_to_dense.emplace(r.user, t.n_users);
    if (inserted) {
      t.ids.user_names.push_back(r.user);
      ++t.n_users;
    }
  }
  if (t.n_users == 0) throw Error(path + ": no positive interactions after thresholding");

  std::unordered_map<std::uint64_t, bool> label_of;  // (u,v) -> any positive row
  std::vector<std::unordered_set<Index>> observed_sets(static_cast<std::size_t>(t.n_users));
  for (const auto& r : rows) {
    const auto uit = t.ids.user_to_dense.find(r.user);
    if (uit == t.ids.user_to_dense.end()) continue;
    const Index u = uit->second;
    observed_sets[static_cast<std::size_t>(u)].insert(r.item);
    auto& pos = label_of[pair_key(u, r.item)];
    pos = pos || r.positive;
  }

  t.positives.reserve(label_of.size());
  for (const auto& [key, positive] : label_of) {
    if (!positive) continue;
    t.positives.push_back({static_cast<Index>(key >> 32),
                           static_cast<Index>(key & 0xffffffffULL), 1});
  }
  std::sort(t.positives.begin(), t.positives.end(), [](const auto& a, const auto& b) {
    return a.user != b.user ? a.user < b.user : a.item < b.item;
  });

  t.observed.resize(static_cast<std::size_t>(t.n_users));
  for (Index u = 0; u < t.n_users; ++u) {
    auto& dst = t.observed[static_cast<std::size_t>(u)];
    dst.assign(observed_sets[static_cast<std::size_t>(u)].begin(),
               observed_sets[static_cast<std::size_t>(u)].end());
    std::sort(dst.begin(), dst.end());
  }
  return t;
}

std::vector<LabeledExample> sample_negatives(const std::vector<LabeledExample>& positives,
                                             Index n_items, Rng& rng,
                                             const std::vector<std::vector<Index>>& observed,
                                             std::size_t* shortfall) {
  if (shortfall) *shortfall = 0;
  Index n_users = 0;
  for (const auto& ex : positives) {
    if (ex.label != 1) throw Error("sample_negatives: batch contains a non-positive example");
    if (ex.item < 0 || ex.item >= n_items) throw Error("sample_negatives: item id out of range");
    n_users = std::max(n_users, ex.user + 1);
  }
  std::vector<std::vector<Index>> pos_by_user(static_cast<std::size_t>(n_users));
  for (const auto& ex : positives) pos_by_user[static_cast<std::size_t>(ex.user)].push_back(ex.item);

  std::vector<LabeledExample> negatives;
  negatives.reserve(positives.size());
  std::vector<Index> fallback;
  for (Index u = 0; u < n_users; ++u) {
    const auto& pos = pos_by_user[static_cast<std::size_t>(u)];
    if (pos.empty()) continue;
    if (static_cast<std::size_t>(u) < observed.size()) {
      fallback = observed[static_cast<std::size_t>(u)];
    } else {
      fallback = pos;
      std::sort(fallback.begin(), fallback.end());
    }
    const auto& obs = fallback;

    const std::size_t want = pos.size();
    const std::size_t avail = static_cast<std::size_t>(n_items) - obs.size();
    const std::size_t take = std::min(want, avail);
    if (shortfall) *shortfall += want - take;
    if (take == 0) continue;

    const auto is_observed = [&](Index x) {
      return std::binary_search(obs.begin(), obs.end(), x);
    };

    if (2 * take <= avail) {
      // Plenty of headroom: rejection sampling stays cheap.
      std::unordered_set<Index> chosen;
      chosen.reserve(take * 2);
      while (chosen.size() < take) {
        const Index x = static_cast<Index>(rng.bounded(static_cast<std::uint64_t>(n_items)));
        if (is_observed(x) || !chosen.insert(x).second) continue;
        negatives.push_back({u, x, 0});
      }
    } else {
      // Dense case: enumerate the complement and shuffle a prefix.
      std::vector<Index> comp;
      comp.reserve(avail);
      for (Index x = 0; x < n_items; ++x)
        if (!is_observed(x)) comp.push_back(x);
      for (std::size_t j = 0; j < take; ++j) {
        const std::size_t k = j + static_cast<std::size_t>(rng.bounded(comp.size() - j));
        std::swap(comp[j], comp[k]);
        negatives.push_back({u, comp[j], 0});
      }
    }
  }
  return negatives;
}

DatasetSplit split_examples(std::vector<LabeledExample> examples, Rng& rng) {
  const std::size_t n = examples.size();
  if (n < 5) throw Error("split_examples: need at least 5 examples for a 6:2:2 split");
  for (std::size_t j = n - 1; j > 0; --j) {
    const std::size_t k = static_cast<std::size_t>(rng.bounded(j + 1));
    std::swap(examples[j], examples[k]);
  }
  const std::size_t n_train = 6 * n / 10;
  const std::size_t n_eval = 2 * n / 10;
  DatasetSplit s;
  s.train.assign(examples.begin(), examples.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.eval.assign(examples.begin() + static_cast<std::ptrdiff_t>(n_train),
                examples.begin() + static_cast<std::ptrdiff_t>(n_train + n_eval));
  s.test.assign(examples.begin() + static_cast<std::ptrdiff_t>(n_train + n_eval), examples.end());
  return s;
}

KgData load_kg(const std::string& path, Index min_entities) {
  std::ifstream in = open_or_throw(path);
  KgData kg;
  Index max_entity = -1;
  Index max_rel = -1;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (is_comment_or_blank(line)) continue;
    const auto toks = tokenize(line);
    if (toks.size() != 3) parse_fail(path, lineno, "expected `head relation tail`");
    Triple t;
    if (!parse_index(toks[0], t.head) || !parse_index(toks[1], t.rel) ||
        !parse_index(toks[2], t.tail))
      parse_fail(path, lineno, "fields must be non-negative integers");
    max_entity = std::max({max_entity, t.head, t.tail});
    max_rel = std::max(max_rel, t.rel);
    kg.triples.push_back(t);
  }
  kg.n_entities = std::max(max_entity + 1, min_entities);
  kg.n_relations = std::max<Index>(max_rel + 1, 1);  // relation 0 doubles as the self-loop sentinel
  if (kg.n_entities == 0) throw Error(path + ": knowledge graph has no entities");
  return kg;
}

DatasetStats compute_stats(Index n_users, Index n_items, std::size_t n_interactions,
                           Index kg_entities, Index kg_relations, std::size_t kg_triples) {
  if (n_users <= 0 || n_items <= 0) throw Error("compute_stats: empty user or item set");
  DatasetStats s;
  s.n_users = n_users;
  s.n_items = n_items;
  s.n_interactions = n_interactions;
  s.sparsity = 1.0 - (static_cast<Scalar>(n_interactions) / 2.0) /
                         (static_cast<Scalar>(n_users) * static_cast<Scalar>(n_items));
  s.kg_entities = kg_entities;
  s.kg_relations = kg_relations;
  s.kg_triples = kg_triples;
  return s;
}

void write_manifest(const std::string& path, const std::vector<LabeledExample>& examples) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp);
    for (const auto& ex : examples)
      out << ex.user << '\t' << ex.item << '\t' << ex.label << '\n';
    if (!out.flush()) throw Error("write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

std::vector<LabeledExample> read_manifest(const std::string& path) {
  std::ifstream in = open_or_throw(path);
  std::vector<LabeledExample> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (is_comment_or_blank(line)) continue;
    const auto toks = tokenize(line);
    if (toks.size() != 3) parse_fail(path, lineno, "expected `user item label`");
    LabeledExample ex;
    Index label = 0;
    if (!parse_index(toks[0], ex.user) || !parse_index(toks[1], ex.item) ||
        !parse_index(toks[2], label) || label > 1)
      parse_fail(path, lineno, "fields must be integers with label in {0,1}");
    ex.label = static_cast<int>(label);
    out.push_back(ex);
  }
  return out;
}

}  // namespace dekgci
