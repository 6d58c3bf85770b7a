#include "dekgci/stats.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace dekgci {
namespace {

std::vector<std::string> tokenize(const std::string& line) {
  std::istringstream ss(line);
  std::vector<std::string> out;
  for (std::string tok; ss >> tok;) out.push_back(std::move(tok));
  return out;
}

// Average ranks with 1 = best (highest score), ties averaged.
Vec column_ranks(const Vec& scores) {
  const Index k = scores.size();
  std::vector<Index> idx(static_cast<std::size_t>(k));
  std::iota(idx.begin(), idx.end(), Index(0));
  std::sort(idx.begin(), idx.end(), [&](Index a, Index b) { return scores[a] > scores[b]; });

  Vec ranks(k);
  Index i = 0;
  while (i < k) {
    Index j = i;
    while (j < k && scores[idx[static_cast<std::size_t>(j)]] ==
                        scores[idx[static_cast<std::size_t>(i)]])
      ++j;
    const Scalar avg = static_cast<Scalar>(i + j + 1) / 2;
    for (Index t = i; t < j; ++t) ranks[idx[static_cast<std::size_t>(t)]] = avg;
    i = j;
  }
  return ranks;
}

}  // namespace

ScoreMatrix load_score_matrix(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);

  ScoreMatrix sm;
  std::vector<std::vector<Scalar>> rows;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    const auto pos = line.find_first_not_of(" \t\r");
    if (pos == std::string::npos || line[pos] == '#') continue;
    auto toks = tokenize(line);
    if (!have_header) {
      if (toks.size() < 3)
        throw ParseError(path + ":" + std::to_string(lineno) + ": header needs >= 2 problems");
      sm.problems.assign(toks.begin() + 1, toks.end());  // first token labels the name column
      have_header = true;
      continue;
    }
    if (toks.size() != sm.problems.size() + 1)
      throw ParseError(path + ":" + std::to_string(lineno) + ": expected " +
                       std::to_string(sm.problems.size()) + " scores");
    sm.algorithms.push_back(toks[0]);
    std::vector<Scalar> row;
    for (std::size_t c = 1; c < toks.size(); ++c) {
      try {
        std::size_t used = 0;
        const Scalar v = std::stod(toks[c], &used);
        if (used != toks[c].size() || !std::isfinite(v)) throw std::invalid_argument("");
        row.push_back(v);
      } catch (const std::exception&) {
        throw ParseError(path + ":" + std::to_string(lineno) + ": bad score `" + toks[c] + "`");
      }
    }
    rows.push_back(std::move(row));
  }
  if (!have_header || rows.size() < 2)
    throw Error(path + ": need a header and at least 2 algorithm rows");

  sm.scores.resize(static_cast<Index>(rows.size()), static_cast<Index>(sm.problems.size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c)
      sm.scores(static_cast<Index>(r), static_cast<Index>(c)) = rows[r][c];
  return sm;
}

FriedmanResult friedman(const ScoreMatrix& sm) {
  const Index k = sm.scores.rows();
  const Index n = sm.scores.cols();
  if (k < 2 || n < 2) throw Error("friedman: need k >= 2 algorithms and N >= 2 problems");

  FriedmanResult fr;
  fr.n_algorithms = k;
  fr.n_problems = n;
  fr.avg_ranks = Vec::Zero(k);
  for (Index c = 0; c < n; ++c) fr.avg_ranks += column_ranks(sm.scores.col(c));
  fr.avg_ranks /= static_cast<Scalar>(n);

  const Scalar kk = static_cast<Scalar>(k);
  const Scalar nn = static_cast<Scalar>(n);
  fr.chi2 = (12 * nn / (kk * (kk + 1))) * fr.avg_ranks.squaredNorm() - 3 * nn * (kk + 1);
  const Scalar denom = nn * (kk - 1) - fr.chi2;
  if (std::abs(denom) < 1e-9 * std::max(Scalar(1), nn * (kk - 1)))
    throw Error("friedman: Iman-Davenport statistic is undefined for unanimous rankings");
  fr.ff = (nn - 1) * fr.chi2 / denom;
  return fr;
}

std::vector<HolmRow> holm_posthoc(const FriedmanResult& fr, const ScoreMatrix& sm,
                                  Scalar alpha, Index control) {
  const Index k = fr.n_algorithms;
  if (static_cast<Index>(sm.algorithms.size()) != k)
    throw Error("holm_posthoc: rank/matrix size mismatch");
  if (control < 0) {
    fr.avg_ranks.minCoeff(&control);
  }
  if (control >= k) throw Error("holm_posthoc: control index out of range");

  const Scalar se = std::sqrt(static_cast<Scalar>(k) * (static_cast<Scalar>(k) + 1) /
                              (6 * static_cast<Scalar>(fr.n_problems)));
  std::vector<HolmRow> rows;
  rows.reserve(static_cast<std::size_t>(k) - 1);
  for (Index i = 0; i < k; ++i) {
    if (i == control) continue;
    HolmRow r;
    r.algorithm = sm.algorithms[static_cast<std::size_t>(i)];
    r.avg_rank = fr.avg_ranks[i];
    r.z = (fr.avg_ranks[i] - fr.avg_ranks[control]) / se;
    r.p = std::erfc(std::abs(r.z) / std::sqrt(Scalar(2)));  // two-sided normal
    rows.push_back(std::move(r));
  }
  std::sort(rows.begin(), rows.end(), [](const HolmRow& a, const HolmRow& b) {
    return a.p != b.p ? a.p < b.p : a.z > b.z;
  });
  bool keep_rejecting = true;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    rows[i].threshold = alpha / static_cast<Scalar>(k - 1 - static_cast<Index>(i));
    keep_rejecting = keep_rejecting && rows[i].p <= rows[i].threshold;
    rows[i].rejected = keep_rejecting;
  }
  return rows;
}

}  // namespace dekgci
