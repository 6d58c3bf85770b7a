#include "dekgci/metrics.hpp"

#include <algorithm>
#include <numeric>

namespace dekgci {

Scalar auc(const std::vector<Scalar>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw Error("auc: score/label length mismatch");
  const std::size_t n = scores.size();
  std::size_t n_pos = 0;
  for (const int y : labels) {
    if (y != 0 && y != 1) throw Error("auc: labels must be 0 or 1");
    n_pos += static_cast<std::size_t>(y);
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw Error("auc: both classes must be present");

  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Mann-Whitney with average ranks over tie groups.
  Scalar pos_rank_sum = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && scores[idx[j]] == scores[idx[i]]) ++j;
    const Scalar avg_rank = static_cast<Scalar>(i + j + 1) / 2;  // ranks are 1-based
    for (std::size_t t = i; t < j; ++t)
      if (labels[idx[t]] == 1) pos_rank_sum += avg_rank;
    i = j;
  }
  const Scalar p = static_cast<Scalar>(n_pos);
  return (pos_rank_sum - p * (p + 1) / 2) / (p * static_cast<Scalar>(n_neg));
}

Scalar acc(const std::vector<Scalar>& scores, const std::vector<int>& labels, Scalar threshold) {
  if (scores.size() != labels.size()) throw Error("acc: score/label length mismatch");
  if (scores.empty()) throw Error("acc: empty input");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const int predicted = scores[i] > threshold ? 1 : 0;
    if (predicted == labels[i]) ++correct;
  }
  return static_cast<Scalar>(correct) / static_cast<Scalar>(scores.size());
}

MetricReport evaluate(const std::string& split_name, const std::vector<Scalar>& scores,
                      const std::vector<int>& labels) {
  return {split_name, auc(scores, labels), acc(scores, labels), scores.size()};
}

}  // namespace dekgci
