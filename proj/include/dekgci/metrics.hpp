#pragma once

#include "dekgci/types.hpp"

#include <string>
#include <vector>

namespace dekgci {

struct MetricReport {
  std::string split;
  Scalar auc = 0;
  Scalar acc = 0;
  std::size_t count = 0;
};

// Mann-Whitney rank AUC; ties contribute 1/2 pair weight. Throws unless both
// classes are present.
Scalar auc(const std::vector<Scalar>& scores, const std::vector<int>& labels);

// Fraction of examples where (score > threshold) equals the label. The
// inequality is strict, so a score exactly at the threshold predicts 0.
Scalar acc(const std::vector<Scalar>& scores, const std::vector<int>& labels,
           Scalar threshold = 0.5);

MetricReport evaluate(const std::string& split_name, const std::vector<Scalar>& scores,
                      const std::vector<int>& labels);

}  // namespace dekgci
