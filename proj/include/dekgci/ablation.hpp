#pragma once

#include "dekgci/model.hpp"

#include <functional>
#include <string>
#include <vector>

namespace dekgci {

enum class SweepKind { layers, aggregator, receptive_depth, variant };

SweepKind parse_sweep_kind(const std::string& name);
std::string to_string(SweepKind k);

struct SweepPoint {
  std::string label;      // e.g. "layers=2", "aggregator=sum"
  Hyperparams hyper;
  Scalar test_auc = 0;
  Scalar test_acc = 0;
  Scalar eval_auc = 0;
  Index best_epoch = 0;
};

// Trains one model per sweep value (layers 1..6, the three aggregators,
// depths 1..3, or the three propagation variants), evaluating each on the
// test split. Each point derives its own seed from the base seed and label.
std::vector<SweepPoint> run_ablation(SweepKind kind, const Hyperparams& base,
                                     const DatasetSplit& split, const InteractionGraph& g,
                                     const KnowledgeGraph& kg,
                                     const std::function<void(const SweepPoint&)>& on_point = nullptr);

}  // namespace dekgci
