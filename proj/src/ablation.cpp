#include "dekgci/ablation.hpp"

#include "dekgci/metrics.hpp"

namespace dekgci {
namespace {

std::uint64_t label_hash(const std::string& label) {
  std::uint64_t h = 0x61626c6174ULL;
  for (const char c : label) h = hash_combine(h, static_cast<std::uint64_t>(c));
  return h;
}

}  // namespace

SweepKind parse_sweep_kind(const std::string& name) {
  if (name == "layers") return SweepKind::layers;
  if (name == "aggregator") return SweepKind::aggregator;
  if (name == "depth" || name == "receptive_depth") return SweepKind::receptive_depth;
  if (name == "variant") return SweepKind::variant;
  throw ConfigError("unknown ablation `" + name +
                    "` (expected layers, aggregator, depth, or variant)");
}

std::string to_string(SweepKind k) {
  switch (k) {
    case SweepKind::layers: return "layers";
    case SweepKind::aggregator: return "aggregator";
    case SweepKind::receptive_depth: return "depth";
    default: return "variant";
  }
}

std::vector<SweepPoint> run_ablation(SweepKind kind, const Hyperparams& base,
                                     const DatasetSplit& split, const InteractionGraph& g,
                                     const KnowledgeGraph& kg,
                                     const std::function<void(const SweepPoint&)>& on_point) {
  std::vector<std::pair<std::string, Hyperparams>> points;
  switch (kind) {
    case SweepKind::layers:
      for (Index l = 1; l <= 6; ++l) {
        Hyperparams h = base;
        h.layers = l;
        points.emplace_back("layers=" + std::to_string(l), h);
      }
      break;
    case SweepKind::aggregator:
      for (const auto agg : {Aggregator::sum, Aggregator::concat, Aggregator::neighbor}) {
        Hyperparams h = base;
        h.aggregator = agg;
        points.emplace_back("aggregator=" + to_string(agg), h);
      }
      break;
    case SweepKind::receptive_depth:
      for (Index depth = 1; depth <= 3; ++depth) {
        Hyperparams h = base;
        h.depth = depth;
        points.emplace_back("depth=" + std::to_string(depth), h);
      }
      break;
    case SweepKind::variant:
      for (const auto v : {Variant::dekgci, Variant::ngcf, Variant::lightgcn}) {
        Hyperparams h = base;
        h.variant = v;
        points.emplace_back("variant=" + to_string(v), h);
      }
      break;
  }

  std::vector<int> test_labels;
  test_labels.reserve(split.test.size());
  for (const auto& ex : split.test) test_labels.push_back(ex.label);

  std::vector<SweepPoint> report;
  report.reserve(points.size());
  for (auto& [label, hyper] : points) {
    hyper.seed = hash_combine(base.seed, label_hash(label));
    const FitResult fit_result = fit(split, g, kg, hyper);

    SweepPoint pt;
    pt.label = label;
    pt.hyper = hyper;
    pt.eval_auc = fit_result.best_eval_auc;
    pt.best_epoch = fit_result.best_epoch;
    if (!split.test.empty()) {
      const auto scores = predict_scores(split.test, fit_result.params, g, kg, hyper,
                                         hash_combine(hyper.seed, 0x74657374ULL));
      pt.test_auc = auc(scores, test_labels);
      pt.test_acc = acc(scores, test_labels);
    }
    if (on_point) on_point(pt);
    report.push_back(std::move(pt));
  }
  return report;
}

}  // namespace dekgci
