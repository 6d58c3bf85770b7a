#include "dekgci/user_tower.hpp"

#include <algorithm>

namespace dekgci {
namespace {

// Degree-normalized neighbor sum into the user side:
// out.row(u) = sum_{v in N(u)} (1/sqrt(|N_u||N_v|)) src.row(v).
Mat gather_to_users(const InteractionGraph& g, const Mat& item_rows) {
  Mat out = Mat::Zero(g.num_users(), item_rows.cols());
  for (Index u = 0; u < g.num_users(); ++u) {
    auto row = out.row(u);
    for (const Index v : g.items_of(u)) row += g.inv_sqrt_item_degree(v) * item_rows.row(v);
    row *= g.inv_sqrt_user_degree(u);
  }
  return out;
}

Mat gather_to_items(const InteractionGraph& g, const Mat& user_rows) {
  Mat out = Mat::Zero(g.num_items(), user_rows.cols());
  for (Index v = 0; v < g.num_items(); ++v) {
    auto row = out.row(v);
    for (const Index u : g.users_of(v)) row += g.inv_sqrt_user_degree(u) * user_rows.row(u);
    row *= g.inv_sqrt_item_degree(v);
  }
  return out;
}

Mat leaky(const Mat& z, Scalar slope) {
  return (z.array() >= Scalar(0)).select(z.array(), slope * z.array()).matrix();
}

// 1 where the recorded activation is positive, slope elsewhere. Recovering
// the mask from the output is exact for slope > 0 since LeakyReLU preserves
// sign.
Mat grad_mask(const Mat& activated, Scalar slope) {
  return (activated.array() > Scalar(0)).select(Mat::Ones(activated.rows(), activated.cols()),
                                                Mat::Constant(activated.rows(),
                                                              activated.cols(), slope));
}

}  // namespace

Aggregator parse_aggregator(const std::string& name) {
  if (name == "sum") return Aggregator::sum;
  if (name == "concat") return Aggregator::concat;
  if (name == "neighbor") return Aggregator::neighbor;
  throw ConfigError("unknown aggregator `" + name + "` (expected sum, concat, or neighbor)");
}

Variant parse_variant(const std::string& name) {
  if (name == "dekgci") return Variant::dekgci;
  if (name == "ngcf") return Variant::ngcf;
  if (name == "lightgcn") return Variant::lightgcn;
  throw ConfigError("unknown variant `" + name + "` (expected dekgci, ngcf, or lightgcn)");
}

std::string to_string(Aggregator a) {
  switch (a) {
    case Aggregator::sum: return "sum";
    case Aggregator::concat: return "concat";
    default: return "neighbor";
  }
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::dekgci: return "dekgci";
    case Variant::ngcf: return "ngcf";
    default: return "lightgcn";
  }
}

void validate(const PropagationConfig& cfg) {
  if (cfg.layers < 1) throw ConfigError("layers must be >= 1");
  if (cfg.dim < 1) throw ConfigError("dim must be >= 1");
  if (!(cfg.leaky_slope > 0 && cfg.leaky_slope <= 1))
    throw ConfigError("leaky_slope must lie in (0, 1]");
}

Index final_dim(const PropagationConfig& cfg) {
  switch (cfg.aggregator) {
    case Aggregator::sum: return cfg.dim;
    case Aggregator::concat: return (cfg.layers + 1) * cfg.dim;
    default: return cfg.layers * cfg.dim;
  }
}

Vec message(Index u, Index v, Index layer, const InteractionGraph& g,
            const PropagationWeights& w, const PropagationTrace& prev) {
  if (layer < 1 || static_cast<std::size_t>(layer) > w.w1.size())
    throw Error("message: layer out of range");
  const Mat& w1 = w.w1[static_cast<std::size_t>(layer - 1)];
  const Mat& items = prev.item[static_cast<std::size_t>(layer - 1)];
  if (w1.cols() != items.cols()) throw Error("message: dimension mismatch");
  const Scalar c = norm_coeff(u, v, g);
  return c * (w1 * items.row(v).transpose());
}

void propagate_layer(Index l, const InteractionGraph& g, const PropagationConfig& cfg,
                     const PropagationWeights& w, PropagationTrace& trace) {
  const auto li = static_cast<std::size_t>(l);
  if (li != trace.user.size() || li != trace.item.size() || l < 1)
    throw Error("propagate_layer: layers must be built in order");
  const Mat& pu = trace.user[li - 1];
  const Mat& pv = trace.item[li - 1];
  Mat su = gather_to_users(g, pv);
  Mat sv = gather_to_items(g, pu);

  switch (cfg.variant) {
    case Variant::lightgcn:
      trace.user.push_back(std::move(su));
      trace.item.push_back(std::move(sv));
      break;
    case Variant::dekgci: {
      const Mat& w1 = w.w1[li - 1];
      trace.user.push_back(leaky(su * w1.transpose(), cfg.leaky_slope));
      trace.item.push_back(leaky(sv * w1.transpose(), cfg.leaky_slope));
      trace.user_s.push_back(std::move(su));
      trace.item_s.push_back(std::move(sv));
      break;
    }
    case Variant::ngcf: {
      const Mat& w1 = w.w1[li - 1];
      const Mat& w2 = w.w2[li - 1];
      Mat zu = (pu + su) * w1.transpose() + (su.array() * pu.array()).matrix() * w2.transpose();
      Mat zv = (pv + sv) * w1.transpose() + (sv.array() * pv.array()).matrix() * w2.transpose();
      trace.user.push_back(leaky(zu, cfg.leaky_slope));
      trace.item.push_back(leaky(zv, cfg.leaky_slope));
      trace.user_s.push_back(std::move(su));
      trace.item_s.push_back(std::move(sv));
      break;
    }
  }
}

PropagationTrace propagate(const InteractionGraph& g, const PropagationConfig& cfg,
                           const PropagationWeights& w, const Mat& user0, const Mat& item0) {
  validate(cfg);
  if (user0.rows() != g.num_users() || item0.rows() != g.num_items() ||
      user0.cols() != cfg.dim || item0.cols() != cfg.dim)
    throw Error("propagate: base table shapes disagree with graph/config");
  if (cfg.variant != Variant::lightgcn &&
      w.w1.size() != static_cast<std::size_t>(cfg.layers))
    throw Error("propagate: need one transform per layer");
  if (cfg.variant == Variant::ngcf && w.w2.size() != static_cast<std::size_t>(cfg.layers))
    throw Error("propagate: ngcf needs the interaction transform per layer");

  PropagationTrace trace;
  trace.user.reserve(static_cast<std::size_t>(cfg.layers) + 1);
  trace.item.reserve(static_cast<std::size_t>(cfg.layers) + 1);
  trace.user.push_back(user0);
  trace.item.push_back(item0);
  // user_s/item_s are indexed so that entry l-1 belongs to layer l.
  for (Index l = 1; l <= cfg.layers; ++l) propagate_layer(l, g, cfg, w, trace);
  return trace;
}

Mat aggregate(const std::vector<Mat>& layer_tables, Aggregator agg) {
  if (layer_tables.empty()) throw Error("aggregate: no layer tables");
  const Index rows = layer_tables.front().rows();
  const Index d = layer_tables.front().cols();
  const auto n_layers = static_cast<Index>(layer_tables.size()) - 1;

  switch (agg) {
    case Aggregator::sum: {
      Mat out = layer_tables.front();
      for (std::size_t l = 1; l < layer_tables.size(); ++l) out += layer_tables[l];
      return out;
    }
    case Aggregator::concat: {
      Mat out(rows, (n_layers + 1) * d);
      for (std::size_t l = 0; l < layer_tables.size(); ++l)
        out.middleCols(static_cast<Index>(l) * d, d) = layer_tables[l];
      return out;
    }
    default: {
      if (n_layers < 1) throw Error("aggregate: neighbor aggregation needs at least one layer");
      Mat out(rows, n_layers * d);
      for (std::size_t l = 1; l < layer_tables.size(); ++l)
        out.middleCols(static_cast<Index>(l - 1) * d, d) = layer_tables[l];
      return out;
    }
  }
}

Vec aggregate_row(const std::vector<Mat>& layer_tables, Index row, Aggregator agg) {
  if (layer_tables.empty()) throw Error("aggregate_row: no layer tables");
  const Index d = layer_tables.front().cols();
  switch (agg) {
    case Aggregator::sum: {
      Vec out = layer_tables.front().row(row).transpose();
      for (std::size_t l = 1; l < layer_tables.size(); ++l)
        out += layer_tables[l].row(row).transpose();
      return out;
    }
    case Aggregator::concat: {
      Vec out(static_cast<Index>(layer_tables.size()) * d);
      for (std::size_t l = 0; l < layer_tables.size(); ++l)
        out.segment(static_cast<Index>(l) * d, d) = layer_tables[l].row(row).transpose();
      return out;
    }
    default: {
      if (layer_tables.size() < 2)
        throw Error("aggregate_row: neighbor aggregation needs at least one layer");
      Vec out((static_cast<Index>(layer_tables.size()) - 1) * d);
      for (std::size_t l = 1; l < layer_tables.size(); ++l)
        out.segment(static_cast<Index>(l - 1) * d, d) = layer_tables[l].row(row).transpose();
      return out;
    }
  }
}

void propagate_backward(const InteractionGraph& g, const PropagationConfig& cfg,
                        const PropagationWeights& w, const PropagationTrace& trace,
                        std::vector<Mat>& g_user, std::vector<Mat>& g_item,
                        PropagationWeights& g_w) {
  const auto layers = static_cast<std::size_t>(cfg.layers);
  if (g_user.size() != layers + 1 || g_item.size() != layers + 1)
    throw Error("propagate_backward: need one gradient table per layer");

  Mat gu = g_user[layers];
  Mat gv = g_item[layers];
  for (std::size_t l = layers; l >= 1; --l) {
    Mat gu_prev, gv_prev;
    switch (cfg.variant) {
      case Variant::lightgcn:
        // Layer output is the gathered sum itself; the adjoint of a gather
        // in one direction is the gather in the other.
        gu_prev = gather_to_users(g, gv);
        gv_prev = gather_to_items(g, gu);
        break;
      case Variant::dekgci: {
        const Mat& w1 = w.w1[l - 1];
        const Mat gzu = gu.array() * grad_mask(trace.user[l], cfg.leaky_slope).array();
        const Mat gzv = gv.array() * grad_mask(trace.item[l], cfg.leaky_slope).array();
        g_w.w1[l - 1] += gzu.transpose() * trace.user_s[l - 1] +
                         gzv.transpose() * trace.item_s[l - 1];
        gu_prev = gather_to_users(g, gzv * w1);
        gv_prev = gather_to_items(g, gzu * w1);
        break;
      }
      case Variant::ngcf: {
        const Mat& w1 = w.w1[l - 1];
        const Mat& w2 = w.w2[l - 1];
        const Mat& pu = trace.user[l - 1];
        const Mat& pv = trace.item[l - 1];
        const Mat& su = trace.user_s[l - 1];
        const Mat& sv = trace.item_s[l - 1];
        const Mat gzu = gu.array() * grad_mask(trace.user[l], cfg.leaky_slope).array();
        const Mat gzv = gv.array() * grad_mask(trace.item[l], cfg.leaky_slope).array();

        g_w.w1[l - 1] += gzu.transpose() * (pu + su) + gzv.transpose() * (pv + sv);
        g_w.w2[l - 1] += gzu.transpose() * (su.array() * pu.array()).matrix() +
                         gzv.transpose() * (sv.array() * pv.array()).matrix();

        const Mat gzu_w1 = gzu * w1;
        const Mat gzu_w2 = gzu * w2;
        const Mat gzv_w1 = gzv * w1;
        const Mat gzv_w2 = gzv * w2;
        // d/d s_u and d/d s_v, each then pushed through the gather adjoint.
        const Mat dsu = gzu_w1 + (gzu_w2.array() * pu.array()).matrix();
        const Mat dsv = gzv_w1 + (gzv_w2.array() * pv.array()).matrix();
        gu_prev = gzu_w1 + (gzu_w2.array() * su.array()).matrix() + gather_to_users(g, dsv);
        gv_prev = gzv_w1 + (gzv_w2.array() * sv.array()).matrix() + gather_to_items(g, dsu);
        break;
      }
    }
    gu = std::move(gu_prev) + g_user[l - 1];
    gv = std::move(gv_prev) + g_item[l - 1];
  }
  g_user[0] = std::move(gu);
  g_item[0] = std::move(gv);
}

}  // namespace dekgci
