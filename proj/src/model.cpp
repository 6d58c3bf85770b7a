#include "dekgci/model.hpp"

#include "dekgci/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace dekgci {
namespace {

constexpr Scalar kClampEps = 1e-7;
constexpr std::uint64_t kNegSalt = 0x6e656761746976ULL;   // stream tags, arbitrary
constexpr std::uint64_t kShuffleSalt = 0x73687566666cULL;
constexpr std::uint64_t kEvalSalt = 0x6576616cULL;

void xavier_fill(Mat& m, Index fan_in, Index fan_out, Rng& rng) {
  const Scalar bound = std::sqrt(Scalar(6) / static_cast<Scalar>(fan_in + fan_out));
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) m(i, j) = rng.uniform_sym(bound);
}

struct TensorView {
  std::string name;
  Scalar* data;
  std::ptrdiff_t size;
};

std::vector<TensorView> views(ModelParams& p) {
  std::vector<TensorView> out;
  out.push_back({"user", p.user.data(), p.user.size()});
  out.push_back({"entity", p.entity.data(), p.entity.size()});
  out.push_back({"relation", p.relation.data(), p.relation.size()});
  for (std::size_t l = 0; l < p.propagation.w1.size(); ++l)
    out.push_back({"w1[" + std::to_string(l) + "]", p.propagation.w1[l].data(),
                   p.propagation.w1[l].size()});
  for (std::size_t l = 0; l < p.propagation.w2.size(); ++l)
    out.push_back({"w1x[" + std::to_string(l) + "]", p.propagation.w2[l].data(),
                   p.propagation.w2[l].size()});
  out.push_back({"w2", p.w2.data(), p.w2.size()});
  out.push_back({"b", p.b.data(), p.b.size()});
  return out;
}

// Scatters the gradient of the aggregated representation back onto the
// per-layer tables.
std::vector<Mat> split_aggregated_grad(const Mat& g_star, Index layers, Index d, Aggregator agg) {
  std::vector<Mat> out(static_cast<std::size_t>(layers) + 1);
  switch (agg) {
    case Aggregator::sum:
      for (auto& m : out) m = g_star;
      break;
    case Aggregator::concat:
      for (Index l = 0; l <= layers; ++l)
        out[static_cast<std::size_t>(l)] = g_star.middleCols(l * d, d);
      break;
    default:
      out[0] = Mat::Zero(g_star.rows(), d);
      for (Index l = 1; l <= layers; ++l)
        out[static_cast<std::size_t>(l)] = g_star.middleCols((l - 1) * d, d);
      break;
  }
  return out;
}

bool all_finite(const ModelParams& p) {
  bool ok = true;
  for_each_tensor(p, [&](const std::string&, const Scalar* data, std::ptrdiff_t n) {
    for (std::ptrdiff_t i = 0; i < n; ++i)
      if (!std::isfinite(data[i])) ok = false;
  });
  return ok;
}

}  // namespace

void validate(const Hyperparams& h) {
  validate(h.propagation());
  validate(h.receptive());
  if (h.batchsize < 1) throw ConfigError("batchsize must be >= 1");
  if (!(h.lr >= 0) || !std::isfinite(h.lr)) throw ConfigError("lr must be finite and >= 0");
  if (h.max_epochs < 1) throw ConfigError("epochs must be >= 1");
  if (h.patience < 1) throw ConfigError("patience must be >= 1");
  if (h.weight_decay < 0) throw ConfigError("weight_decay must be >= 0");
  if (h.depth > 1 && final_dim(h.propagation()) != h.dim)
    throw ConfigError("receptive depth >= 2 feeds item outputs back in as embeddings, which "
                      "requires the sum aggregator (final dim == dim)");
}

ModelParams zeros_like(const ModelParams& p) {
  ModelParams z;
  z.user = Mat::Zero(p.user.rows(), p.user.cols());
  z.entity = Mat::Zero(p.entity.rows(), p.entity.cols());
  z.relation = Mat::Zero(p.relation.rows(), p.relation.cols());
  z.propagation.w1.reserve(p.propagation.w1.size());
  for (const auto& w : p.propagation.w1) z.propagation.w1.push_back(Mat::Zero(w.rows(), w.cols()));
  z.propagation.w2.reserve(p.propagation.w2.size());
  for (const auto& w : p.propagation.w2) z.propagation.w2.push_back(Mat::Zero(w.rows(), w.cols()));
  z.w2 = Mat::Zero(p.w2.rows(), p.w2.cols());
  z.b = Vec::Zero(p.b.size());
  return z;
}

void for_each_tensor(ModelParams& p,
                     const std::function<void(const std::string&, Scalar*, std::ptrdiff_t)>& fn) {
  for (auto& v : views(p)) fn(v.name, v.data, v.size);
}

void for_each_tensor(const ModelParams& p,
                     const std::function<void(const std::string&, const Scalar*, std::ptrdiff_t)>& fn) {
  for (auto& v : views(const_cast<ModelParams&>(p))) fn(v.name, v.data, v.size);
}

ModelParams init_params(Index n_users, Index n_entities, Index n_relations,
                        const Hyperparams& h, std::uint64_t seed) {
  validate(h);
  if (n_users < 1 || n_entities < 1 || n_relations < 1)
    throw ConfigError("init_params: table sizes must be positive");
  const Index d = h.dim;
  const Index big_d = final_dim(h.propagation());
  Rng rng(hash_combine(seed, 0x696e6974ULL));

  ModelParams p;
  p.user.resize(n_users, d);
  xavier_fill(p.user, d, d, rng);
  p.entity.resize(n_entities, d);
  xavier_fill(p.entity, d, d, rng);
  p.relation.resize(n_relations, big_d);
  xavier_fill(p.relation, big_d, big_d, rng);

  const Index n_transforms = h.variant == Variant::lightgcn ? 0 : h.layers;
  for (Index l = 0; l < n_transforms; ++l) {
    Mat w(d, d);
    xavier_fill(w, d, d, rng);
    p.propagation.w1.push_back(std::move(w));
  }
  if (h.variant == Variant::ngcf) {
    for (Index l = 0; l < h.layers; ++l) {
      Mat w(d, d);
      xavier_fill(w, d, d, rng);
      p.propagation.w2.push_back(std::move(w));
    }
  }

  p.w2.resize(big_d, d);
  xavier_fill(p.w2, d, big_d, rng);
  p.b = Vec::Zero(big_d);
  return p;
}

std::uint64_t example_seed(std::uint64_t run_seed, std::uint64_t epoch, Index user, Index item,
                           int label) {
  std::uint64_t s = hash_combine(run_seed, kNegSalt);
  s = hash_combine(s, epoch);
  s = hash_combine(s, static_cast<std::uint64_t>(user));
  s = hash_combine(s, static_cast<std::uint64_t>(item));
  return hash_combine(s, static_cast<std::uint64_t>(label));
}

std::uint64_t eval_salt(std::uint64_t run_seed) { return hash_combine(run_seed, kEvalSalt); }

Scalar predict_one(const LabeledExample& ex, const Mat& user_repr, const ModelParams& p,
                   const KnowledgeGraph& kg, const Hyperparams& h, Rng& rng,
                   ItemNodeTrace* trace) {
  const Vec eu = user_repr.row(ex.user).transpose();
  ItemNodeTrace t = item_representation(ex.item, kg, eu, p.item_tower_view(), h.receptive(),
                                        h.leaky_slope, rng);
  const Scalar logit = eu.dot(t.out);
  if (trace) *trace = std::move(t);
  return sigmoid(logit);
}

std::vector<Scalar> predict_scores(const std::vector<LabeledExample>& examples,
                                   const ModelParams& p, const InteractionGraph& g,
                                   const KnowledgeGraph& kg, const Hyperparams& h,
                                   std::uint64_t seed_salt) {
  const PropagationConfig cfg = h.propagation();
  const Mat items0 = p.entity.topRows(g.num_items());
  const PropagationTrace trace = propagate(g, cfg, p.propagation, p.user, items0);
  const Mat user_repr = aggregate(trace.user, cfg.aggregator);

  std::vector<Scalar> scores;
  scores.reserve(examples.size());
  for (const auto& ex : examples) {
    std::uint64_t s = hash_combine(seed_salt, static_cast<std::uint64_t>(ex.user));
    s = hash_combine(s, static_cast<std::uint64_t>(ex.item));
    Rng rng(s);
    scores.push_back(predict_one(ex, user_repr, p, kg, h, rng));
  }
  return scores;
}

Scalar batch_loss(const std::vector<LabeledExample>& batch, const ModelParams& p,
                  const InteractionGraph& g, const KnowledgeGraph& kg, const Hyperparams& h,
                  std::uint64_t epoch) {
  if (batch.empty()) throw Error("batch_loss: empty batch");
  const PropagationConfig cfg = h.propagation();
  const Mat items0 = p.entity.topRows(g.num_items());
  const PropagationTrace trace = propagate(g, cfg, p.propagation, p.user, items0);
  const Mat user_repr = aggregate(trace.user, cfg.aggregator);

  Scalar loss = 0;
  for (const auto& ex : batch) {
    Rng rng(example_seed(h.seed, epoch, ex.user, ex.item, ex.label));
    const Scalar s = predict_one(ex, user_repr, p, kg, h, rng);
    const Scalar y = static_cast<Scalar>(ex.label);
    const Scalar pr = std::clamp(s, kClampEps, Scalar(1) - kClampEps);
    loss += -(y * std::log(pr) + (Scalar(1) - y) * std::log(Scalar(1) - pr));
  }
  return loss;
}

GradientSet backward(const std::vector<LabeledExample>& batch, const ModelParams& p,
                     const InteractionGraph& g, const KnowledgeGraph& kg, const Hyperparams& h,
                     std::uint64_t epoch, Scalar* loss_out) {
  if (batch.empty()) throw Error("backward: empty batch");
  const PropagationConfig cfg = h.propagation();
  const Index n_items = g.num_items();
  const Mat items0 = p.entity.topRows(n_items);
  const PropagationTrace trace = propagate(g, cfg, p.propagation, p.user, items0);
  const Mat user_repr = aggregate(trace.user, cfg.aggregator);
  const Index big_d = user_repr.cols();

  GradientSet grads = zeros_like(p);
  ItemTowerGrads item_g{&grads.entity, &grads.relation, &grads.w2, &grads.b};
  Mat g_user_star = Mat::Zero(user_repr.rows(), big_d);

  Scalar loss = 0;
  for (const auto& ex : batch) {
    Rng rng(example_seed(h.seed, epoch, ex.user, ex.item, ex.label));
    ItemNodeTrace it;
    const Scalar s = predict_one(ex, user_repr, p, kg, h, rng, &it);
    const Scalar y = static_cast<Scalar>(ex.label);
    const Scalar pr = std::clamp(s, kClampEps, Scalar(1) - kClampEps);
    loss += -(y * std::log(pr) + (Scalar(1) - y) * std::log(Scalar(1) - pr));

    // d loss / d logit collapses to s - y through the sigmoid; the clamp
    // zeroes it at saturation so the analytic value matches the (locally
    // constant) clamped loss.
    const bool clamped = s < kClampEps || s > Scalar(1) - kClampEps;
    const Scalar g_logit = clamped ? Scalar(0) : s - y;
    if (g_logit == Scalar(0)) continue;

    const Vec eu = user_repr.row(ex.user).transpose();
    Vec g_eu = g_logit * it.out;  // direct path through the inner product
    const Vec g_ev = g_logit * eu;
    item_backward(it, g_ev, eu, p.item_tower_view(), h.leaky_slope, item_g, g_eu);
    g_user_star.row(ex.user) += g_eu.transpose();
  }

  std::vector<Mat> g_user = split_aggregated_grad(g_user_star, cfg.layers, cfg.dim,
                                                  cfg.aggregator);
  std::vector<Mat> g_item(static_cast<std::size_t>(cfg.layers) + 1,
                          Mat::Zero(n_items, cfg.dim));
  PropagationWeights g_w;
  for (const auto& w : p.propagation.w1) g_w.w1.push_back(Mat::Zero(w.rows(), w.cols()));
  for (const auto& w : p.propagation.w2) g_w.w2.push_back(Mat::Zero(w.rows(), w.cols()));

  propagate_backward(g, cfg, p.propagation, trace, g_user, g_item, g_w);

  grads.user += g_user[0];
  grads.entity.topRows(n_items) += g_item[0];
  grads.propagation = std::move(g_w);

  if (loss_out) *loss_out = loss;
  return grads;
}

AdamState make_adam_state(const ModelParams& p) {
  return {zeros_like(p), zeros_like(p), 0};
}

void adam_step(ModelParams& p, const GradientSet& g, AdamState& st, Scalar lr,
               Scalar weight_decay) {
  constexpr Scalar beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  st.step += 1;
  const Scalar bc1 = Scalar(1) - std::pow(beta1, static_cast<Scalar>(st.step));
  const Scalar bc2 = Scalar(1) - std::pow(beta2, static_cast<Scalar>(st.step));

  auto pv = views(p);
  auto gv = views(const_cast<GradientSet&>(g));
  auto mv = views(st.m);
  auto vv = views(st.v);
  if (pv.size() != gv.size()) throw Error("adam_step: gradient layout mismatch");
  for (std::size_t t = 0; t < pv.size(); ++t) {
    if (pv[t].size != gv[t].size) throw Error("adam_step: tensor shape mismatch at " + pv[t].name);
    Scalar* x = pv[t].data;
    const Scalar* gr = gv[t].data;
    Scalar* m = mv[t].data;
    Scalar* v = vv[t].data;
    for (std::ptrdiff_t i = 0; i < pv[t].size; ++i) {
      m[i] = beta1 * m[i] + (Scalar(1) - beta1) * gr[i];
      v[i] = beta2 * v[i] + (Scalar(1) - beta2) * gr[i] * gr[i];
      const Scalar m_hat = m[i] / bc1;
      const Scalar v_hat = v[i] / bc2;
      x[i] -= lr * (m_hat / (std::sqrt(v_hat) + eps) + weight_decay * x[i]);
    }
  }
}

FitResult fit(const DatasetSplit& split, const InteractionGraph& g, const KnowledgeGraph& kg,
              const Hyperparams& h, const std::function<void(const EpochLog&)>& on_epoch) {
  validate(h);
  if (split.train.empty()) throw Error("fit: empty training split");
  for (const auto& ex : split.train)
    if (ex.user < 0 || ex.user >= g.num_users() || ex.item < 0 || ex.item >= kg.num_entities())
      throw Error("fit: training example out of range");

  ModelParams params = init_params(g.num_users(), kg.num_entities(), kg.num_relations(), h,
                                   h.seed);
  AdamState adam = make_adam_state(params);
  const std::uint64_t eval_seed = eval_salt(h.seed);

  std::vector<int> eval_labels;
  eval_labels.reserve(split.eval.size());
  for (const auto& ex : split.eval) eval_labels.push_back(ex.label);

  FitResult result;
  ModelParams best = params;
  Scalar best_auc = -1;
  Index best_epoch = 0;
  Index since_best = 0;

  std::vector<LabeledExample> order = split.train;
  for (Index epoch = 1; epoch <= h.max_epochs; ++epoch) {
    Rng shuffle_rng(hash_combine(hash_combine(h.seed, kShuffleSalt),
                                 static_cast<std::uint64_t>(epoch)));
    for (std::size_t j = order.size() - 1; j > 0; --j) {
      const std::size_t k = static_cast<std::size_t>(shuffle_rng.bounded(j + 1));
      std::swap(order[j], order[k]);
    }

    Scalar epoch_loss = 0;
    const auto bs = static_cast<std::size_t>(h.batchsize);
    std::vector<LabeledExample> batch;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::size_t stop = std::min(order.size(), start + bs);
      batch.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                   order.begin() + static_cast<std::ptrdiff_t>(stop));
      Scalar loss = 0;
      const GradientSet grads = backward(batch, params, g, kg, h,
                                         static_cast<std::uint64_t>(epoch), &loss);
      if (!std::isfinite(loss))
        throw TrainingDiverged("loss became non-finite at epoch " + std::to_string(epoch));
      epoch_loss += loss;
      adam_step(params, grads, adam, h.lr, h.weight_decay);
    }
    if (!all_finite(params))
      throw TrainingDiverged("parameters became non-finite at epoch " + std::to_string(epoch));

    EpochLog log;
    log.epoch = epoch;
    log.train_loss = epoch_loss / static_cast<Scalar>(order.size());
    if (!split.eval.empty()) {
      const auto scores = predict_scores(split.eval, params, g, kg, h, eval_seed);
      log.eval_auc = auc(scores, eval_labels);
      log.eval_acc = acc(scores, eval_labels);
    }
    result.log.push_back(log);
    if (on_epoch) on_epoch(log);

    if (log.eval_auc > best_auc) {
      best_auc = log.eval_auc;
      best = params;
      best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= h.patience) {
      break;
    }
  }

  result.params = std::move(best);
  result.best_epoch = best_epoch;
  result.best_eval_auc = best_auc;
  return result;
}

}  // namespace dekgci
