#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "dekgci/metrics.hpp"
#include "dekgci/model.hpp"
#include "support/finite_diff.hpp"
#include "support/synthetic.hpp"

#include <cmath>
#include <vector>

using namespace dekgci;

namespace {

// Toy world reused by the gradient tests: 3 users, 3 items, one spare
// entity, mixed labels, every node reachable.
struct ToyWorld {
  InteractionGraph graph;
  KnowledgeGraph kg;
  std::vector<LabeledExample> batch;
  Hyperparams hyper;

  explicit ToyWorld(Variant variant = Variant::dekgci, Aggregator agg = Aggregator::sum) {
    graph = InteractionGraph::build(
        {{0, 0, 1}, {0, 1, 1}, {1, 1, 1}, {2, 2, 1}}, 3, 3);
    kg = KnowledgeGraph::build({{0, 0, 3}, {1, 1, 3}, {2, 0, 1}}, 4, 2, true);
    batch = {{0, 0, 1}, {1, 1, 0}, {2, 2, 1}, {0, 2, 0}};
    hyper.batchsize = 4;
    hyper.n_neighbor = 2;
    hyper.dim = 4;
    hyper.layers = 2;
    hyper.aggregator = agg;
    hyper.variant = variant;
    hyper.depth = 1;
    hyper.leaky_slope = 0.2;
    hyper.seed = 2026;
  }

  ModelParams params(std::uint64_t seed = 7) const {
    return init_params(3, 4, 2, hyper, seed);
  }
};

void check_gradients(const ToyWorld& w, std::uint64_t epoch = 3) {
  auto p = w.params();
  const auto analytic = backward(w.batch, p, w.graph, w.kg, w.hyper, epoch);
  const auto loss = [&](const ModelParams& q) {
    return batch_loss(w.batch, q, w.graph, w.kg, w.hyper, epoch);
  };
  const auto report = testing::finite_difference_check(p, analytic, loss, 1e-3);
  INFO("worst tensor ", report.worst_tensor, " coeff ", report.worst_coeff, ": analytic ",
       report.analytic, " vs numeric ", report.numeric, " over ", report.checked, " coeffs");
  CHECK(report.checked > 0);
  CHECK(report.max_rel_err < 1e-4);
}

}  // namespace

TEST_CASE("hyperparameter validation") {
  Hyperparams h;
  CHECK_NOTHROW(validate(h));
  Hyperparams bad = h;
  bad.batchsize = 0;
  CHECK_THROWS_AS(validate(bad), ConfigError);
  bad = h;
  bad.lr = -1;
  CHECK_THROWS_AS(validate(bad), ConfigError);
  bad = h;
  bad.depth = 2;
  bad.aggregator = Aggregator::concat;  // final dim != dim blocks recursion
  CHECK_THROWS_AS(validate(bad), ConfigError);
  bad.aggregator = Aggregator::sum;
  CHECK_NOTHROW(validate(bad));
}

TEST_CASE("initialization respects the xavier bound") {
  Hyperparams h;
  h.dim = 2;
  h.layers = 1;
  const auto p = init_params(5, 6, 3, h, 11);
  const Scalar bound = std::sqrt(1.5) + 1e-12;  // sqrt(6/(2+2))
  CHECK(p.user.cwiseAbs().maxCoeff() <= bound);
  CHECK(p.entity.cwiseAbs().maxCoeff() <= bound);
  CHECK(p.relation.cwiseAbs().maxCoeff() <= bound);
  CHECK(p.propagation.w1[0].cwiseAbs().maxCoeff() <= bound);
  CHECK(p.b.cwiseAbs().maxCoeff() == 0.0);
  // Entries actually spread out rather than collapsing to a constant.
  CHECK(p.user.cwiseAbs().maxCoeff() > 0.1);
}

TEST_CASE("initialization is deterministic under seed") {
  Hyperparams h;
  h.dim = 8;
  const auto a = init_params(4, 9, 3, h, 123);
  const auto b = init_params(4, 9, 3, h, 123);
  CHECK((a.user - b.user).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.entity - b.entity).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.w2 - b.w2).cwiseAbs().maxCoeff() == 0.0);
  const auto c = init_params(4, 9, 3, h, 124);
  CHECK((a.user - c.user).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("sigmoid hits the textbook values without overflow") {
  CHECK(sigmoid(0.0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(sigmoid(std::log(3.0)) == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(sigmoid(1000.0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(sigmoid(-1000.0) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(sigmoid(1000.0) <= 1.0);
  CHECK(sigmoid(-1000.0) >= 0.0);
}

TEST_CASE("zero parameters predict one half and ln2 loss") {
  ToyWorld w;
  auto p = w.params();
  for_each_tensor(p, [](const std::string&, Scalar* d, std::ptrdiff_t n) {
    std::fill(d, d + n, Scalar(0));
  });
  const std::vector<LabeledExample> one{{0, 0, 1}};
  CHECK(batch_loss(one, p, w.graph, w.kg, w.hyper, 0) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-9));
  const std::vector<LabeledExample> two{{0, 0, 1}, {1, 1, 0}};
  CHECK(batch_loss(two, p, w.graph, w.kg, w.hyper, 0) ==
        doctest::Approx(2 * std::log(2.0)).epsilon(1e-9));
  CHECK_THROWS_AS(batch_loss({}, p, w.graph, w.kg, w.hyper, 0), Error);
}

TEST_CASE("predictions stay bounded and finite") {
  ToyWorld w;
  auto p = w.params();
  // Moderate scale: strictly inside the unit interval.
  p.user *= 3;
  for (const Scalar s : predict_scores(w.batch, p, w.graph, w.kg, w.hyper, 99)) {
    CHECK(s > 0.0);
    CHECK(s < 1.0);
  }
  // Saturated inner products round to the interval ends but never leave
  // [0, 1] or go non-finite; the loss clamp handles the rest.
  p.user *= 1e4;
  p.entity *= 1e4;
  for (const Scalar s : predict_scores(w.batch, p, w.graph, w.kg, w.hyper, 99)) {
    CHECK(s >= 0.0);
    CHECK(s <= 1.0);
    CHECK(std::isfinite(s));
  }
}

TEST_CASE("gradients match finite differences") {
  check_gradients(ToyWorld(Variant::dekgci, Aggregator::sum));
}

TEST_CASE("gradients match finite differences under ngcf propagation") {
  check_gradients(ToyWorld(Variant::ngcf, Aggregator::sum));
}

TEST_CASE("gradients match finite differences under lightgcn propagation") {
  check_gradients(ToyWorld(Variant::lightgcn, Aggregator::sum));
}

TEST_CASE("gradients match finite differences with concat aggregation") {
  check_gradients(ToyWorld(Variant::dekgci, Aggregator::concat));
}

TEST_CASE("gradients match finite differences with neighbor aggregation") {
  check_gradients(ToyWorld(Variant::dekgci, Aggregator::neighbor));
}

TEST_CASE("gradients match finite differences at receptive depth two") {
  ToyWorld w;
  w.hyper.depth = 2;  // sum aggregator keeps D == dim, so recursion is legal
  check_gradients(w);
}

TEST_CASE("parameters outside the batch's reach get zero gradients") {
  // Separate components: users 1,2 and item 1 never feed example (0,0).
  const auto graph = InteractionGraph::build({{0, 0, 1}, {1, 1, 1}, {2, 1, 1}}, 3, 2);
  // Entity 2 hangs off item 1 only; entity 3 is referenced by nothing.
  const auto kg = KnowledgeGraph::build({{1, 0, 2}}, 4, 1, false);
  Hyperparams h;
  h.dim = 4;
  h.layers = 2;
  h.n_neighbor = 2;
  h.seed = 5;
  const auto p = init_params(3, 4, 1, h, 8);
  const std::vector<LabeledExample> batch{{0, 0, 1}};
  const auto g = backward(batch, p, graph, kg, h, 1);
  CHECK(g.user.row(1).cwiseAbs().maxCoeff() == 0.0);
  CHECK(g.user.row(2).cwiseAbs().maxCoeff() == 0.0);
  CHECK(g.entity.row(1).cwiseAbs().maxCoeff() == 0.0);  // item 1: other component
  CHECK(g.entity.row(2).cwiseAbs().maxCoeff() == 0.0);  // only reachable from item 1
  CHECK(g.entity.row(3).cwiseAbs().maxCoeff() == 0.0);  // orphan entity
  // The example's own user and item do move.
  CHECK(g.user.row(0).cwiseAbs().maxCoeff() > 0.0);
  CHECK(g.entity.row(0).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("duplicating the batch doubles every gradient") {
  ToyWorld w;
  const auto p = w.params();
  const auto g1 = backward(w.batch, p, w.graph, w.kg, w.hyper, 2);
  auto doubled = w.batch;
  doubled.insert(doubled.end(), w.batch.begin(), w.batch.end());
  const auto g2 = backward(doubled, p, w.graph, w.kg, w.hyper, 2);

  Scalar worst = 0;
  for_each_tensor(g1, [&](const std::string& name, const Scalar* d1, std::ptrdiff_t n) {
    for_each_tensor(g2, [&](const std::string& name2, const Scalar* d2, std::ptrdiff_t n2) {
      if (name != name2) return;
      REQUIRE(n == n2);
      for (std::ptrdiff_t i = 0; i < n; ++i)
        worst = std::max(worst, std::abs(d2[i] - 2 * d1[i]) /
                                    std::max(Scalar(1), std::abs(2 * d1[i])));
    });
  });
  CHECK(worst < 1e-12);
}

TEST_CASE("backward reports the same loss as the forward pass") {
  ToyWorld w;
  const auto p = w.params();
  Scalar loss = -1;
  backward(w.batch, p, w.graph, w.kg, w.hyper, 4, &loss);
  CHECK(loss == doctest::Approx(batch_loss(w.batch, p, w.graph, w.kg, w.hyper, 4)).epsilon(1e-12));
}

TEST_CASE("example seeds are content-based") {
  const auto s = example_seed(1, 2, 3, 4, 1);
  CHECK(s == example_seed(1, 2, 3, 4, 1));
  CHECK(s != example_seed(1, 2, 3, 4, 0));
  CHECK(s != example_seed(1, 2, 3, 5, 1));
  CHECK(s != example_seed(1, 3, 3, 4, 1));
  CHECK(s != example_seed(2, 2, 3, 4, 1));
  CHECK(eval_salt(9) == eval_salt(9));
  CHECK(eval_salt(9) != eval_salt(10));
}

TEST_CASE("adam leaves parameters alone on zero gradients") {
  ToyWorld w;
  auto p = w.params();
  const auto snapshot = w.params();
  auto st = make_adam_state(p);
  adam_step(p, zeros_like(p), st, 0.01);
  CHECK((p.user - snapshot.user).cwiseAbs().maxCoeff() == 0.0);
  CHECK((p.entity - snapshot.entity).cwiseAbs().maxCoeff() == 0.0);
  CHECK((p.w2 - snapshot.w2).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("first adam step moves by lr times the gradient sign") {
  ToyWorld w;
  auto p = w.params();
  const auto snapshot = w.params();
  auto g = zeros_like(p);
  g.user(0, 0) = 2.5;
  g.user(1, 1) = -0.7;
  auto st = make_adam_state(p);
  const Scalar lr = 1e-3;
  adam_step(p, g, st, lr);
  CHECK(p.user(0, 0) - snapshot.user(0, 0) == doctest::Approx(-lr).epsilon(1e-6));
  CHECK(p.user(1, 1) - snapshot.user(1, 1) == doctest::Approx(lr).epsilon(1e-6));
  CHECK(p.user(2, 2) == snapshot.user(2, 2));  // untouched coordinate
}

TEST_CASE("repeated identical gradients never grow the step") {
  ToyWorld w;
  auto p = w.params();
  auto g = zeros_like(p);
  g.entity(0, 0) = 1.3;
  auto st = make_adam_state(p);
  const Scalar before = p.entity(0, 0);
  adam_step(p, g, st, 1e-3);
  const Scalar step1 = std::abs(p.entity(0, 0) - before);
  const Scalar mid = p.entity(0, 0);
  adam_step(p, g, st, 1e-3);
  const Scalar step2 = std::abs(p.entity(0, 0) - mid);
  CHECK(step2 <= step1 + 1e-12);
}

TEST_CASE("decoupled weight decay shrinks parameters without gradients") {
  ToyWorld w;
  auto p = w.params();
  const Scalar before = p.user(0, 0);
  auto st = make_adam_state(p);
  adam_step(p, zeros_like(p), st, 0.1, 0.5);
  CHECK(p.user(0, 0) == doctest::Approx(before * (1 - 0.1 * 0.5)).epsilon(1e-12));
}

TEST_CASE("one small step descends the single-example loss") {
  ToyWorld w;
  auto p = w.params();
  const std::vector<LabeledExample> one{{0, 0, 1}};
  const std::uint64_t epoch = 0;
  const Scalar before = batch_loss(one, p, w.graph, w.kg, w.hyper, epoch);
  const auto g = backward(one, p, w.graph, w.kg, w.hyper, epoch);
  auto st = make_adam_state(p);
  adam_step(p, g, st, 1e-4);
  const Scalar after = batch_loss(one, p, w.graph, w.kg, w.hyper, epoch);
  CHECK(after < before);
}

TEST_CASE("prediction scores are reproducible under the same salt") {
  ToyWorld w;
  const auto p = w.params();
  const auto a = predict_scores(w.batch, p, w.graph, w.kg, w.hyper, 31);
  const auto b = predict_scores(w.batch, p, w.graph, w.kg, w.hyper, 31);
  CHECK(a == b);
}

namespace {

// Shared fixture: planted two-cluster dataset split 6:2:2.
struct TrainWorld {
  DatasetSplit split;
  InteractionGraph graph;
  KnowledgeGraph kg;
  Hyperparams hyper;

  TrainWorld() {
    const auto data = testing::make_clustered_dataset(48, 24, 8, 77);
    auto examples = data.positives;
    Rng neg_rng(5);
    const auto negs = sample_negatives(examples, data.n_items, neg_rng);
    examples.insert(examples.end(), negs.begin(), negs.end());
    Rng split_rng(6);
    split = split_examples(std::move(examples), split_rng);

    std::vector<LabeledExample> train_pos;
    for (const auto& ex : split.train)
      if (ex.label == 1) train_pos.push_back(ex);
    graph = InteractionGraph::build(train_pos, data.n_users, data.n_items);
    kg = KnowledgeGraph::build(data.triples, data.n_entities, data.n_relations, true);

    hyper.batchsize = 32;
    hyper.dim = 8;
    hyper.layers = 2;
    hyper.n_neighbor = 4;
    hyper.lr = 0.02;
    hyper.max_epochs = 25;
    hyper.patience = 25;
    hyper.seed = 99;
  }
};

}  // namespace

TEST_CASE("training learns the planted cluster structure") {
  TrainWorld w;
  const auto result = fit(w.split, w.graph, w.kg, w.hyper);
  REQUIRE(!result.log.empty());
  CHECK(result.best_eval_auc > 0.65);
  // Loss must come down from the first epoch to the best epoch.
  CHECK(result.log.back().train_loss < result.log.front().train_loss);
  // Best-epoch parameters score the same AUC when re-evaluated.
  const auto scores = predict_scores(w.split.eval, result.params, w.graph, w.kg, w.hyper,
                                     eval_salt(w.hyper.seed));
  std::vector<int> labels;
  for (const auto& ex : w.split.eval) labels.push_back(ex.label);
  CHECK(auc(scores, labels) == doctest::Approx(result.best_eval_auc).epsilon(1e-12));
}

TEST_CASE("zero learning rate freezes parameters") {
  TrainWorld w;
  w.hyper.lr = 0.0;
  w.hyper.max_epochs = 3;
  w.hyper.patience = 5;
  const auto result = fit(w.split, w.graph, w.kg, w.hyper);
  REQUIRE(result.log.size() == 3);
  for (const auto& log : result.log) {
    CHECK(log.eval_auc == doctest::Approx(result.log[0].eval_auc).epsilon(1e-12));
    CHECK(std::abs(log.eval_auc - 0.5) < 0.3);  // random embeddings ~ chance
  }
  // Untrained parameters equal the deterministic initialization.
  const auto fresh = init_params(w.graph.num_users(), w.kg.num_entities(),
                                 w.kg.num_relations(), w.hyper, w.hyper.seed);
  CHECK((result.params.user - fresh.user).cwiseAbs().maxCoeff() == 0.0);
  CHECK((result.params.entity - fresh.entity).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("training is deterministic under seed") {
  TrainWorld w;
  w.hyper.max_epochs = 4;
  const auto a = fit(w.split, w.graph, w.kg, w.hyper);
  const auto b = fit(w.split, w.graph, w.kg, w.hyper);
  REQUIRE(a.log.size() == b.log.size());
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    CHECK(a.log[i].train_loss == b.log[i].train_loss);
    CHECK(a.log[i].eval_auc == b.log[i].eval_auc);
    CHECK(a.log[i].eval_acc == b.log[i].eval_acc);
  }
  CHECK((a.params.user - b.params.user).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.params.entity - b.params.entity).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("early stopping respects patience") {
  TrainWorld w;
  w.hyper.lr = 0.0;  // eval AUC can never improve after epoch 1
  w.hyper.max_epochs = 50;
  w.hyper.patience = 3;
  const auto result = fit(w.split, w.graph, w.kg, w.hyper);
  CHECK(result.log.size() == 4);  // epoch 1 sets the best; 3 more, then stop
  CHECK(result.best_epoch == 1);
}

TEST_CASE("absurd learning rates abort with a divergence error") {
  TrainWorld w;
  w.hyper.lr = 1e200;
  w.hyper.max_epochs = 5;
  CHECK_THROWS_AS(fit(w.split, w.graph, w.kg, w.hyper), TrainingDiverged);
}
