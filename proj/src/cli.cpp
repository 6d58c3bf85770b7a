#include "dekgci/cli.hpp"

#include "dekgci/ablation.hpp"
#include "dekgci/checkpoint.hpp"
#include "dekgci/ingest.hpp"
#include "dekgci/metrics.hpp"
#include "dekgci/model.hpp"
#include "dekgci/stats.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

namespace dekgci {
namespace {

namespace fs = std::filesystem;

struct Preset {
  Index batchsize;
  Index n_neighbor;
  Index dim;
  Index layers;
  Scalar lr;
  std::optional<Scalar> threshold;  // ratings at or above it are positive
};

const Preset* find_preset(const std::string& dataset) {
  static const std::pair<std::string, Preset> table[] = {
      {"movielens", {1024, 10, 128, 3, 5e-4, 4.0}},
      {"book", {16, 8, 16, 6, 5e-4, std::nullopt}},
      {"lastfm", {32, 8, 64, 3, 5e-4, std::nullopt}},
  };
  for (const auto& [name, preset] : table)
    if (name == dataset) return &preset;
  return nullptr;
}

struct Options {
  std::string dataset;
  std::string ratings, kg, item2entity;
  std::string out = "run";
  std::string checkpoint;
  std::string split = "test";
  std::string kind;
  std::string matrix;
  std::string aggregator = "sum";
  std::string variant = "dekgci";
  Scalar threshold = 0;
  int workers = 1;
  Hyperparams h;
};

struct HyperFlags {
  CLI::Option* batchsize = nullptr;
  CLI::Option* n_neighbor = nullptr;
  CLI::Option* dim = nullptr;
  CLI::Option* lr = nullptr;
  CLI::Option* layers = nullptr;
  CLI::Option* threshold = nullptr;
};

void add_data_flags(CLI::App* cmd, Options& o) {
  cmd->add_option("--dataset", o.dataset,
                  "Dataset name; movielens, book, and lastfm carry preset hyperparameters");
  cmd->add_option("--ratings", o.ratings, "Ratings file (`user item rating` rows)");
  cmd->add_option("--kg", o.kg, "Knowledge graph file (`head relation tail` rows)");
  cmd->add_option("--item2entity", o.item2entity,
                  "Optional item-to-entity alignment file (`item_external entity_id`)");
  cmd->add_option("--out", o.out, "Run output directory")->capture_default_str();
  cmd->add_option("--seed", o.h.seed, "Master random seed")->capture_default_str();
  cmd->add_option("--workers", o.workers, "Upper bound on internal parallelism")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
}

HyperFlags add_hyper_flags(CLI::App* cmd, Options& o) {
  HyperFlags f;
  f.batchsize = cmd->add_option("--batchsize", o.h.batchsize, "Mini-batch size")
                    ->capture_default_str();
  f.dim = cmd->add_option("--dim", o.h.dim, "Embedding dimension")->capture_default_str();
  f.lr = cmd->add_option("--lr", o.h.lr, "Learning rate")->capture_default_str();
  f.layers = cmd->add_option("--layers", o.h.layers, "Propagation layers over the interaction graph")
                 ->capture_default_str();
  f.n_neighbor = cmd->add_option("--n-neighbor", o.h.n_neighbor,
                                 "Sampled KG neighbors per entity")
                     ->capture_default_str();
  cmd->add_option("--aggregator", o.aggregator, "Layer aggregation: sum, concat, or neighbor")
      ->capture_default_str()
      ->check(CLI::IsMember({"sum", "concat", "neighbor"}));
  cmd->add_option("--variant", o.variant, "Propagation rule: dekgci, ngcf, or lightgcn")
      ->capture_default_str()
      ->check(CLI::IsMember({"dekgci", "ngcf", "lightgcn"}));
  cmd->add_option("--depth", o.h.depth, "KG receptive-field depth")->capture_default_str();
  cmd->add_option("--epochs", o.h.max_epochs, "Maximum training epochs")->capture_default_str();
  cmd->add_option("--patience", o.h.patience, "Early-stop patience on eval AUC")
      ->capture_default_str();
  cmd->add_option("--leaky-slope", o.h.leaky_slope, "LeakyReLU negative slope")
      ->capture_default_str();
  cmd->add_option("--weight-decay", o.h.weight_decay, "Decoupled weight decay")
      ->capture_default_str();
  return f;
}

void apply_preset(Options& o, const HyperFlags& f, const std::string& dataset) {
  const Preset* p = find_preset(dataset);
  if (!p) return;
  if (f.batchsize && !f.batchsize->count()) o.h.batchsize = p->batchsize;
  if (f.n_neighbor && !f.n_neighbor->count()) o.h.n_neighbor = p->n_neighbor;
  if (f.dim && !f.dim->count()) o.h.dim = p->dim;
  if (f.lr && !f.lr->count()) o.h.lr = p->lr;
  if (f.layers && !f.layers->count()) o.h.layers = p->layers;
}

std::string data_root() {
  const char* env = std::getenv("DEKGCI_DATA_DIR");
  return env && *env ? env : "data";
}

void resolve_data_paths(Options& o) {
  if (!o.dataset.empty()) {
    const fs::path root = fs::path(data_root()) / o.dataset;
    if (o.ratings.empty()) o.ratings = (root / "ratings.tsv").string();
    if (o.kg.empty()) o.kg = (root / "kg.tsv").string();
    if (o.item2entity.empty()) {
      const fs::path align = root / "item2entity.tsv";
      if (fs::exists(align)) o.item2entity = align.string();
    }
  }
  if (o.ratings.empty() || o.kg.empty())
    throw Error("no input files: pass --ratings/--kg or --dataset with DEKGCI_DATA_DIR set");
  for (const std::string* p : {&o.ratings, &o.kg})
    if (!fs::exists(*p)) throw Error("missing input file " + *p);
  if (!o.item2entity.empty() && !fs::exists(o.item2entity))
    throw Error("missing alignment file " + o.item2entity);
}

void write_text_atomic(const fs::path& path, const std::string& content) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << content;
    if (!out.flush()) throw Error("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string fmt(Scalar v, int precision = 6) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(precision) << v;
  return ss.str();
}

Index meta_index(const std::map<std::string, std::string>& kv, const std::string& key) {
  const auto it = kv.find(key);
  if (it == kv.end()) throw Error("dataset.meta is missing `" + key + "`; rerun `prepare`");
  return static_cast<Index>(std::stoll(it->second));
}

struct PreparedData {
  DatasetSplit split;
  InteractionGraph graph;
  KnowledgeGraph kg;
  Index n_users = 0;
  Index n_items = 0;
  std::map<std::string, std::string> meta;
};

PreparedData load_prepared(const Options& o) {
  const fs::path dir = o.out;
  const fs::path meta_path = dir / "dataset.meta";
  if (!fs::exists(meta_path))
    throw Error("no prepared dataset under " + dir.string() + "; run `prepare` first");
  PreparedData d;
  d.meta = read_manifest_kv(meta_path.string());
  d.n_users = meta_index(d.meta, "users");
  d.n_items = meta_index(d.meta, "items");

  d.split.train = read_manifest((dir / "train.tsv").string());
  d.split.eval = read_manifest((dir / "eval.tsv").string());
  d.split.test = read_manifest((dir / "test.tsv").string());

  std::string kg_path = o.kg;
  if (kg_path.empty()) {
    const auto it = d.meta.find("kg_path");
    if (it == d.meta.end()) throw Error("dataset.meta records no kg_path; pass --kg");
    kg_path = it->second;
  }
  if (!fs::exists(kg_path)) throw Error("missing knowledge graph file " + kg_path);
  const KgData kgd = load_kg(kg_path, d.n_items);
  d.kg = KnowledgeGraph::build(kgd.triples, kgd.n_entities, kgd.n_relations);

  std::vector<LabeledExample> train_pos;
  for (const auto& ex : d.split.train)
    if (ex.label == 1) train_pos.push_back(ex);
  d.graph = InteractionGraph::build(train_pos, d.n_users, d.n_items);
  return d;
}

std::string run_metadata(const Options& o, const std::map<std::string, std::string>& dataset_meta) {
  std::ostringstream ss;
  ss << "aggregator=" << o.aggregator << '\n'
     << "batchsize=" << o.h.batchsize << '\n'
     << "depth=" << o.h.depth << '\n'
     << "dim=" << o.h.dim << '\n'
     << "layers=" << o.h.layers << '\n'
     << "leaky_slope=" << o.h.leaky_slope << '\n'
     << "lr=" << o.h.lr << '\n'
     << "n_neighbor=" << o.h.n_neighbor << '\n'
     << "neighbor_sampling=without-replacement,redrawn-per-epoch\n"
     << "attention_normalization=over-sampled-neighbors\n"
     << "seed=" << o.h.seed << '\n'
     << "variant=" << o.variant << '\n'
     << "weight_decay=" << o.h.weight_decay << '\n';
  for (const char* key : {"ratings_hash", "kg_hash", "dataset"}) {
    const auto it = dataset_meta.find(key);
    if (it != dataset_meta.end()) ss << key << '=' << it->second << '\n';
  }
  return ss.str();
}

int cmd_prepare(Options& o, const HyperFlags& flags) {
  resolve_data_paths(o);
  std::optional<Scalar> threshold;
  if (const Preset* p = find_preset(o.dataset)) threshold = p->threshold;
  if (flags.threshold && flags.threshold->count()) threshold = o.threshold;

  const RatingsTable rt = load_ratings(o.ratings, threshold, o.item2entity);
  const KgData kgd = load_kg(o.kg, rt.n_items);

  std::size_t shortfall = 0;
  Rng neg_rng(hash_combine(o.h.seed, 0x6e6567ULL));
  std::vector<LabeledExample> all = rt.positives;
  {
    auto negatives = sample_negatives(rt.positives, rt.n_items, neg_rng, rt.observed, &shortfall);
    all.insert(all.end(), negatives.begin(), negatives.end());
  }
  Rng split_rng(hash_combine(o.h.seed, 0x73706c6974ULL));
  const DatasetSplit split = split_examples(std::move(all), split_rng);
  const std::size_t n_examples = split.train.size() + split.eval.size() + split.test.size();

  const DatasetStats st = compute_stats(rt.n_users, rt.n_items, n_examples, kgd.n_entities,
                                        kgd.n_relations, kgd.triples.size());

  fs::create_directories(o.out);
  const fs::path dir = o.out;
  write_manifest((dir / "train.tsv").string(), split.train);
  write_manifest((dir / "eval.tsv").string(), split.eval);
  write_manifest((dir / "test.tsv").string(), split.test);

  std::map<std::string, std::string> meta;
  meta["dataset"] = o.dataset.empty() ? "custom" : o.dataset;
  meta["users"] = std::to_string(st.n_users);
  meta["items"] = std::to_string(st.n_items);
  meta["interactions"] = std::to_string(st.n_interactions);
  meta["sparsity"] = fmt(st.sparsity, 6);
  meta["kg_entities"] = std::to_string(st.kg_entities);
  meta["kg_relations"] = std::to_string(st.kg_relations);
  meta["kg_triples"] = std::to_string(st.kg_triples);
  meta["positives"] = std::to_string(rt.positives.size());
  meta["negative_shortfall"] = std::to_string(shortfall);
  meta["train"] = std::to_string(split.train.size());
  meta["eval"] = std::to_string(split.eval.size());
  meta["test"] = std::to_string(split.test.size());
  meta["seed"] = std::to_string(o.h.seed);
  meta["threshold"] = threshold ? fmt(*threshold, 2) : "none";
  meta["ratings_path"] = fs::absolute(o.ratings).string();
  meta["kg_path"] = fs::absolute(o.kg).string();
  meta["ratings_hash"] = std::to_string(hash_file(o.ratings));
  meta["kg_hash"] = std::to_string(hash_file(o.kg));
  if (!o.item2entity.empty()) {
    meta["item2entity_path"] = fs::absolute(o.item2entity).string();
    meta["item2entity_hash"] = std::to_string(hash_file(o.item2entity));
  }
  write_manifest_kv((dir / "dataset.meta").string(), meta);

  std::cout << "dataset      " << meta["dataset"] << "\n"
            << "users        " << st.n_users << "\n"
            << "items        " << st.n_items << "\n"
            << "interactions " << st.n_interactions << "\n"
            << "sparsity     " << fmt(100 * st.sparsity, 2) << "%\n"
            << "kg entities  " << st.kg_entities << "\n"
            << "kg relations " << st.kg_relations << "\n"
            << "kg triples   " << st.kg_triples << "\n"
            << "split        " << split.train.size() << "/" << split.eval.size() << "/"
            << split.test.size() << "\n";
  if (shortfall > 0)
    std::cerr << "warning: " << shortfall
              << " negatives could not be drawn (users with nearly full item coverage)\n";
  return kExitOk;
}

Hyperparams finalize_hyper(Options& o) {
  o.h.aggregator = parse_aggregator(o.aggregator);
  o.h.variant = parse_variant(o.variant);
  validate(o.h);
  return o.h;
}

int cmd_train(Options& o, const HyperFlags& flags) {
  PreparedData d = load_prepared(o);
  const auto ds_it = d.meta.find("dataset");
  apply_preset(o, flags, !o.dataset.empty() ? o.dataset
                                            : (ds_it != d.meta.end() ? ds_it->second : ""));
  const Hyperparams h = finalize_hyper(o);

  std::ostringstream log;
  log << "epoch\ttrain_loss\teval_auc\teval_acc\n";
  const FitResult r = fit(d.split, d.graph, d.kg, h, [&](const EpochLog& e) {
    log << e.epoch << '\t' << fmt(e.train_loss) << '\t' << fmt(e.eval_auc) << '\t'
        << fmt(e.eval_acc) << '\n';
    std::cout << "epoch " << std::setw(3) << e.epoch << "  loss " << fmt(e.train_loss, 4)
              << "  eval auc " << fmt(e.eval_auc, 4) << "  acc " << fmt(e.eval_acc, 4)
              << std::endl;
  });

  const fs::path dir = o.out;
  Checkpoint ckpt;
  ckpt.hyper = h;
  ckpt.n_users = d.n_users;
  ckpt.n_entities = d.kg.num_entities();
  ckpt.n_relations = d.kg.num_relations();
  ckpt.params = r.params;
  save_checkpoint((dir / "checkpoint.bin").string(), ckpt);
  write_text_atomic(dir / "training_log.tsv", log.str());

  std::string meta = run_metadata(o, d.meta);
  meta += "best_epoch=" + std::to_string(r.best_epoch) + "\n";
  meta += "best_eval_auc=" + fmt(r.best_eval_auc) + "\n";
  write_text_atomic(dir / "run.meta", meta);

  std::cout << "best epoch " << r.best_epoch << " with eval auc " << fmt(r.best_eval_auc, 4)
            << "; checkpoint written to " << (dir / "checkpoint.bin").string() << "\n";
  return kExitOk;
}

int cmd_eval(Options& o) {
  PreparedData d = load_prepared(o);
  const std::string ckpt_path =
      o.checkpoint.empty() ? (fs::path(o.out) / "checkpoint.bin").string() : o.checkpoint;
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  if (ckpt.n_users != d.n_users || ckpt.n_entities != d.kg.num_entities())
    throw Error("checkpoint shapes do not match the prepared dataset");

  const std::vector<LabeledExample>* examples = nullptr;
  if (o.split == "train") examples = &d.split.train;
  else if (o.split == "eval") examples = &d.split.eval;
  else if (o.split == "test") examples = &d.split.test;
  else throw ConfigError("unknown split `" + o.split + "`");

  const auto scores = predict_scores(*examples, ckpt.params, d.graph, d.kg, ckpt.hyper,
                                     eval_salt(ckpt.hyper.seed));
  std::vector<int> labels;
  labels.reserve(examples->size());
  for (const auto& ex : *examples) labels.push_back(ex.label);
  const MetricReport report = evaluate(o.split, scores, labels);

  std::ostringstream out;
  out << "split\tauc\tacc\tcount\n"
      << report.split << '\t' << fmt(report.auc) << '\t' << fmt(report.acc) << '\t'
      << report.count << '\n';
  write_text_atomic(fs::path(o.out) / ("metrics_" + o.split + ".tsv"), out.str());
  std::cout << o.split << " auc " << fmt(report.auc, 4) << "  acc " << fmt(report.acc, 4)
            << "  (" << report.count << " examples)\n";
  return kExitOk;
}

int cmd_ablate(Options& o, const HyperFlags& flags) {
  PreparedData d = load_prepared(o);
  const auto ds_it = d.meta.find("dataset");
  apply_preset(o, flags, !o.dataset.empty() ? o.dataset
                                            : (ds_it != d.meta.end() ? ds_it->second : ""));
  const Hyperparams base = finalize_hyper(o);
  const SweepKind kind = parse_sweep_kind(o.kind);

  std::ostringstream out;
  out << "point\ttest_auc\ttest_acc\teval_auc\tbest_epoch\n";
  run_ablation(kind, base, d.split, d.graph, d.kg, [&](const SweepPoint& pt) {
    out << pt.label << '\t' << fmt(pt.test_auc) << '\t' << fmt(pt.test_acc) << '\t'
        << fmt(pt.eval_auc) << '\t' << pt.best_epoch << '\n';
    std::cout << pt.label << "  test auc " << fmt(pt.test_auc, 4) << "  acc "
              << fmt(pt.test_acc, 4) << std::endl;
  });
  write_text_atomic(fs::path(o.out) / ("ablation_" + to_string(kind) + ".tsv"), out.str());
  return kExitOk;
}

int cmd_stats(const Options& o) {
  const ScoreMatrix sm = load_score_matrix(o.matrix);
  const FriedmanResult fr = friedman(sm);
  Index control = 0;
  fr.avg_ranks.minCoeff(&control);
  const auto rows = holm_posthoc(fr, sm);

  std::ostringstream out;
  out << "algorithms\t" << fr.n_algorithms << "\nproblems\t" << fr.n_problems << "\n";
  out << "friedman_chi2\t" << fmt(fr.chi2) << "\niman_davenport_f\t" << fmt(fr.ff) << "\n\n";
  out << "algorithm\tavg_rank\tz\tp\tholm_threshold\trejected\n";
  for (const auto& r : rows)
    out << r.algorithm << '\t' << fmt(r.avg_rank) << '\t' << fmt(r.z) << '\t' << fmt(r.p) << '\t'
        << fmt(r.threshold) << '\t' << (r.rejected ? "yes" : "no") << '\n';

  std::cout << "Friedman chi^2       " << fmt(fr.chi2, 4) << "  (k=" << fr.n_algorithms
            << ", N=" << fr.n_problems << ")\n"
            << "Iman-Davenport F     " << fmt(fr.ff, 4) << "\n"
            << "control              " << sm.algorithms[static_cast<std::size_t>(control)]
            << " (avg rank " << fmt(fr.avg_ranks[control], 4) << ")\n\n"
            << "algorithm     avg_rank         z         p  threshold  rejected\n";
  for (const auto& r : rows) {
    std::cout << std::left << std::setw(12) << r.algorithm << std::right << std::setw(10)
              << fmt(r.avg_rank, 4) << std::setw(10) << fmt(r.z, 4) << std::setw(10)
              << fmt(r.p, 6) << std::setw(11) << fmt(r.threshold, 6) << std::setw(10)
              << (r.rejected ? "yes" : "no") << "\n";
  }

  if (!o.out.empty()) {
    fs::create_directories(o.out);
    write_text_atomic(fs::path(o.out) / "stats.tsv", out.str());
  }
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  Options o;
  CLI::App app{"Double-sided knowledge-graph recommender"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Flat key=value config file; flags take precedence");

  CLI::App* prepare = app.add_subcommand(
      "prepare", "Label ratings, sample negatives, split 6:2:2, and write manifests");
  add_data_flags(prepare, o);
  HyperFlags prep_flags;
  prep_flags.threshold =
      prepare->add_option("--threshold", o.threshold,
                          "Ratings at or above this are positive (default: per-dataset)");

  CLI::App* train = app.add_subcommand("train", "Train on a prepared dataset");
  add_data_flags(train, o);
  const HyperFlags train_flags = add_hyper_flags(train, o);

  CLI::App* eval = app.add_subcommand("eval", "Score a checkpoint on one split");
  add_data_flags(eval, o);
  eval->add_option("--checkpoint", o.checkpoint, "Checkpoint path (default: <out>/checkpoint.bin)");
  eval->add_option("--split", o.split, "train, eval, or test")
      ->capture_default_str()
      ->check(CLI::IsMember({"train", "eval", "test"}));

  CLI::App* ablate = app.add_subcommand("ablate", "Sweep one axis and report per-point metrics");
  add_data_flags(ablate, o);
  const HyperFlags ablate_flags = add_hyper_flags(ablate, o);
  ablate->add_option("--kind", o.kind, "layers, aggregator, depth, or variant")->required();

  CLI::App* stats = app.add_subcommand(
      "stats", "Friedman / Iman-Davenport / Holm comparison over a score matrix");
  stats->add_option("matrix", o.matrix, "Score matrix file (header row, one row per algorithm)")
      ->required();
  stats->add_option("--out", o.out, "Also write stats.tsv here")->capture_default_str();

  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  argv.push_back("dekgci");
  for (const auto& a : args) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInputError;
  }

  try {
    Eigen::setNbThreads(o.workers);
    if (prepare->parsed()) return cmd_prepare(o, prep_flags);
    if (train->parsed()) return cmd_train(o, train_flags);
    if (eval->parsed()) return cmd_eval(o);
    if (ablate->parsed()) return cmd_ablate(o, ablate_flags);
    if (stats->parsed()) return cmd_stats(o);
    return kExitInputError;
  } catch (const TrainingDiverged& e) {
    std::cerr << "training diverged: " << e.what() << "\n";
    return kExitDiverged;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInputError;
  }
}

int run_cli(int argc, const char* const* argv) {
  std::vector<std::string> args;
  args.reserve(static_cast<std::size_t>(argc > 0 ? argc - 1 : 0));
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args);
}

}  // namespace dekgci
