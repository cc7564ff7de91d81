// cet: datasets, similarity, KNN groups, training, and experiment protocols
// for the colliding-effect fine-tuning objective.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cet/config.hpp"
#include "cet/dataset.hpp"
#include "cet/harness.hpp"
#include "cet/model.hpp"
#include "cet/neighbors.hpp"
#include "cet/objective.hpp"
#include "cet/rng.hpp"
#include "cet/similarity.hpp"
#include "cet/text.hpp"
#include "cet/trainer.hpp"

namespace fs = std::filesystem;

namespace {

std::string default_out_dir() {
  const char* env = std::getenv("CET_OUT_DIR");
  return env != nullptr && *env != '\0' ? std::string(env) : std::string(".");
}

cet::SimilarityBackend make_backend(const std::string& kind,
                                    const std::string& vectors_path) {
  cet::BackendKind k = cet::parse_backend_kind(kind);
  switch (k) {
    case cet::BackendKind::Exact:
      return cet::SimilarityBackend::exact();
    case cet::BackendKind::Jaccard:
      return cet::SimilarityBackend::jaccard();
    case cet::BackendKind::EmbeddingCosine: {
      if (vectors_path.empty()) {
        throw std::runtime_error("--vectors is required for the embed backend");
      }
      auto table = std::make_shared<cet::VectorTable>(
          cet::load_vector_table(vectors_path));
      return cet::SimilarityBackend::embedding(std::move(table));
    }
  }
  throw std::logic_error("bad backend");
}

int cmd_data_stats(const std::vector<std::string>& paths) {
  std::cout << "name,split,count,option_number,question_length,option_length\n";
  for (const std::string& path : paths) {
    cet::QaDataset ds = cet::load_jsonl(path);
    cet::StatsRecord st = cet::dataset_stats(ds);
    std::cout << ds.name << ',' << ds.split << ',' << st.count << ','
              << cet::format_double(st.mean_options) << ','
              << cet::format_double(st.mean_question_tokens) << ','
              << cet::format_double(st.mean_option_tokens) << '\n';
  }
  return 0;
}

int cmd_data_subsample(const std::string& path, double fraction,
                       std::uint64_t seed, const std::string& out) {
  cet::QaDataset ds = cet::load_jsonl(path);
  cet::QaDataset sub = cet::subsample(ds, fraction, seed);
  cet::save_jsonl(sub, out);
  std::cout << "wrote " << sub.samples.size() << " of " << ds.samples.size()
            << " samples to " << out << "\n";
  return 0;
}

cet::SynthConfig synth_from_config(const cet::KeyValueConfig& cfg) {
  cet::SynthConfig s;
  s.n_concepts = cfg.get_u64("synth.n_concepts", s.n_concepts);
  s.questions_per_concept =
      cfg.get_u64("synth.questions_per_concept", s.questions_per_concept);
  s.n_options = cfg.get_u64("synth.n_options", s.n_options);
  s.vocab_size = cfg.get_u64("synth.vocab_size", s.vocab_size);
  s.distractor_overlap =
      cfg.get_double("synth.distractor_overlap", s.distractor_overlap);
  s.seed = cfg.get_u64("synth.seed", s.seed);
  s.n_tasks = cfg.get_u64("synth.n_tasks", s.n_tasks);
  s.task_concepts = cfg.get_u64("synth.task_concepts", s.task_concepts);
  s.signature_tokens = cfg.get_u64("synth.signature_tokens", s.signature_tokens);
  s.signature_per_question =
      cfg.get_u64("synth.signature_per_question", s.signature_per_question);
  s.noise_per_question =
      cfg.get_u64("synth.noise_per_question", s.noise_per_question);
  s.noise_pool = cfg.get_u64("synth.noise_pool", s.noise_pool);
  s.answer_alias = cfg.get_u64("synth.answer_alias", s.answer_alias);
  s.shared_train_questions =
      cfg.get_u64("synth.shared_train_questions", s.shared_train_questions);
  s.shared_dev_questions =
      cfg.get_u64("synth.shared_dev_questions", s.shared_dev_questions);
  return s;
}

int cmd_data_gen_synth(const std::string& config_path,
                       const std::string& out_dir) {
  cet::SynthConfig synth =
      synth_from_config(cet::KeyValueConfig::parse_file(config_path));
  cet::SynthCorpus corpus = cet::generate_synthetic(synth);
  fs::create_directories(out_dir);
  auto dump = [&](const cet::QaDataset& ds, const std::string& base) {
    const std::string path = (fs::path(out_dir) / (base + ".jsonl")).string();
    cet::save_jsonl(ds, path);
    std::cout << path << ": " << ds.samples.size() << " samples\n";
  };
  dump(corpus.pretrain.train, "pretrain_train");
  dump(corpus.pretrain.dev, "pretrain_dev");
  dump(corpus.pretrain.test, "pretrain_test");
  for (std::size_t t = 0; t < corpus.tasks.size(); ++t) {
    const std::string base = "task" + std::to_string(t);
    dump(corpus.tasks[t].train, base + "_train");
    dump(corpus.tasks[t].dev, base + "_dev");
    dump(corpus.tasks[t].test, base + "_test");
  }
  return 0;
}

int cmd_sim(const std::string& backend, const std::string& vectors,
            const std::string& a, const std::string& b) {
  cet::SimilarityBackend be = make_backend(backend, vectors);
  cet::AnswerKey ka = cet::normalize_answer(a);
  cet::AnswerKey kb = cet::normalize_answer(b);
  std::cout << cet::format_double(cet::answer_similarity(ka, kb, be)) << "\n";
  return 0;
}

int cmd_knn_build(const std::string& dataset_path, const std::string& metric,
                  const std::string& backend, const std::string& vectors,
                  const std::string& checkpoint, int K, double theta,
                  const std::string& selector, std::uint64_t seed,
                  const std::string& out) {
  cet::QaDataset ds = cet::load_jsonl(dataset_path);
  cet::Selector sel{cet::parse_selector_kind(selector), seed};

  std::vector<cet::NeighborGroup> groups;
  cet::ScorerParams frozen;
  if (metric == "gold") {
    groups = cet::build_groups(ds, cet::NeighborMetric::gold(
                                       make_backend(backend, vectors)),
                               K, theta, sel);
  } else if (metric == "avg") {
    if (checkpoint.empty()) {
      throw std::runtime_error(
          "--checkpoint is required for the avg (representation) metric");
    }
    frozen = cet::load_checkpoint(checkpoint);
    groups = cet::build_groups(ds, cet::NeighborMetric::representation(frozen),
                               K, theta, sel);
  } else {
    throw std::runtime_error("unknown metric: " + metric +
                             " (expected gold or avg)");
  }
  cet::save_groups_jsonl(groups, out);
  cet::GroupStats st = cet::group_stats(groups);
  std::cout << "wrote " << groups.size() << " groups to " << out
            << " (with-neighbor fraction "
            << cet::format_double(st.fraction_with_neighbors)
            << ", mean similarity " << cet::format_double(st.mean_similarity)
            << ")\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& out) {
  cet::KeyValueConfig cfg = cet::KeyValueConfig::parse_file(config_path);

  cet::TrainConfig tc;
  tc.learning_rate = cfg.get_double("train.learning_rate", tc.learning_rate);
  tc.epochs = cfg.get_u64("train.epochs", tc.epochs);
  tc.batch_size = cfg.get_u64("train.batch_size", tc.batch_size);
  tc.w0 = cfg.get_double("train.w0", tc.w0);
  tc.K = static_cast<int>(cfg.get_int("train.K", tc.K));
  tc.theta = cfg.get_double("train.theta", tc.theta);
  tc.loss_mode =
      cet::parse_loss_mode(cfg.get_string("train.loss_mode", "mixture-log"));
  tc.weight_decay = cfg.get_double("train.weight_decay", tc.weight_decay);
  tc.grad_clip_norm = cfg.get_double("train.grad_clip_norm", tc.grad_clip_norm);
  tc.seed = cfg.get_u64("train.seed", 0);

  cet::QaDataset train_ds = cet::load_jsonl(cfg.get_string("data.train"));
  cet::QaDataset dev_ds = cet::load_jsonl(cfg.get_string("data.dev"));

  cet::ScorerParams init;
  const std::string ckpt = cfg.get_string("model.checkpoint", "");
  if (!ckpt.empty()) {
    init = cet::load_checkpoint(ckpt);
  } else {
    init = cet::init_params(cfg.get_u64("model.vocab_buckets", 4096),
                            cfg.get_u64("model.embed_dim", 32),
                            cfg.get_u64("model.hidden_dim", 32), tc.seed);
  }

  std::vector<cet::NeighborGroup> groups;
  const std::string groups_path = cfg.get_string("data.groups", "");
  if (!groups_path.empty()) {
    groups = cet::load_groups_jsonl(groups_path);
  } else if (tc.K == 0) {
    groups = cet::empty_groups(train_ds);
  } else {
    const std::string metric = cfg.get_string("knn.metric", "gold");
    cet::Selector sel{
        cet::parse_selector_kind(cfg.get_string("knn.selector", "largest")),
        cfg.get_u64("knn.selector_seed", 0)};
    if (metric == "gold") {
      groups = cet::build_groups(
          train_ds,
          cet::NeighborMetric::gold(
              make_backend(cfg.get_string("knn.backend", "exact"),
                           cfg.get_string("knn.vectors", ""))),
          tc.K, tc.theta, sel);
    } else if (metric == "avg") {
      groups = cet::build_groups(train_ds,
                                 cet::NeighborMetric::representation(init),
                                 tc.K, tc.theta, sel);
    } else {
      throw std::runtime_error("unknown knn.metric: " + metric);
    }
  }

  cet::TrainResult result = cet::train(init, groups, train_ds, dev_ds, tc);
  cet::save_checkpoint(result.params, out);

  for (std::size_t e = 0; e < result.history.train_loss.size(); ++e) {
    std::cout << "epoch " << e << ": loss "
              << cet::format_double(result.history.train_loss[e])
              << ", dev accuracy "
              << cet::format_double(result.history.dev_accuracy[e])
              << (e == result.history.selected_epoch ? "  (selected)" : "")
              << "\n";
  }
  std::cout << "saved checkpoint to " << out << "\n";
  return 0;
}

int cmd_exp(const std::string& kind, const std::string& config_path,
            std::string out_dir, std::int64_t seeds_override,
            std::int64_t root_seed_override) {
  cet::KeyValueConfig cfg =
      config_path.empty() ? cet::KeyValueConfig()
                          : cet::KeyValueConfig::parse_file(config_path);
  cet::SuiteConfig suite = config_path.empty()
                               ? cet::default_suite()
                               : cet::suite_from_config(cfg);
  if (seeds_override > 0) suite.n_seeds = seeds_override;
  if (root_seed_override >= 0) {
    suite.root_seed = static_cast<std::uint64_t>(root_seed_override);
  }
  if (out_dir.empty()) out_dir = default_out_dir();

  std::vector<cet::MethodSpec> methods;
  for (const std::string& name : cfg.get_string_list(
           "exp.methods", std::vector<std::string>{"vanilla", "cet"})) {
    methods.push_back(cet::method_from_name(name, suite.train));
  }

  cet::TrainRunCache cache;
  cet::ExperimentReport report;
  if (kind == "retention") {
    report = cet::run_retention(suite, methods, &cache);
  } else if (kind == "chain") {
    const std::size_t cycles = cfg.get_u64("exp.cycles", 3);
    report = cet::run_cyclic_chain(suite, cycles, methods, &cache);
  } else if (kind == "ablate") {
    report = cet::run_ablation_grid(suite, &cache);
  } else if (kind == "lowres") {
    const std::vector<double> fractions = cfg.get_double_list(
        "exp.fractions", {0.05, 0.1, 0.2, 0.5, 0.8, 1.0});
    report = cet::run_low_resource(suite, fractions, methods, &cache);
  } else {
    throw std::runtime_error("unknown experiment kind: " + kind);
  }

  cet::validate_report(report);
  cet::EmitPaths paths = cet::emit_report(report, out_dir);
  std::cout << "cells: " << report.cells.size() << "\n";
  for (const cet::Aggregate& a : cet::aggregate_report(report)) {
    std::cout << a.dataset << " | " << a.method << " | " << a.metric
              << ": mean " << cet::format_double(a.mean) << " sd "
              << cet::format_double(a.sd) << " (n=" << a.n << ")\n";
  }
  std::cout << "wrote " << paths.csv_path << "\n";
  std::cout << "wrote " << paths.json_path << "\n";
  return 0;
}

int cmd_gradcheck(const std::string& config_path) {
  cet::KeyValueConfig cfg =
      config_path.empty() ? cet::KeyValueConfig()
                          : cet::KeyValueConfig::parse_file(config_path);
  cet::ModelDims dims;
  dims.vocab_buckets = cfg.get_u64("gradcheck.vocab_buckets", 128);
  dims.embed_dim = cfg.get_u64("gradcheck.embed_dim", 8);
  dims.hidden_dim = cfg.get_u64("gradcheck.hidden_dim", 8);
  const std::uint64_t seed = cfg.get_u64("gradcheck.seed", 7);
  const std::size_t n_groups = cfg.get_u64("gradcheck.groups", 10);
  const std::size_t n_coords = cfg.get_u64("gradcheck.coords", 100);
  const double h = cfg.get_double("gradcheck.h", 1e-4);
  const double tol = cfg.get_double("gradcheck.tolerance", 1e-4);

  cet::GradCheckResult res =
      cet::run_gradcheck(dims, seed, n_groups, n_coords, h);
  for (const cet::GradCheckCase& c : res.cases) {
    std::cout << cet::loss_mode_name(c.mode) << " w0="
              << cet::format_double(c.w0) << ": max rel err "
              << cet::format_double(c.max_rel_error) << "\n";
  }
  std::cout << "overall max rel err " << cet::format_double(res.max_rel_error)
            << " (tolerance " << cet::format_double(tol) << ")\n";
  return res.max_rel_error <= tol ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Colliding-effect tuning toolkit"};
  app.require_subcommand(1);

  // data
  auto* data = app.add_subcommand("data", "Dataset utilities");
  data->require_subcommand(1);

  std::vector<std::string> stats_paths;
  auto* stats = data->add_subcommand("stats", "Describe JSONL datasets");
  stats->add_option("paths", stats_paths, "JSONL files")->required();

  std::string sub_path, sub_out;
  double sub_fraction = 1.0;
  std::uint64_t sub_seed = 0;
  auto* sub = data->add_subcommand("subsample", "Uniform subsample");
  sub->add_option("path", sub_path, "JSONL file")->required();
  sub->add_option("--fraction", sub_fraction, "fraction in (0,1]")->required();
  sub->add_option("--seed", sub_seed, "draw seed")->required();
  sub->add_option("--out", sub_out, "output JSONL")->required();

  std::string gen_config, gen_out_dir;
  auto* gen = data->add_subcommand("gen-synth", "Generate a synthetic corpus");
  gen->add_option("--config", gen_config, "key-value config")->required();
  gen->add_option("--out-dir", gen_out_dir, "output directory")->required();

  // sim
  std::string sim_backend = "exact", sim_vectors, sim_a, sim_b;
  auto* sim = app.add_subcommand("sim", "Answer similarity");
  sim->add_option("--backend", sim_backend, "exact|jaccard|embed");
  sim->add_option("--vectors", sim_vectors, "token vector file (embed)");
  sim->add_option("--a", sim_a, "first answer")->required();
  sim->add_option("--b", sim_b, "second answer")->required();

  // knn
  auto* knn = app.add_subcommand("knn", "Neighbor groups");
  knn->require_subcommand(1);
  std::string knn_dataset, knn_metric = "gold", knn_backend = "exact";
  std::string knn_vectors, knn_checkpoint, knn_selector = "largest", knn_out;
  int knn_k = 5;
  double knn_theta = 1.0;
  std::uint64_t knn_seed = 0;
  auto* knn_build = knn->add_subcommand("build", "Build per-anchor groups");
  knn_build->add_option("--dataset", knn_dataset, "JSONL file")->required();
  knn_build->add_option("--metric", knn_metric, "gold|avg");
  knn_build->add_option("--backend", knn_backend, "exact|jaccard|embed");
  knn_build->add_option("--vectors", knn_vectors, "token vector file");
  knn_build->add_option("--checkpoint", knn_checkpoint,
                        "frozen checkpoint (avg metric)");
  knn_build->add_option("--K", knn_k, "max neighbors");
  knn_build->add_option("--theta", knn_theta, "similarity threshold");
  knn_build->add_option("--selector", knn_selector,
                        "largest|smallest|random");
  knn_build->add_option("--seed", knn_seed, "selector seed (random)");
  knn_build->add_option("--out", knn_out, "output groups JSONL")->required();

  // train
  std::string train_config, train_out;
  auto* tr = app.add_subcommand("train", "Train a scorer");
  tr->add_option("--config", train_config, "key-value config")->required();
  tr->add_option("--out", train_out, "output checkpoint")->required();

  // exp
  auto* exp = app.add_subcommand("exp", "Experiment protocols");
  exp->require_subcommand(1);
  struct ExpArgs {
    std::string config;
    std::string out;
    std::int64_t seeds = -1;
    std::int64_t root_seed = -1;
  };
  std::map<std::string, ExpArgs> exp_args;
  for (const std::string kind : {"retention", "chain", "ablate", "lowres"}) {
    auto* sc = exp->add_subcommand(kind, kind + " experiment");
    ExpArgs& args = exp_args[kind];
    sc->add_option("--config", args.config, "key-value config");
    sc->add_option("--out", args.out, "output directory (or $CET_OUT_DIR)");
    sc->add_option("--seeds", args.seeds, "number of seeds");
    sc->add_option("--root-seed", args.root_seed, "root seed");
  }

  // gradcheck
  std::string gc_config;
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient check");
  gc->add_option("--config", gc_config, "key-value config");

  CLI11_PARSE(app, argc, argv);

  try {
    if (stats->parsed()) return cmd_data_stats(stats_paths);
    if (sub->parsed()) {
      return cmd_data_subsample(sub_path, sub_fraction, sub_seed, sub_out);
    }
    if (gen->parsed()) return cmd_data_gen_synth(gen_config, gen_out_dir);
    if (sim->parsed()) return cmd_sim(sim_backend, sim_vectors, sim_a, sim_b);
    if (knn_build->parsed()) {
      return cmd_knn_build(knn_dataset, knn_metric, knn_backend, knn_vectors,
                           knn_checkpoint, knn_k, knn_theta, knn_selector,
                           knn_seed, knn_out);
    }
    if (tr->parsed()) return cmd_train(train_config, train_out);
    for (auto& [kind, args] : exp_args) {
      if (exp->got_subcommand(kind)) {
        return cmd_exp(kind, args.config, args.out, args.seeds,
                       args.root_seed);
      }
    }
    if (gc->parsed()) return cmd_gradcheck(gc_config);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  std::cerr << "error: no subcommand\n";
  return 1;
}
