#include "cet/harness.hpp"

#include <atomic>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <nlohmann/json.hpp>

#include "cet/rng.hpp"

namespace cet {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

// ---- content fingerprints ----

class Fnv64 {
 public:
  void bytes(const void* data, std::size_t n) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h_ ^= p[i];
      h_ *= 1099511628211ULL;
    }
  }
  void str(const std::string& s) {
    u64(s.size());
    bytes(s.data(), s.size());
  }
  void u64(std::uint64_t v) { bytes(&v, sizeof(v)); }
  void f64(double v) { bytes(&v, sizeof(v)); }
  void f64s(const std::vector<double>& v) {
    u64(v.size());
    bytes(v.data(), v.size() * sizeof(double));
  }
  std::string hex() const {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(h_));
    return std::string(buf);
  }

 private:
  std::uint64_t h_ = 14695981039346656037ULL;
};

std::string fp_train_cfg(const TrainConfig& cfg) {
  Fnv64 f;
  f.f64(cfg.learning_rate);
  f.u64(cfg.epochs);
  f.u64(cfg.batch_size);
  f.f64(cfg.w0);
  f.u64(static_cast<std::uint64_t>(cfg.K));
  f.f64(cfg.theta);
  f.u64(cfg.loss_mode == LossMode::MixtureLog ? 0 : 1);
  f.f64(cfg.weight_decay);
  f.f64(cfg.grad_clip_norm);
  f.u64(cfg.seed);
  return f.hex();
}

std::string fp_groups(std::span<const NeighborGroup> groups) {
  Fnv64 f;
  f.u64(groups.size());
  for (const NeighborGroup& g : groups) {
    f.u64(static_cast<std::uint64_t>(g.anchor_id));
    f.u64(g.neighbor_ids.size());
    for (std::int64_t id : g.neighbor_ids) {
      f.u64(static_cast<std::uint64_t>(id));
    }
    f.f64s(g.similarities);
  }
  return f.hex();
}

}  // namespace

std::string fingerprint_params(const ScorerParams& p) {
  Fnv64 f;
  f.u64(p.vocab_buckets);
  f.u64(p.embed_dim);
  f.u64(p.hidden_dim);
  f.u64(p.hash_seed);
  f.f64s(p.embedding);
  f.f64s(p.hidden_w);
  f.f64s(p.hidden_b);
  f.f64s(p.out_w);
  f.f64(p.out_b);
  return f.hex();
}

std::string fingerprint_dataset(const QaDataset& ds) {
  Fnv64 f;
  f.str(ds.name);
  f.str(ds.split);
  f.u64(ds.samples.size());
  for (const QaSample& s : ds.samples) {
    f.u64(static_cast<std::uint64_t>(s.id));
    f.str(s.question);
    f.u64(s.options.size());
    for (const std::string& o : s.options) f.str(o);
    f.u64(static_cast<std::uint64_t>(s.gold_index));
  }
  return f.hex();
}

// ---- method specs ----

MethodSpec MethodSpec::vanilla() {
  MethodSpec m;
  m.name = "vanilla";
  m.use_neighbors = false;
  m.K = 0;
  m.w0 = 1.0;
  return m;
}

MethodSpec MethodSpec::cet(const TrainConfig& train) {
  MethodSpec m;
  m.name = "cet";
  m.use_neighbors = true;
  m.metric = NeighborMetric::Kind::GoldAnswer;
  m.backend = BackendKind::Exact;
  m.selector = SelectorKind::Largest;
  m.theta = train.theta;
  m.w0 = train.w0;
  m.K = train.K;
  return m;
}

MethodSpec method_from_name(const std::string& name, const TrainConfig& train) {
  if (name == "vanilla") return MethodSpec::vanilla();
  if (name == "cet") return MethodSpec::cet(train);
  throw std::invalid_argument("unknown method: " + name);
}

// ---- suite ----

SuiteConfig default_suite() {
  SuiteConfig s;
  s.synth.n_concepts = 50;
  s.synth.questions_per_concept = 20;
  s.synth.n_options = 4;
  s.synth.vocab_size = 2000;
  s.synth.distractor_overlap = 0.5;
  s.synth.n_tasks = 3;
  s.synth.task_concepts = 30;
  s.dims = ModelDims{4096, 32, 32};
  s.train = TrainConfig{};
  s.train.epochs = 20;
  s.pretrain_epochs = 20;
  s.n_seeds = 5;
  s.root_seed = 42;
  return s;
}

SuiteConfig suite_from_config(const KeyValueConfig& cfg) {
  SuiteConfig s = default_suite();
  s.synth.n_concepts = cfg.get_u64("synth.n_concepts", s.synth.n_concepts);
  s.synth.questions_per_concept =
      cfg.get_u64("synth.questions_per_concept", s.synth.questions_per_concept);
  s.synth.n_options = cfg.get_u64("synth.n_options", s.synth.n_options);
  s.synth.vocab_size = cfg.get_u64("synth.vocab_size", s.synth.vocab_size);
  s.synth.distractor_overlap =
      cfg.get_double("synth.distractor_overlap", s.synth.distractor_overlap);
  s.synth.n_tasks = cfg.get_u64("synth.n_tasks", s.synth.n_tasks);
  s.synth.task_concepts =
      cfg.get_u64("synth.task_concepts", s.synth.task_concepts);
  s.synth.signature_tokens =
      cfg.get_u64("synth.signature_tokens", s.synth.signature_tokens);
  s.synth.signature_per_question = cfg.get_u64(
      "synth.signature_per_question", s.synth.signature_per_question);
  s.synth.noise_per_question =
      cfg.get_u64("synth.noise_per_question", s.synth.noise_per_question);
  s.synth.noise_pool = cfg.get_u64("synth.noise_pool", s.synth.noise_pool);
  s.synth.answer_alias =
      cfg.get_u64("synth.answer_alias", s.synth.answer_alias);
  s.synth.shared_train_questions = cfg.get_u64(
      "synth.shared_train_questions", s.synth.shared_train_questions);
  s.synth.shared_dev_questions = cfg.get_u64(
      "synth.shared_dev_questions", s.synth.shared_dev_questions);
  s.dims.vocab_buckets =
      cfg.get_u64("model.vocab_buckets", s.dims.vocab_buckets);
  s.dims.embed_dim = cfg.get_u64("model.embed_dim", s.dims.embed_dim);
  s.dims.hidden_dim = cfg.get_u64("model.hidden_dim", s.dims.hidden_dim);
  s.train.learning_rate =
      cfg.get_double("train.learning_rate", s.train.learning_rate);
  s.train.epochs = cfg.get_u64("train.epochs", s.train.epochs);
  s.train.batch_size = cfg.get_u64("train.batch_size", s.train.batch_size);
  s.train.w0 = cfg.get_double("train.w0", s.train.w0);
  s.train.K = static_cast<int>(cfg.get_int("train.K", s.train.K));
  s.train.theta = cfg.get_double("train.theta", s.train.theta);
  s.train.loss_mode = parse_loss_mode(
      cfg.get_string("train.loss_mode", loss_mode_name(s.train.loss_mode)));
  s.train.weight_decay =
      cfg.get_double("train.weight_decay", s.train.weight_decay);
  s.train.grad_clip_norm =
      cfg.get_double("train.grad_clip_norm", s.train.grad_clip_norm);
  s.pretrain_epochs = cfg.get_u64("pretrain.epochs", s.pretrain_epochs);
  s.n_seeds = cfg.get_u64("exp.seeds", s.n_seeds);
  s.root_seed = cfg.get_u64("exp.root_seed", s.root_seed);
  s.n_threads = cfg.get_u64("exp.threads", s.n_threads);
  s.ablation_avg_theta =
      cfg.get_double("exp.ablation_avg_theta", s.ablation_avg_theta);
  return s;
}

std::map<std::string, std::string> suite_snapshot(const SuiteConfig& s) {
  std::map<std::string, std::string> m;
  m["version"] = std::to_string(KeyValueConfig::kVersion);
  m["synth.n_concepts"] = std::to_string(s.synth.n_concepts);
  m["synth.questions_per_concept"] =
      std::to_string(s.synth.questions_per_concept);
  m["synth.n_options"] = std::to_string(s.synth.n_options);
  m["synth.vocab_size"] = std::to_string(s.synth.vocab_size);
  m["synth.distractor_overlap"] = format_double(s.synth.distractor_overlap);
  m["synth.n_tasks"] = std::to_string(s.synth.n_tasks);
  m["synth.task_concepts"] = std::to_string(s.synth.task_concepts);
  m["synth.signature_tokens"] = std::to_string(s.synth.signature_tokens);
  m["synth.signature_per_question"] =
      std::to_string(s.synth.signature_per_question);
  m["synth.noise_per_question"] = std::to_string(s.synth.noise_per_question);
  m["synth.noise_pool"] = std::to_string(s.synth.noise_pool);
  m["synth.answer_alias"] = std::to_string(s.synth.answer_alias);
  m["synth.shared_train_questions"] =
      std::to_string(s.synth.shared_train_questions);
  m["synth.shared_dev_questions"] =
      std::to_string(s.synth.shared_dev_questions);
  m["model.vocab_buckets"] = std::to_string(s.dims.vocab_buckets);
  m["model.embed_dim"] = std::to_string(s.dims.embed_dim);
  m["model.hidden_dim"] = std::to_string(s.dims.hidden_dim);
  m["train.learning_rate"] = format_double(s.train.learning_rate);
  m["train.epochs"] = std::to_string(s.train.epochs);
  m["train.batch_size"] = std::to_string(s.train.batch_size);
  m["train.w0"] = format_double(s.train.w0);
  m["train.K"] = std::to_string(s.train.K);
  m["train.theta"] = format_double(s.train.theta);
  m["train.loss_mode"] = loss_mode_name(s.train.loss_mode);
  m["train.weight_decay"] = format_double(s.train.weight_decay);
  m["train.grad_clip_norm"] = format_double(s.train.grad_clip_norm);
  m["pretrain.epochs"] = std::to_string(s.pretrain_epochs);
  m["exp.seeds"] = std::to_string(s.n_seeds);
  m["exp.root_seed"] = std::to_string(s.root_seed);
  m["exp.ablation_avg_theta"] = format_double(s.ablation_avg_theta);
  return m;
}

// ---- cache ----

std::shared_ptr<const TrainRunCache::Entry> TrainRunCache::get_or_compute(
    const std::string& key, const std::function<Entry()>& compute) {
  {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = map_.find(key);
    if (it != map_.end()) {
      ++hits_;
      return it->second;
    }
  }
  auto entry = std::make_shared<const Entry>(compute());
  std::lock_guard<std::mutex> lock(mu_);
  auto [it, inserted] = map_.emplace(key, entry);
  if (inserted) {
    ++misses_;
  } else {
    ++hits_;  // another thread computed it first
  }
  return it->second;
}

std::vector<NeighborGroup> empty_groups(const QaDataset& ds) {
  std::vector<NeighborGroup> groups;
  groups.reserve(ds.samples.size());
  for (const QaSample& s : ds.samples) {
    NeighborGroup g;
    g.anchor_id = s.id;
    groups.push_back(std::move(g));
  }
  return groups;
}

namespace {

// ---- shared per-seed pipeline ----

void parallel_for(std::size_t n, std::size_t n_threads,
                  const std::function<void(std::size_t)>& fn) {
  if (n_threads == 0) {
    n_threads = std::max<std::size_t>(1, std::thread::hardware_concurrency());
  }
  n_threads = std::min(n_threads, n);
  if (n_threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::exception_ptr err;
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mu);
        if (!err) err = std::current_exception();
      }
    }
  };
  std::vector<std::thread> threads;
  threads.reserve(n_threads);
  for (std::size_t t = 0; t < n_threads; ++t) threads.emplace_back(worker);
  for (std::thread& t : threads) t.join();
  if (err) std::rethrow_exception(err);
}

struct SeedContext {
  std::uint64_t run_seed = 0;
  SynthCorpus corpus;
  ScorerParams pretrained;  // F0: checkpoint right after synthetic pretraining
  double probe_before = 0.0;
};

TrainRunCache::Entry run_training(const ScorerParams& init,
                                  std::span<const NeighborGroup> groups,
                                  const QaDataset& train_ds,
                                  const QaDataset& dev_ds,
                                  const TrainConfig& cfg,
                                  TrainRunCache* cache) {
  auto compute = [&]() {
    TrainResult r = train(init, groups, train_ds, dev_ds, cfg);
    return TrainRunCache::Entry{std::move(r.params), std::move(r.history)};
  };
  if (cache == nullptr) return compute();
  std::string key = "train|" + fingerprint_params(init) + "|" +
                    fingerprint_dataset(train_ds) + "|" +
                    fingerprint_dataset(dev_ds) + "|" + fp_groups(groups) +
                    "|" + fp_train_cfg(cfg);
  return *cache->get_or_compute(key, compute);
}

SeedContext make_seed_context(const SuiteConfig& suite, std::size_t seed_index,
                              TrainRunCache* cache) {
  SeedContext ctx;
  ctx.run_seed = derive_seed(suite.root_seed, kSeedRun, seed_index);

  SynthConfig synth = suite.synth;
  synth.seed = derive_seed(ctx.run_seed, kSeedSynth);
  ctx.corpus = generate_synthetic(synth);

  ScorerParams fresh =
      init_params(suite.dims.vocab_buckets, suite.dims.embed_dim,
                  suite.dims.hidden_dim, derive_seed(ctx.run_seed, kSeedInit));

  TrainConfig pre_cfg = suite.train;
  pre_cfg.epochs = suite.pretrain_epochs;
  pre_cfg.K = 0;
  pre_cfg.w0 = 1.0;
  pre_cfg.seed = derive_seed(ctx.run_seed, kSeedPretrain);

  std::vector<NeighborGroup> groups = empty_groups(ctx.corpus.pretrain.train);
  TrainRunCache::Entry entry =
      run_training(fresh, groups, ctx.corpus.pretrain.train,
                   ctx.corpus.pretrain.dev, pre_cfg, cache);
  ctx.pretrained = std::move(entry.params);
  ctx.probe_before = evaluate(ctx.pretrained, ctx.corpus.pretrain.test);
  return ctx;
}

SimilarityBackend backend_for(const MethodSpec& m) {
  switch (m.backend) {
    case BackendKind::Exact: return SimilarityBackend::exact();
    case BackendKind::Jaccard: return SimilarityBackend::jaccard();
    case BackendKind::EmbeddingCosine:
      throw std::invalid_argument(
          "embedding backend needs a vector table; not available in the "
          "synthetic harness");
  }
  throw std::logic_error("bad backend kind");
}

std::vector<NeighborGroup> method_groups(const MethodSpec& m,
                                         const QaDataset& train_ds,
                                         const ScorerParams& frozen,
                                         std::uint64_t run_seed) {
  if (!m.use_neighbors) return empty_groups(train_ds);
  Selector sel;
  sel.kind = m.selector;
  sel.seed = derive_seed(run_seed, kSeedSelector, hash_token(0, m.name));
  NeighborMetric metric =
      m.metric == NeighborMetric::Kind::GoldAnswer
          ? NeighborMetric::gold(backend_for(m))
          : NeighborMetric::representation(frozen);
  return build_groups(train_ds, metric, m.K, m.theta, sel);
}

TrainConfig method_cfg(const SuiteConfig& suite, const MethodSpec& m,
                       std::uint64_t seed) {
  TrainConfig cfg = suite.train;
  cfg.w0 = m.w0;
  cfg.K = m.use_neighbors ? m.K : 0;
  cfg.theta = m.theta;
  cfg.seed = seed;
  return cfg;
}

std::string stage_label(std::size_t stage_1based, std::size_t task) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "stage%02zu.task%zu", stage_1based, task);
  return buf;
}

std::string method_names_csv(const std::vector<MethodSpec>& methods) {
  std::string out;
  for (const MethodSpec& m : methods) {
    if (!out.empty()) out += ",";
    out += m.name;
  }
  return out;
}

}  // namespace

// ---- experiments ----

ExperimentReport run_retention(const SuiteConfig& suite,
                               const std::vector<MethodSpec>& methods,
                               TrainRunCache* cache) {
  if (methods.empty()) {
    throw std::invalid_argument("run_retention: no methods");
  }
  ExperimentReport report;
  report.kind = "retention";
  report.config = suite_snapshot(suite);
  report.config["exp.kind"] = report.kind;
  report.config["exp.methods"] = method_names_csv(methods);

  std::vector<std::vector<ReportCell>> by_seed(suite.n_seeds);
  parallel_for(suite.n_seeds, suite.n_threads, [&](std::size_t i) {
    SeedContext ctx = make_seed_context(suite, i, cache);
    const SynthTask& task = ctx.corpus.tasks.at(0);
    std::vector<ReportCell>& cells = by_seed[i];
    for (const MethodSpec& m : methods) {
      std::vector<NeighborGroup> groups =
          method_groups(m, task.train, ctx.pretrained, ctx.run_seed);
      TrainConfig cfg =
          method_cfg(suite, m, derive_seed(ctx.run_seed, kSeedFinetune, 0));
      TrainRunCache::Entry entry = run_training(
          ctx.pretrained, groups, task.train, task.dev, cfg, cache);
      RetentionMetric ret{ctx.probe_before,
                          evaluate(entry.params, ctx.corpus.pretrain.test)};
      const double test_acc = evaluate(entry.params, task.test);
      const double dev_acc =
          entry.history.dev_accuracy.at(entry.history.selected_epoch);
      auto cell = [&](const std::string& ds, const std::string& metric,
                      double v) {
        cells.push_back({ds, m.name, metric, i, ctx.run_seed, v});
      };
      cell("pretrain_probe", "accuracy_before", ret.before);
      cell("pretrain_probe", "accuracy_after", ret.after);
      cell("pretrain_probe", "retention", ret.retention());
      cell("task0", "test_accuracy", test_acc);
      cell("task0", "dev_accuracy", dev_acc);
    }
  });
  for (auto& v : by_seed) {
    report.cells.insert(report.cells.end(), v.begin(), v.end());
  }
  sort_cells(report);
  return report;
}

ExperimentReport run_cyclic_chain(const SuiteConfig& suite, std::size_t cycles,
                                  const std::vector<MethodSpec>& methods,
                                  TrainRunCache* cache) {
  if (cycles < 1) {
    throw std::invalid_argument("run_cyclic_chain: cycles must be >= 1");
  }
  if (suite.synth.n_tasks < 2) {
    throw std::invalid_argument("run_cyclic_chain: need at least 2 tasks");
  }
  ExperimentReport report;
  report.kind = "chain";
  report.config = suite_snapshot(suite);
  report.config["exp.kind"] = report.kind;
  report.config["exp.cycles"] = std::to_string(cycles);
  report.config["exp.methods"] = method_names_csv(methods);

  std::vector<std::vector<ReportCell>> by_seed(suite.n_seeds);
  parallel_for(suite.n_seeds, suite.n_threads, [&](std::size_t i) {
    SeedContext ctx = make_seed_context(suite, i, cache);
    const std::size_t n_tasks = ctx.corpus.tasks.size();
    std::vector<ReportCell>& cells = by_seed[i];
    for (const MethodSpec& m : methods) {
      ScorerParams params = ctx.pretrained;
      for (std::size_t stage = 0; stage < cycles * n_tasks; ++stage) {
        const std::size_t t = stage % n_tasks;
        const SynthTask& task = ctx.corpus.tasks[t];
        std::vector<NeighborGroup> groups =
            method_groups(m, task.train, ctx.pretrained, ctx.run_seed);
        TrainConfig cfg = method_cfg(
            suite, m, derive_seed(ctx.run_seed, kSeedFinetune, stage));
        TrainRunCache::Entry entry =
            run_training(params, groups, task.train, task.dev, cfg, cache);
        params = entry.params;
        for (std::size_t u = 0; u < n_tasks; ++u) {
          cells.push_back({stage_label(stage + 1, u), m.name, "test_accuracy",
                           i, ctx.run_seed,
                           evaluate(params, ctx.corpus.tasks[u].test)});
        }
      }
    }
  });
  for (auto& v : by_seed) {
    report.cells.insert(report.cells.end(), v.begin(), v.end());
  }
  sort_cells(report);
  return report;
}

ExperimentReport run_ablation_grid(const SuiteConfig& suite,
                                   TrainRunCache* cache) {
  std::vector<MethodSpec> methods;
  auto add = [&](const std::string& name, NeighborMetric::Kind metric,
                 SelectorKind sel, double theta) {
    MethodSpec m = MethodSpec::cet(suite.train);
    m.name = name;
    m.metric = metric;
    m.selector = sel;
    m.theta = theta;
    methods.push_back(m);
  };
  add("gold+large", NeighborMetric::Kind::GoldAnswer, SelectorKind::Largest,
      suite.train.theta);
  add("gold+rand", NeighborMetric::Kind::GoldAnswer, SelectorKind::Random,
      suite.train.theta);
  add("gold+small", NeighborMetric::Kind::GoldAnswer, SelectorKind::Smallest,
      suite.train.theta);
  add("avg+large", NeighborMetric::Kind::Representation, SelectorKind::Largest,
      suite.ablation_avg_theta);
  add("avg+rand", NeighborMetric::Kind::Representation, SelectorKind::Random,
      suite.ablation_avg_theta);
  add("avg+small", NeighborMetric::Kind::Representation, SelectorKind::Smallest,
      suite.ablation_avg_theta);
  methods.push_back(MethodSpec::vanilla());

  ExperimentReport report;
  report.kind = "ablate";
  report.config = suite_snapshot(suite);
  report.config["exp.kind"] = report.kind;
  report.config["exp.methods"] = method_names_csv(methods);

  std::vector<std::vector<ReportCell>> by_seed(suite.n_seeds);
  parallel_for(suite.n_seeds, suite.n_threads, [&](std::size_t i) {
    SeedContext ctx = make_seed_context(suite, i, cache);
    const SynthTask& task = ctx.corpus.tasks.at(0);
    for (const MethodSpec& m : methods) {
      std::vector<NeighborGroup> groups =
          method_groups(m, task.train, ctx.pretrained, ctx.run_seed);
      TrainConfig cfg =
          method_cfg(suite, m, derive_seed(ctx.run_seed, kSeedFinetune, 0));
      TrainRunCache::Entry entry = run_training(
          ctx.pretrained, groups, task.train, task.dev, cfg, cache);
      by_seed[i].push_back({"task0", m.name, "test_accuracy", i, ctx.run_seed,
                            evaluate(entry.params, task.test)});
    }
  });
  for (auto& v : by_seed) {
    report.cells.insert(report.cells.end(), v.begin(), v.end());
  }
  sort_cells(report);
  return report;
}

ExperimentReport run_low_resource(const SuiteConfig& suite,
                                  const std::vector<double>& fractions,
                                  const std::vector<MethodSpec>& methods,
                                  TrainRunCache* cache) {
  if (fractions.empty()) {
    throw std::invalid_argument("run_low_resource: no fractions");
  }
  for (double f : fractions) {
    if (!(f > 0.0) || f > 1.0) {
      throw std::invalid_argument(
          "run_low_resource: fractions must be in (0,1]");
    }
  }
  ExperimentReport report;
  report.kind = "lowres";
  report.config = suite_snapshot(suite);
  report.config["exp.kind"] = report.kind;
  report.config["exp.methods"] = method_names_csv(methods);
  {
    std::string fl;
    for (double f : fractions) {
      if (!fl.empty()) fl += ",";
      fl += format_double(f);
    }
    report.config["exp.fractions"] = fl;
  }

  std::vector<std::vector<ReportCell>> by_seed(suite.n_seeds);
  parallel_for(suite.n_seeds, suite.n_threads, [&](std::size_t i) {
    SeedContext ctx = make_seed_context(suite, i, cache);
    const SynthTask& task = ctx.corpus.tasks.at(0);
    for (std::size_t fi = 0; fi < fractions.size(); ++fi) {
      const double f = fractions[fi];
      const QaDataset sub =
          f == 1.0 ? task.train
                   : subsample(task.train, f,
                               derive_seed(ctx.run_seed, kSeedSubsample, fi));
      const std::string ds_label = "task0@" + format_double(f);
      for (const MethodSpec& m : methods) {
        std::vector<NeighborGroup> groups =
            method_groups(m, sub, ctx.pretrained, ctx.run_seed);
        // one training seed across fractions so the 1.0 column reproduces
        // the plain full-data run exactly
        TrainConfig cfg = method_cfg(
            suite, m, derive_seed(ctx.run_seed, kSeedFinetune, 0));
        TrainRunCache::Entry entry =
            run_training(ctx.pretrained, groups, sub, task.dev, cfg, cache);
        by_seed[i].push_back({ds_label, m.name, "test_accuracy", i,
                              ctx.run_seed, evaluate(entry.params, task.test)});
      }
    }
  });
  for (auto& v : by_seed) {
    report.cells.insert(report.cells.end(), v.begin(), v.end());
  }
  sort_cells(report);
  return report;
}

// ---- gradient check ----

std::vector<GroupExample> random_group_batch(std::size_t n_groups,
                                             std::size_t max_k,
                                             std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t pool = 50;
  auto random_question = [&]() {
    const std::size_t len = 3 + rng.uniform_index(6);
    std::string q;
    for (std::size_t t = 0; t < len; ++t) {
      if (!q.empty()) q.push_back(' ');
      q += "tok" + std::to_string(rng.uniform_index(pool));
    }
    return q;
  };
  std::vector<GroupExample> batch;
  for (std::size_t g = 0; g < n_groups; ++g) {
    GroupExample ex;
    ex.question = random_question();
    const std::size_t n_opts = 2 + rng.uniform_index(5);  // 2..6
    for (std::size_t j : rng.sample_without_replacement(pool, n_opts)) {
      ex.options.push_back("opt" + std::to_string(j));
    }
    ex.gold_index = static_cast<int>(rng.uniform_index(n_opts));
    const std::size_t k =
        max_k == 0 ? 0 : rng.uniform_index(max_k + 1);  // 0..max_k
    for (std::size_t m = 0; m < k; ++m) {
      ex.neighbor_questions.push_back(random_question());
    }
    batch.push_back(std::move(ex));
  }
  return batch;
}

GradCheckResult run_gradcheck(const ModelDims& dims, std::uint64_t seed,
                              std::size_t n_groups, std::size_t n_coords,
                              double h) {
  const ScorerParams params =
      init_params(dims.vocab_buckets, dims.embed_dim, dims.hidden_dim, seed);
  const std::vector<GroupExample> batch =
      random_group_batch(n_groups, 5, derive_seed(seed, kSeedSynth));

  GradCheckResult result;
  const double w0_grid[] = {0.0, 0.5, 0.7, 0.9, 0.95, 0.97, 1.0};
  for (LossMode mode : {LossMode::MixtureLog, LossMode::WeightedLog}) {
    for (double w0 : w0_grid) {
      BatchResult br = batch_objective(batch, params, w0, mode);
      auto loss_fn = [&](const ScorerParams& p) {
        return batch_objective_loss_ld(batch, p, w0, mode);
      };
      GradCheckCase c;
      c.mode = mode;
      c.w0 = w0;
      c.max_rel_error = finite_diff_check(
          params, loss_fn, br.grads, n_coords, h,
          derive_seed(seed, kSeedRun, static_cast<std::uint64_t>(w0 * 100) +
                                          (mode == LossMode::MixtureLog ? 0
                                                                        : 1000)));
      result.max_rel_error = std::max(result.max_rel_error, c.max_rel_error);
      result.cases.push_back(c);
    }
  }
  return result;
}

// ---- report plumbing ----

void sort_cells(ExperimentReport& report) {
  std::sort(report.cells.begin(), report.cells.end(),
            [](const ReportCell& a, const ReportCell& b) {
              return std::tie(a.dataset, a.method, a.metric, a.seed_index) <
                     std::tie(b.dataset, b.method, b.metric, b.seed_index);
            });
}

std::vector<Aggregate> aggregate_report(const ExperimentReport& report) {
  std::map<std::tuple<std::string, std::string, std::string>,
           std::vector<double>>
      groups;
  for (const ReportCell& c : report.cells) {
    groups[{c.dataset, c.method, c.metric}].push_back(c.value);
  }
  std::vector<Aggregate> out;
  for (const auto& [key, values] : groups) {
    Aggregate a;
    a.dataset = std::get<0>(key);
    a.method = std::get<1>(key);
    a.metric = std::get<2>(key);
    a.n = values.size();
    double sum = 0.0;
    for (double v : values) sum += v;
    a.mean = sum / static_cast<double>(a.n);
    if (a.n >= 2) {
      double ss = 0.0;
      for (double v : values) ss += (v - a.mean) * (v - a.mean);
      a.sd = std::sqrt(ss / static_cast<double>(a.n - 1));
    }
    out.push_back(std::move(a));
  }
  return out;
}

double report_mean(const ExperimentReport& report, const std::string& dataset,
                   const std::string& method, const std::string& metric) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const ReportCell& c : report.cells) {
    if (c.dataset == dataset && c.method == method && c.metric == metric) {
      sum += c.value;
      ++n;
    }
  }
  if (n == 0) {
    throw std::runtime_error("report_mean: no cells for " + dataset + "/" +
                             method + "/" + metric);
  }
  return sum / static_cast<double>(n);
}

void validate_report(const ExperimentReport& report) {
  if (report.cells.empty()) {
    throw std::runtime_error("report invariant: no cells");
  }
  std::map<std::tuple<std::string, std::string, std::string>,
           std::set<std::uint64_t>>
      seeds_per_combo;
  for (const ReportCell& c : report.cells) {
    if (!std::isfinite(c.value)) {
      throw std::runtime_error("report invariant: non-finite cell value in " +
                               c.dataset + "/" + c.method + "/" + c.metric);
    }
    auto& s = seeds_per_combo[{c.dataset, c.method, c.metric}];
    if (!s.insert(c.seed_index).second) {
      throw std::runtime_error("report invariant: duplicate cell for " +
                               c.dataset + "/" + c.method + "/" + c.metric);
    }
  }
  const std::set<std::uint64_t>& first = seeds_per_combo.begin()->second;
  for (const auto& [key, s] : seeds_per_combo) {
    if (s != first) {
      throw std::runtime_error(
          "report invariant: uneven seed coverage across cells");
    }
  }
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string report_csv(const ExperimentReport& report) {
  ExperimentReport sorted = report;
  sort_cells(sorted);
  std::string out = "dataset,method,metric,seed_index,seed,value\n";
  for (const ReportCell& c : sorted.cells) {
    out += c.dataset;
    out += ',';
    out += c.method;
    out += ',';
    out += c.metric;
    out += ',';
    out += std::to_string(c.seed_index);
    out += ',';
    out += std::to_string(c.seed);
    out += ',';
    out += format_double(c.value);
    out += '\n';
  }
  return out;
}

namespace {

std::string utc_stamp() {
  std::time_t now = std::time(nullptr);
  std::tm tm_utc{};
  gmtime_r(&now, &tm_utc);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y%m%dT%H%M%SZ", &tm_utc);
  return buf;
}

}  // namespace

EmitPaths emit_report(const ExperimentReport& report,
                      const std::string& out_dir) {
  validate_report(report);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) {
    throw std::runtime_error("emit_report: cannot create " + out_dir + ": " +
                             ec.message());
  }
  const std::string base = report.kind + "_" + utc_stamp();
  EmitPaths paths;
  paths.csv_path = (fs::path(out_dir) / (base + ".csv")).string();
  paths.json_path = (fs::path(out_dir) / (base + ".json")).string();

  {
    std::ofstream csv(paths.csv_path, std::ios::binary);
    if (!csv) {
      throw std::runtime_error("emit_report: cannot open " + paths.csv_path);
    }
    csv << report_csv(report);
    if (!csv) {
      throw std::runtime_error("emit_report: write failed: " + paths.csv_path);
    }
  }

  ExperimentReport sorted = report;
  sort_cells(sorted);
  ordered_json j;
  j["kind"] = sorted.kind;
  j["version"] = "0.1.0";
  j["config"] = sorted.config;
  j["cells"] = ordered_json::array();
  for (const ReportCell& c : sorted.cells) {
    ordered_json cj;
    cj["dataset"] = c.dataset;
    cj["method"] = c.method;
    cj["metric"] = c.metric;
    cj["seed_index"] = c.seed_index;
    cj["seed"] = c.seed;
    cj["value"] = c.value;
    j["cells"].push_back(std::move(cj));
  }
  j["aggregates"] = ordered_json::array();
  for (const Aggregate& a : aggregate_report(sorted)) {
    ordered_json aj;
    aj["dataset"] = a.dataset;
    aj["method"] = a.method;
    aj["metric"] = a.metric;
    aj["n"] = a.n;
    aj["mean"] = a.mean;
    aj["sd"] = a.sd;
    j["aggregates"].push_back(std::move(aj));
  }
  std::ofstream jf(paths.json_path, std::ios::binary);
  if (!jf) {
    throw std::runtime_error("emit_report: cannot open " + paths.json_path);
  }
  jf << j.dump(2) << '\n';
  if (!jf) {
    throw std::runtime_error("emit_report: write failed: " + paths.json_path);
  }
  return paths;
}

ExperimentReport load_report_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_report_json: cannot open " + path);
  ordered_json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw std::runtime_error("load_report_json: " + path + ": " + e.what());
  }
  ExperimentReport report;
  report.kind = j.at("kind").get<std::string>();
  report.config =
      j.at("config").get<std::map<std::string, std::string>>();
  for (const auto& cj : j.at("cells")) {
    ReportCell c;
    c.dataset = cj.at("dataset").get<std::string>();
    c.method = cj.at("method").get<std::string>();
    c.metric = cj.at("metric").get<std::string>();
    c.seed_index = cj.at("seed_index").get<std::uint64_t>();
    c.seed = cj.at("seed").get<std::uint64_t>();
    c.value = cj.at("value").get<double>();
    report.cells.push_back(std::move(c));
  }
  return report;
}

}  // namespace cet
