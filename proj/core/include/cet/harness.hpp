#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "cet/config.hpp"
#include "cet/dataset.hpp"
#include "cet/model.hpp"
#include "cet/neighbors.hpp"
#include "cet/trainer.hpp"

namespace cet {

struct ModelDims {
  std::size_t vocab_buckets = 4096;
  std::size_t embed_dim = 32;
  std::size_t hidden_dim = 32;
};

// One method row of an experiment table.
struct MethodSpec {
  std::string name;
  bool use_neighbors = true;  // false: plain fine-tuning (K = 0)
  NeighborMetric::Kind metric = NeighborMetric::Kind::GoldAnswer;
  BackendKind backend = BackendKind::Exact;
  SelectorKind selector = SelectorKind::Largest;
  double theta = 1.0;
  double w0 = 0.7;
  int K = 5;

  static MethodSpec vanilla();
  static MethodSpec cet(const TrainConfig& train);
};

MethodSpec method_from_name(const std::string& name, const TrainConfig& train);

// The built-in synthetic suite; defaults sized to keep a full experiment
// under two minutes on one core.
struct SuiteConfig {
  SynthConfig synth;
  ModelDims dims;
  TrainConfig train;
  std::size_t pretrain_epochs = 20;
  std::size_t n_seeds = 5;
  std::uint64_t root_seed = 42;
  std::size_t n_threads = 0;      // 0 = hardware concurrency
  double ablation_avg_theta = 0.0;  // representation metric keeps plain top-K
};

SuiteConfig default_suite();
SuiteConfig suite_from_config(const KeyValueConfig& cfg);
std::map<std::string, std::string> suite_snapshot(const SuiteConfig& suite);

struct ReportCell {
  std::string dataset;
  std::string method;
  std::string metric;
  std::uint64_t seed_index = 0;
  std::uint64_t seed = 0;
  double value = 0.0;
};

struct Aggregate {
  std::string dataset;
  std::string method;
  std::string metric;
  std::size_t n = 0;
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation, 0 when n < 2
};

struct ExperimentReport {
  std::string kind;
  std::map<std::string, std::string> config;
  std::vector<ReportCell> cells;
};

void sort_cells(ExperimentReport& report);
std::vector<Aggregate> aggregate_report(const ExperimentReport& report);
// Mean over seeds for one (dataset, method, metric); throws if absent.
double report_mean(const ExperimentReport& report, const std::string& dataset,
                   const std::string& method, const std::string& metric);
// Throws if the report violates its structural invariants.
void validate_report(const ExperimentReport& report);

// Probe accuracy around fine-tuning; retention = after / before.
struct RetentionMetric {
  double before = 0.0;
  double after = 0.0;
  double retention() const { return before > 0.0 ? after / before : 0.0; }
};

// Process-level checkpoint reuse across experiments with equal config hashes.
class TrainRunCache {
 public:
  struct Entry {
    ScorerParams params;
    TrainHistory history;
  };

  std::shared_ptr<const Entry> get_or_compute(
      const std::string& key, const std::function<Entry()>& compute);

  std::size_t hits() const { return hits_; }
  std::size_t misses() const { return misses_; }

 private:
  std::mutex mu_;
  std::unordered_map<std::string, std::shared_ptr<const Entry>> map_;
  std::size_t hits_ = 0;
  std::size_t misses_ = 0;
};

// Content fingerprints used in cache keys.
std::string fingerprint_params(const ScorerParams& p);
std::string fingerprint_dataset(const QaDataset& ds);

// k = 0 groups for every sample (the vanilla fine-tuning configuration).
std::vector<NeighborGroup> empty_groups(const QaDataset& ds);

ExperimentReport run_retention(const SuiteConfig& suite,
                               const std::vector<MethodSpec>& methods,
                               TrainRunCache* cache = nullptr);

ExperimentReport run_cyclic_chain(const SuiteConfig& suite, std::size_t cycles,
                                  const std::vector<MethodSpec>& methods,
                                  TrainRunCache* cache = nullptr);

ExperimentReport run_ablation_grid(const SuiteConfig& suite,
                                   TrainRunCache* cache = nullptr);

ExperimentReport run_low_resource(const SuiteConfig& suite,
                                  const std::vector<double>& fractions,
                                  const std::vector<MethodSpec>& methods,
                                  TrainRunCache* cache = nullptr);

// Analytic batch_objective gradients vs central finite differences over
// random groups, both loss modes, and the full w0 grid.
struct GradCheckCase {
  LossMode mode = LossMode::MixtureLog;
  double w0 = 0.0;
  double max_rel_error = 0.0;
};

struct GradCheckResult {
  std::vector<GradCheckCase> cases;
  double max_rel_error = 0.0;
};

GradCheckResult run_gradcheck(const ModelDims& dims, std::uint64_t seed,
                              std::size_t n_groups, std::size_t n_coords,
                              double h);

// Random QA groups for gradient checking and oracle tests: option lists are
// shared inside each group, k ranges over [0, max_k].
std::vector<GroupExample> random_group_batch(std::size_t n_groups,
                                             std::size_t max_k,
                                             std::uint64_t seed);

// Deterministic CSV of the cells (sorted, shortest-roundtrip floats).
std::string report_csv(const ExperimentReport& report);

struct EmitPaths {
  std::string json_path;
  std::string csv_path;
};

// Writes <kind>_<utc-stamp>.json and .csv under out_dir.
EmitPaths emit_report(const ExperimentReport& report,
                      const std::string& out_dir);
ExperimentReport load_report_json(const std::string& path);

std::string format_double(double v);  // shortest roundtrip

}  // namespace cet
