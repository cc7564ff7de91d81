#include <benchmark/benchmark.h>

#include "cet/dataset.hpp"
#include "cet/harness.hpp"
#include "cet/model.hpp"
#include "cet/neighbors.hpp"
#include "cet/objective.hpp"
#include "cet/similarity.hpp"
#include "cet/trainer.hpp"

namespace {

cet::SynthCorpus bench_corpus() {
  cet::SynthConfig cfg;
  cfg.n_concepts = 30;
  cfg.questions_per_concept = 20;
  cfg.n_tasks = 1;
  cfg.task_concepts = 30;
  cfg.seed = 99;
  return cet::generate_synthetic(cfg);
}

void BM_Encode(benchmark::State& state) {
  cet::ScorerParams params = cet::init_params(4096, 32, 32, 1);
  const std::string text = "w0012 w0488 w1101 w0007 w1999 w0303 w0777 w0150";
  for (auto _ : state) {
    benchmark::DoNotOptimize(cet::encode(params, text));
  }
}
BENCHMARK(BM_Encode);

void BM_BuildGroupsGold(benchmark::State& state) {
  cet::SynthCorpus corpus = bench_corpus();
  const cet::QaDataset& ds = corpus.tasks[0].train;
  cet::Selector sel;
  for (auto _ : state) {
    benchmark::DoNotOptimize(cet::build_groups(
        ds, cet::NeighborMetric::gold(cet::SimilarityBackend::exact()), 5, 1.0,
        sel));
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) *
                          static_cast<std::int64_t>(ds.samples.size()));
}
BENCHMARK(BM_BuildGroupsGold);

void BM_BatchObjective(benchmark::State& state) {
  cet::ScorerParams params = cet::init_params(4096, 32, 32, 1);
  std::vector<cet::GroupExample> batch =
      cet::random_group_batch(static_cast<std::size_t>(state.range(0)), 5, 3);
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        cet::batch_objective(batch, params, 0.7, cet::LossMode::MixtureLog));
  }
}
BENCHMARK(BM_BatchObjective)->Arg(8)->Arg(32);

void BM_OptimizerStep(benchmark::State& state) {
  cet::ScorerParams params = cet::init_params(4096, 32, 32, 1);
  cet::OptimizerState opt = cet::OptimizerState::for_params(params);
  std::vector<cet::GroupExample> batch = cet::random_group_batch(8, 5, 3);
  cet::BatchResult br =
      cet::batch_objective(batch, params, 0.7, cet::LossMode::MixtureLog);
  for (auto _ : state) {
    cet::optimizer_step(params, br.grads, opt, 1e-3, 1e-2);
    benchmark::DoNotOptimize(params.out_b);
  }
}
BENCHMARK(BM_OptimizerStep);

}  // namespace

BENCHMARK_MAIN();
