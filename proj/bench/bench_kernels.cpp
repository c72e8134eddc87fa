// Serial reference vs OpenMP kernels. Arg 0 = serial, 1 = parallel.

#include <benchmark/benchmark.h>

#include "cdft/consistency.hpp"
#include "cdft/ft_orchestrator.hpp"
#include "cdft/proxy_miner.hpp"
#include "cdft/rules_dsl.hpp"

using namespace cdft;

namespace {

const RulesDb& rules() {
  static const RulesDb db = parse_rules(read_file(std::string(CDFT_DATA_DIR) + "/tudat.rules"));
  return db;
}

const Dataset& dataset() {
  static const Dataset ds = [] {
    auto spec = default_scenario().data;
    for (auto& [c, n] : spec.ftd_counts) n *= 4;
    for (auto& [c, n] : spec.ed_counts) n = 100;
    return generate_dataset(rules(), spec);
  }();
  return ds;
}

Execution exec_of(const benchmark::State& state) {
  return state.range(0) == 0 ? Execution::serial : Execution::parallel;
}

void BM_SatisfactionMatrix(benchmark::State& state) {
  std::vector<LabeledSegmentRecord> records;
  for (const auto& s : dataset().ftd) records.push_back({s.segment_id, s.main_label, s.aux_label, *s.grounding});
  const auto candidates = candidate_pool(rules());
  for (auto _ : state) {
    benchmark::DoNotOptimize(satisfaction_matrix(records, candidates, exec_of(state)));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(records.size()));
}

void BM_EvaluateBatch(benchmark::State& state) {
  const ProxyPair proxies{proxy_map_from_rules(rules(), TaskKind::main),
                          proxy_map_from_rules(rules(), TaskKind::aux)};
  std::vector<SegmentEvaluation> batch;
  std::uint64_t k = 0;
  for (const auto& b : dataset().ed) {
    for (const auto& s : b.segments) {
      // every fourth prediction is off by one class
      const ClassId m = ++k % 4 == 0 ? s.main_label % 6 + 1 : s.main_label;
      batch.push_back({s.segment_id, m, s.aux_label, s.grounding});
    }
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(evaluate_batch(batch, rules(), proxies, false, exec_of(state)));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch.size()));
}

void BM_RunSweep(benchmark::State& state) {
  std::vector<std::uint64_t> seeds;
  for (std::uint64_t s = 1; s <= 8; ++s) seeds.push_back(s);
  const auto scenario = default_scenario();
  for (auto _ : state) {
    benchmark::DoNotOptimize(run_sweep(rules(), scenario, seeds, exec_of(state)));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(seeds.size()));
}

}  // namespace

BENCHMARK(BM_SatisfactionMatrix)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_EvaluateBatch)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_RunSweep)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
