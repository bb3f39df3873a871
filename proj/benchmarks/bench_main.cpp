// Microbenchmarks for the hot paths: full searches over scripted worlds,
// step selection, trend classification, and manifest sampling.

#include <random>

#include <benchmark/benchmark.h>
#include <spdlog/spdlog.h>

#include "mics/curriculum.hpp"
#include "mics/qc.hpp"
#include "mics/search.hpp"
#include "scripted_world.hpp"

using namespace mics;

static void BM_ScriptedWorldSearch(benchmark::State& state) {
    std::mt19937_64 rng(1);
    std::vector<scripted_world::World> worlds;
    for (int i = 0; i < 32; ++i) worlds.push_back(scripted_world::make_world(i, rng));
    std::size_t i = 0;
    for (auto _ : state) {
        auto r = scripted_world::engine_search(worlds[i++ % worlds.size()]);
        benchmark::DoNotOptimize(r);
    }
}
BENCHMARK(BM_ScriptedWorldSearch)->Unit(benchmark::kMillisecond);

static void BM_SelectStep(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    search::CompetitivenessLedger ledger(n);
    std::vector<int> counts(n, 0);
    std::vector<search::ScoredCandidate> cands;
    std::mt19937_64 rng(2);
    for (int v = 0; v < n; ++v) {
        ledger.record(v, Score(static_cast<int>(rng() % 6) + 1, 6));
        cands.push_back({v, {"t" + std::to_string(v), v, 1},
                         Score(static_cast<int>(rng() % 7), 6)});
    }
    for (auto _ : state) {
        auto r = search::select_step(cands, counts, ledger);
        benchmark::DoNotOptimize(r);
    }
}
BENCHMARK(BM_SelectStep)->Arg(3)->Arg(16);

static void BM_ClassifyTrend(benchmark::State& state) {
    std::vector<Score> history{Score(1, 6), Score(2, 6), Score(2, 6), Score(5, 6)};
    for (auto _ : state) {
        auto r = qc::classify_trend(history);
        benchmark::DoNotOptimize(r);
    }
}
BENCHMARK(BM_ClassifyTrend);

static void BM_BuildManifest(benchmark::State& state) {
    const std::int64_t size = state.range(0);
    curriculum::CorpusRegistry reg;
    std::vector<std::string> ids;
    ids.reserve(static_cast<std::size_t>(size));
    for (std::int64_t i = 0; i < size; ++i) ids.push_back("r-" + std::to_string(i));
    reg.register_corpus("corpus", std::move(ids));
    curriculum::StagePlan plan{1, {{"corpus", size}}, 7};
    for (auto _ : state) {
        auto m = curriculum::build_manifest(plan, reg);
        benchmark::DoNotOptimize(m);
    }
    state.SetItemsProcessed(state.iterations() * size);
}
BENCHMARK(BM_BuildManifest)->Arg(10000)->Arg(100000)->Unit(benchmark::kMillisecond);

int main(int argc, char** argv) {
    spdlog::set_level(spdlog::level::err);
    benchmark::Initialize(&argc, argv);
    benchmark::RunSpecifiedBenchmarks();
    return 0;
}
