// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "cgmi/analysis.hpp"
#include "cgmi/orchestrator.hpp"
#include "cgmi/scale.hpp"

using namespace cgmi;

namespace {

const std::filesystem::path kData{CGMI_DATA_DIR};

class NullSubject final : public scale::PersonaSubject {
public:
    void receive_trait(const scale::TraitDelivery&) override {}
    std::string answer_probe(const std::string&) override { return {}; }
    void restore_persona(const std::string&) override {}
};

void BM_LoadBigFive(benchmark::State& state) {
    std::ifstream in(kData / "scales" / "bigfive.json");
    const auto doc = nlohmann::json::parse(in);
    for (auto _ : state) benchmark::DoNotOptimize(scale::load_scale(doc));
}
BENCHMARK(BM_LoadBigFive);

void BM_AssignDfs(benchmark::State& state) {
    const auto tree = scale::load_scale_file(kData / "scales" / "bigfive.json");
    NullSubject subject;
    for (auto _ : state) benchmark::DoNotOptimize(scale::assign_dfs(tree, subject));
}
BENCHMARK(BM_AssignDfs);

void BM_FiasReport(benchmark::State& state) {
    std::mt19937_64 rng(1);
    std::uniform_int_distribution<std::size_t> pick(0, analysis::kCodeCount - 1);
    analysis::CodedSequence seq;
    for (std::int64_t i = 0; i < state.range(0); ++i) {
        seq.codes.push_back({static_cast<std::size_t>(i), analysis::kAllCodes[pick(rng)]});
    }
    for (auto _ : state) benchmark::DoNotOptimize(analysis::compute_report(seq));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_FiasReport)->Arg(300)->Arg(3000);

void BM_ScriptedLesson(benchmark::State& state) {
    const auto config = kData / "scenarios" / "demo" / "config.json";
    for (auto _ : state) {
        auto scenario = orchestrator::load_scenario(config);
        benchmark::DoNotOptimize(orchestrator::run_lesson(scenario));
    }
}
BENCHMARK(BM_ScriptedLesson)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
