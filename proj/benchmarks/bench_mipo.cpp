#include <benchmark/benchmark.h>

#include "mipo/corpus.hpp"
#include "mipo/objectives.hpp"
#include "mipo/rng.hpp"
#include "mipo/trainer.hpp"

using namespace mipo;

namespace {

lm::ModelConfig bench_config() {
    lm::ModelConfig cfg;
    cfg.seed = 99;
    return cfg;
}

std::vector<int> bench_tokens(int n) {
    Rng rng(5);
    std::vector<int> tokens;
    tokens.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) tokens.push_back(rng.range_int(4, 29));
    return tokens;
}

}  // namespace

static void BM_forward(benchmark::State& state) {
    lm::TinyLm model(bench_config(), lm::TinyLm::HeadInit::Random);
    const auto tokens = bench_tokens(static_cast<int>(state.range(0)));
    for (auto _ : state) {
        diff::Graph g;
        benchmark::DoNotOptimize(model.forward(g, tokens));
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_forward)->Arg(16)->Arg(32)->Arg(60);

static void BM_forward_backward(benchmark::State& state) {
    lm::TinyLm model(bench_config(), lm::TinyLm::HeadInit::Random);
    const auto prompt = bench_tokens(8);
    const auto response = bench_tokens(static_cast<int>(state.range(0)));
    for (auto _ : state) {
        model.zero_grads();
        diff::Graph g;
        auto loss = model.response_loglik_sum(g, prompt, response);
        g.backward(loss);
        benchmark::DoNotOptimize(loss.item());
    }
    state.SetItemsProcessed(state.iterations() * (8 + state.range(0)));
}
BENCHMARK(BM_forward_backward)->Arg(8)->Arg(14)->Arg(32);

static void BM_mipo_loss_scalar(benchmark::State& state) {
    Rng rng(4);
    double acc = 0.0;
    for (auto _ : state) {
        acc += obj::mipo_loss(rng.uniform(-3, 3), rng.uniform(-10, 10), 10.0).loss;
    }
    benchmark::DoNotOptimize(acc);
}
BENCHMARK(BM_mipo_loss_scalar);

static void BM_generate_corpus(benchmark::State& state) {
    data::CorpusSpec spec;
    spec.n_pairs = static_cast<int>(state.range(0));
    spec.seed = 3;
    for (auto _ : state) {
        benchmark::DoNotOptimize(data::generate_corpus(spec));
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_generate_corpus)->Arg(100)->Arg(2000);

static void BM_align_step(benchmark::State& state) {
    data::CorpusSpec spec;
    spec.n_pairs = 64;
    spec.seed = 11;
    auto pairs = data::generate_corpus(spec);
    lm::TinyLm reference(bench_config());
    train::SftConfig sft;
    sft.steps = 10;
    sft.seed = 11;
    train::train_sft(reference, pairs, sft);
    auto stats = train::precompute_pair_stats(reference, pairs);

    train::AlignConfig cfg;
    cfg.method = state.range(0) == 0 ? train::Method::Mipo : train::Method::Dpo;
    cfg.beta = 10.0;
    cfg.steps = 1;
    cfg.batch_size = 16;
    cfg.seed = 11;
    for (auto _ : state) {
        lm::TinyLm policy = reference.clone();
        auto log = train::train_align(policy, pairs, stats, {}, {}, cfg);
        benchmark::DoNotOptimize(log.steps.back().mean_loss);
    }
    state.SetLabel(state.range(0) == 0 ? "mipo" : "dpo");
}
BENCHMARK(BM_align_step)->Arg(0)->Arg(1);

BENCHMARK_MAIN();
