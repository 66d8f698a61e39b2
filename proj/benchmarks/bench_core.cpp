#include <benchmark/benchmark.h>

#include <random>

#include "cfsteer/metrics.hpp"
#include "cfsteer/steering.hpp"
#include "cfsteer/tokenizer.hpp"
#include "cfsteer/toy.hpp"

using namespace cfsteer;

namespace {

const Model& toy_model() {
  static const Model m(toy::conflict_model());
  return m;
}

TokenSequence prompt_of_length(std::size_t n) {
  TokenSequence t = tokenizer::encode(std::string(n - 1, 'a'));
  for (std::size_t i = 1; i < t.size(); ++i) t[i] = 'a' + i % 26;
  return t;
}

}  // namespace

static void BM_Forward(benchmark::State& state) {
  const auto tokens = prompt_of_length(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(toy_model().forward(tokens));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Forward)->Arg(32)->Arg(128)->Arg(256);

static void BM_LastTokenActivations(benchmark::State& state) {
  const auto tokens = prompt_of_length(200);
  for (auto _ : state) benchmark::DoNotOptimize(toy_model().last_token_activations(tokens));
}
BENCHMARK(BM_LastTokenActivations);

static void BM_Generate(benchmark::State& state) {
  const auto tokens = prompt_of_length(128);
  GenerateOptions opts;
  opts.use_cache = state.range(0) != 0;
  const Injection inj{1, std::vector<float>(64, 0.01f), 2.0f, tokens.size()};
  for (auto _ : state) benchmark::DoNotOptimize(toy_model().generate(tokens, 16, inj, opts));
  state.SetLabel(opts.use_cache ? "cached" : "uncached");
}
BENCHMARK(BM_Generate)->Arg(1)->Arg(0)->Unit(benchmark::kMillisecond);

static void BM_Llr(benchmark::State& state) {
  std::mt19937_64 rng(1);
  std::vector<TokenId> t(static_cast<std::size_t>(state.range(0)));
  for (auto& x : t) x = static_cast<TokenId>(rng() % 4);
  for (auto _ : state) benchmark::DoNotOptimize(llr(t));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Llr)->Arg(32)->Arg(1024);

static void BM_MeanVector(benchmark::State& state) {
  std::mt19937_64 rng(2);
  std::normal_distribution<float> n;
  std::vector<ContrastPair> pairs(static_cast<std::size_t>(state.range(0)));
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    pairs[i].positive.resize(4096);
    pairs[i].negative.resize(4096);
    for (auto& x : pairs[i].positive) x = n(rng);
    for (auto& x : pairs[i].negative) x = n(rng);
    pairs[i].example_id = std::to_string(i);
  }
  for (auto _ : state) benchmark::DoNotOptimize(mean_vector(pairs, 0, Scheme::kCombined));
}
BENCHMARK(BM_MeanVector)->Arg(100)->Arg(1000);
BENCHMARK_MAIN();
