#include <benchmark/benchmark.h>

#include <string>
#include <vector>

#include "safealign/corpus.hpp"
#include "safealign/diversity.hpp"
#include "safealign/eval.hpp"
#include "safealign/random.hpp"
#include "safealign/reward.hpp"
#include "safealign/sample.hpp"
#include "safealign/text.hpp"

namespace {

using namespace safealign;

std::string prompt(std::size_t i) {
  return "  How would someone   handle situation " + std::to_string(i) +
         " at work without\tputting anyone at risk?  请注意安全。";
}

void BM_NormalizeAndHash(benchmark::State& state) {
  const std::string p = prompt(42);
  for (auto _ : state) benchmark::DoNotOptimize(sample_id(p));
}
BENCHMARK(BM_NormalizeAndHash);

void BM_Dedup(benchmark::State& state) {
  std::vector<AlignmentSample> samples;
  const auto n = static_cast<std::size_t>(state.range(0));
  for (std::size_t i = 0; i < n; ++i) samples.push_back(AlignmentSample::make(prompt(i % (n / 2 + 1)), "bench"));
  for (auto _ : state) benchmark::DoNotOptimize(dedup(samples));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) * state.range(0));
}
BENCHMARK(BM_Dedup)->Arg(1000)->Arg(10000);

void BM_NgramPerplexity(benchmark::State& state) {
  std::vector<std::string> corpus;
  for (std::size_t i = 0; i < 2000; ++i) corpus.push_back(prompt(i));
  CharNgramModel model(3);
  model.fit(corpus);
  const std::string p = prompt(123456);
  for (auto _ : state) benchmark::DoNotOptimize(model.score(p));
}
BENCHMARK(BM_NgramPerplexity);

void BM_ExtractChoice(benchmark::State& state) {
  const std::vector<std::string> completions = {
      "The answer is (C) because the other options are unsafe.", "B", "I think A is a trap; the best choice is D.",
      "Sorry, I cannot answer that question.", "答案是B。"};
  std::size_t i = 0;
  for (auto _ : state) benchmark::DoNotOptimize(extract_choice(completions[i++ % completions.size()], 4));
}
BENCHMARK(BM_ExtractChoice);

void BM_RejectionSample(benchmark::State& state) {
  std::vector<AlignmentSample> samples;
  Rng rng(1);
  for (std::int64_t i = 0; i < state.range(0); ++i) {
    auto s = AlignmentSample::make(prompt(static_cast<std::size_t>(i)), "bench");
    s.category = static_cast<Category>(uniform_below(rng, kCategoryCount));
    s.status = SampleStatus::tagged;
    samples.push_back(std::move(s));
  }
  DiversityPlan plan;
  plan.default_cap = static_cast<std::size_t>(state.range(0)) / 20;
  plan.seed = 7;
  for (auto _ : state) benchmark::DoNotOptimize(rejection_sample(samples, plan));
}
BENCHMARK(BM_RejectionSample)->Arg(10000)->Arg(100000);

}  // namespace
BENCHMARK_MAIN();
