#include <benchmark/benchmark.h>

#include "ccg/conformal.hpp"
#include "ccg/metrics.hpp"

using namespace ccg;

static void BM_GumbelSelect(benchmark::State& state) {
  const auto v = static_cast<std::size_t>(state.range(0));
  TokenDistribution dist{std::vector<double>(v, 1.0 / static_cast<double>(v))};
  Rng rng = make_rng(1);
  for (auto _ : state) benchmark::DoNotOptimize(gumbel_max_select(dist, sample_gumbel_vector(rng, v)));
}
BENCHMARK(BM_GumbelSelect)->Arg(2)->Arg(54);

static void BM_DecodeAction(benchmark::State& state) {
  const SlotPolicy policy;
  const auto ctx = PolicyContext::for_action({});
  Rng rng = make_rng(2);
  for (auto _ : state) benchmark::DoNotOptimize(decode_with_trace(policy, ctx, nullptr, rng));
}
BENCHMARK(BM_DecodeAction);

static void BM_Environment(benchmark::State& state) {
  const auto q = fidelity_from_int(static_cast<int>(state.range(0)));
  Rng rng = make_rng(3);
  const auto noise = sample_exogenous_prior(rng);
  const ActionConfig a{Scheduler::PF, 10, 10.0, 10.0};
  for (auto _ : state) benchmark::DoNotOptimize(run_environment(a, noise, q));
}
BENCHMARK(BM_Environment)->DenseRange(1, 4)->Unit(benchmark::kMillisecond);

static void BM_PosteriorPredict(benchmark::State& state) {
  const PosteriorModel model(kFeatureDim, kTargetDim, 4);
  Rng rng = make_rng(4);
  const auto t = generate_training_triplets(1, rng).front();
  const auto f = summarize_pair(t.action, t.kpis);
  for (auto _ : state) benchmark::DoNotOptimize(model.predict(f));
}
BENCHMARK(BM_PosteriorPredict);

static void BM_RougeL(benchmark::State& state) {
  std::vector<std::size_t> a, b;
  for (std::size_t i = 0; i < 20; ++i) {
    a.push_back(i % 7);
    b.push_back((i * 3) % 7);
  }
  for (auto _ : state) benchmark::DoNotOptimize(rouge_l(a, b));
}
BENCHMARK(BM_RougeL);

static void BM_CandidateSet(benchmark::State& state) {
  std::vector<ScoredReport> c;
  Rng rng = make_rng(5);
  for (std::size_t k = 0; k < kDefaultKMax; ++k) {
    TokenSequence s;
    for (int i = 0; i < 12; ++i) s.indices.push_back(rng() % 54);
    c.push_back({s, -uniform_open01(rng)});
  }
  LambdaConfig l;
  l.similarity_max = 0.7;
  for (auto _ : state) {
    FixedCandidateStream stream(c);
    benchmark::DoNotOptimize(build_candidate_set(stream, l, kDefaultKMax));
  }
}
BENCHMARK(BM_CandidateSet);

static void BM_BinomialPValue(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(binomial_pvalue(40, 150, 0.3));
}
BENCHMARK(BM_BinomialPValue);

static void BM_CrossCorrelation(benchmark::State& state) {
  std::vector<double> a(50), b(50);
  Rng rng = make_rng(6);
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = uniform_open01(rng);
    b[i] = uniform_open01(rng);
  }
  for (auto _ : state) benchmark::DoNotOptimize(crosscorr_peak(a, b, 1));
}
BENCHMARK(BM_CrossCorrelation);

BENCHMARK_MAIN();
