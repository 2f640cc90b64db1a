// Microbenchmarks for the stages that dominate query latency:
// exhaustive search and the distillation loop.

#include <benchmark/benchmark.h>

#include <vector>

#include "refeed/feedback.hpp"
#include "refeed/index.hpp"
#include "refeed/rng.hpp"
#include "refeed/scorer.hpp"
#include "refeed/synth.hpp"

namespace {

using namespace refeed;

SynthResult dataset(std::size_t n_passages) {
  SynthSpec spec;
  spec.seed = 7;
  spec.n_passages = n_passages;
  spec.n_queries = 16;
  spec.clusters = n_passages / 200;  // constant per-cluster density at any scale
  return generate(spec);
}

void BM_search(benchmark::State& state) {
  const SynthResult data = dataset(static_cast<std::size_t>(state.range(0)));
  const DenseIndex index = DenseIndex::build(data.passages);
  std::size_t qi = 0;
  for (auto _ : state) {
    const auto& q = data.queries[qi++ % data.queries.size()].second;
    benchmark::DoNotOptimize(search(index, q, 100));
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) *
                          static_cast<std::int64_t>(index.size()));
}
BENCHMARK(BM_search)->Arg(10000)->Arg(50000);

void BM_distill(benchmark::State& state) {
  const SynthResult data = dataset(10000);
  const DenseIndex index = DenseIndex::build(data.passages);
  const auto scorer = make_oracle_scorer(data.qrels, 10.0, index);

  FeedbackConfig cfg;
  cfg.n = static_cast<std::size_t>(state.range(0));
  const auto& [qid, q] = data.queries.front();
  const CandidateSet cand = search(index, q, cfg.k, qid);
  std::vector<std::string> ids;
  ScoreVector retr;
  for (const auto& e : cand.entries) {
    ids.push_back(e.doc_id);
    retr.push_back(e.score);
  }
  const ScoreVector rr = scorer->score(qid, ids, retr);
  for (auto _ : state) {
    benchmark::DoNotOptimize(distill(q, cand, rr, cfg, index));
  }
}
BENCHMARK(BM_distill)->Arg(100)->Arg(1000);

void BM_feedback_round_trip(benchmark::State& state) {
  const SynthResult data = dataset(10000);
  const DenseIndex index = DenseIndex::build(data.passages);
  const auto scorer = make_oracle_scorer(data.qrels, 10.0, index);
  const FeedbackConfig cfg;
  std::size_t qi = 0;
  for (auto _ : state) {
    const auto& [qid, q] = data.queries[qi++ % data.queries.size()];
    benchmark::DoNotOptimize(run_feedback(qid, q, index, *scorer, cfg));
  }
}
BENCHMARK(BM_feedback_round_trip);

}  // namespace

BENCHMARK_MAIN();
