#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "refeed/index.hpp"
#include "refeed/scorer.hpp"
#include "refeed/vecmath.hpp"

namespace refeed {

// Hyperparameters of the distillation loop and the surrounding
// retrieve -> rerank -> distill -> retrieve pipeline.
struct FeedbackConfig {
  std::size_t k = 100;      // candidates retrieved and re-ranked
  std::size_t n = 1000;     // gradient steps
  double alpha = 1e-3;      // step size
  double t_ce = 2.0;        // target (re-ranker) softmax temperature
  double t_ret = 1.0;       // retriever softmax temperature
  bool normalize = true;    // min-max both score sets before softmax
  std::size_t rounds = 1;   // feedback rounds
  bool renormalize_each_step = true;  // refresh min/max every step; off
                                      // freezes the step-0 affine map
  bool record_losses = false;         // keep the per-step loss curve

  void validate() const;  // throws std::invalid_argument
};

struct DistillTimings {
  double first_retrieval_ms = 0;
  double rerank_ms = 0;
  double distill_ms = 0;
  double second_retrieval_ms = 0;  // only the final round carries this;
                                   // intermediate re-retrievals are the
                                   // next round's first_retrieval_ms
};

struct FeedbackTrace {
  std::size_t round = 1;
  double initial_loss = 0;
  double final_loss = 0;
  std::vector<double> per_step_losses;  // n+1 values when recorded
  Vector updated_query;
  DistillTimings stage_timings;
};

// Gradient descent of KL(target || retriever distribution) on the query
// vector. The target is softmax(minmax(reranker_scores)/t_ce), computed
// once; each step rescoring runs against the candidates' stored
// vectors. State is float64 throughout and cast to float32 at the end,
// so n = 0 returns the query bit-identically. Fills updated_query, the
// losses and stage_timings.distill_ms of the returned trace. Throws on
// non-finite loss or gradient, naming the step.
FeedbackTrace distill(std::span<const float> query, const CandidateSet& candidates,
                      const ScoreVector& reranker_scores, const FeedbackConfig& cfg,
                      const DenseIndex& index);

struct FeedbackResult {
  CandidateSet baseline_run;  // round-1 retrieval
  CandidateSet feedback_run;  // retrieval with the final updated query
  CandidateSet merged_run;    // re-ranker-scored head + unseen feedback tail
  std::vector<FeedbackTrace> traces;  // one per round
  Vector final_query;
};

// Full pipeline for one query. merged_run holds every candidate the
// re-ranker scored in any round (deduplicated, last round's score wins)
// by score descending, then feedback_run docs the re-ranker never saw,
// in retriever order with synthetic strictly-decreasing scores; the
// list is capped at k entries.
FeedbackResult run_feedback(const std::string& query_id, std::span<const float> query,
                            const DenseIndex& index, const RerankerScorer& scorer,
                            const FeedbackConfig& cfg);

struct BatchOptions {
  std::filesystem::path out_dir;
  int threads = 0;  // <= 0: hardware concurrency
  bool fail_fast = false;
  std::optional<std::string> run_tag;  // override the per-file tags
};

struct StageStats {
  double mean_ms = 0, p50_ms = 0, p95_ms = 0;
};

struct QueryError {
  std::string query_id;
  std::string message;
};

struct BatchSummary {
  std::size_t n_queries = 0;  // completed
  std::vector<QueryError> errors;
  std::vector<std::pair<std::string, StageStats>> stage_stats;
};

// Runs the pipeline over every query (parallel across queries, math
// unchanged by thread count) and writes baseline.run, feedback.run,
// merged.run, timings.csv, traces.csv and queries_updated.jsonl into
// out_dir. Output order is query_id ascending regardless of schedule.
// Duplicate query ids throw; per-query failures are collected in the
// summary (or rethrown under fail_fast) and excluded from outputs.
BatchSummary batch_feedback(const std::vector<std::pair<std::string, Vector>>& queries,
                            const DenseIndex& index, const RerankerScorer& scorer,
                            const FeedbackConfig& cfg, const BatchOptions& opts);

// TREC run lines `query_id Q0 doc_id rank score tag`, ranks from 1,
// scores with 6 decimals, queries ordered ascending.
std::string trec_run_text(std::vector<CandidateSet> runs, const std::string& tag);

// `stage,mean_ms,p50_ms,p95_ms` rows in pipeline order plus a total
// row; header only when there are no timed queries.
std::string timing_csv(const std::vector<std::pair<std::string, StageStats>>& stats);

}  // namespace refeed
