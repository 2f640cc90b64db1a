#include "refeed/feedback.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <stdexcept>
#include <thread>
#include <unordered_map>
#include <unordered_set>

#include "refeed/io.hpp"

namespace refeed {

void FeedbackConfig::validate() const {
  const auto bad = [](const std::string& what) { throw std::invalid_argument("config: " + what); };
  if (k == 0) bad("k must be >= 1");
  if (rounds == 0) bad("rounds must be >= 1");
  if (!std::isfinite(alpha) || alpha <= 0) bad("alpha must be positive and finite");
  if (!std::isfinite(t_ce) || t_ce <= 0) bad("t_ce must be positive and finite");
  if (!std::isfinite(t_ret) || t_ret <= 0) bad("t_ret must be positive and finite");
}

namespace {

double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

FeedbackTrace distill(std::span<const float> query, const CandidateSet& candidates,
                      const ScoreVector& reranker_scores, const FeedbackConfig& cfg,
                      const DenseIndex& index) {
  cfg.validate();
  const auto t_start = std::chrono::steady_clock::now();
  const std::size_t k = candidates.entries.size();
  if (k == 0) throw std::invalid_argument("distill: empty candidate set");
  if (reranker_scores.size() != k) {
    throw std::invalid_argument("distill: " + std::to_string(reranker_scores.size()) +
                                " re-ranker scores for " + std::to_string(k) + " candidates");
  }

  // Target distribution, fixed for the whole descent.
  const ScoreDistribution target =
      cfg.normalize ? softmax(min_max_normalize(reranker_scores), cfg.t_ce)
                    : softmax(reranker_scores, cfg.t_ce);

  std::vector<std::span<const float>> rows(k);
  for (std::size_t j = 0; j < k; ++j) rows[j] = index.row(candidates.entries[j].row);

  const std::size_t dim = query.size();
  std::vector<double> Q(query.begin(), query.end());

  // sum t ln t, the constant part of KL(t || q); with ln q available
  // analytically as z - m - ln Z the loss never underflows through q.
  double target_entropy_term = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    if (target[j] > 0) target_entropy_term += target[j] * std::log(target[j]);
  }

  FeedbackTrace out;
  if (cfg.record_losses) out.per_step_losses.reserve(cfg.n + 1);

  ScoreVector s(k), z(k), q(k);
  std::vector<double> grad(dim);
  double frozen_lo = 0.0, frozen_range = 0.0;
  bool frozen_ready = false;

  const auto non_finite = [&](std::size_t step) {
    throw std::runtime_error("distill: non-finite loss or gradient at step " +
                             std::to_string(step));
  };

  // One evaluation: scores -> distribution -> loss (+ gradient step
  // unless this is the closing evaluation).
  const auto evaluate = [&](std::size_t step, bool update) -> double {
    for (std::size_t j = 0; j < k; ++j) {
      double acc = 0.0;
      const auto row = rows[j];
      for (std::size_t d = 0; d < dim; ++d) acc += Q[d] * static_cast<double>(row[d]);
      s[j] = acc;
    }

    bool flat = false;      // constant normalized scores: zero gradient
    double lo = 0, range = 1;
    std::size_t arg_lo = 0, arg_hi = 0;  // first occurrences
    if (cfg.normalize) {
      if (cfg.renormalize_each_step || !frozen_ready) {
        arg_lo = static_cast<std::size_t>(std::min_element(s.begin(), s.end()) - s.begin());
        arg_hi = static_cast<std::size_t>(std::max_element(s.begin(), s.end()) - s.begin());
        lo = s[arg_lo];
        range = s[arg_hi] - s[arg_lo];
        if (!frozen_ready) {
          frozen_lo = lo;
          frozen_range = range;
          frozen_ready = true;
        }
      } else {
        lo = frozen_lo;
        range = frozen_range;
      }
      if (range == 0.0) {
        flat = true;
        for (std::size_t j = 0; j < k; ++j) z[j] = 0.5 / cfg.t_ret;
      } else {
        for (std::size_t j = 0; j < k; ++j) z[j] = (s[j] - lo) / (range * cfg.t_ret);
      }
    } else {
      for (std::size_t j = 0; j < k; ++j) z[j] = s[j] / cfg.t_ret;
    }

    const double m = *std::max_element(z.begin(), z.end());
    double Z = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      q[j] = std::exp(z[j] - m);
      Z += q[j];
    }
    if (!std::isfinite(Z) || Z <= 0.0) non_finite(step);
    for (std::size_t j = 0; j < k; ++j) q[j] /= Z;

    double tz = 0.0;
    for (std::size_t j = 0; j < k; ++j) tz += target[j] * z[j];
    const double loss = target_entropy_term - tz + m + std::log(Z);
    if (!std::isfinite(loss)) non_finite(step);
    if (!update || flat) return loss;

    // dL/ds, then the query-space step.
    ScoreVector gs(k);
    for (std::size_t j = 0; j < k; ++j) gs[j] = q[j] - target[j];
    double scale;
    if (cfg.normalize) {
      if (cfg.renormalize_each_step) {
        // coupling through the running min and max
        double coupling = 0.0;
        for (std::size_t j = 0; j < k; ++j) coupling += gs[j] * (s[j] - lo) / range;
        gs[arg_lo] += coupling;
        gs[arg_hi] -= coupling;
      }
      scale = 1.0 / (cfg.t_ret * range);
    } else {
      scale = 1.0 / cfg.t_ret;
    }
    if (!std::isfinite(scale)) non_finite(step);

    std::fill(grad.begin(), grad.end(), 0.0);
    for (std::size_t j = 0; j < k; ++j) {
      const double w = gs[j] * scale;
      const auto row = rows[j];
      for (std::size_t d = 0; d < dim; ++d) grad[d] += w * static_cast<double>(row[d]);
    }
    for (std::size_t d = 0; d < dim; ++d) {
      Q[d] -= cfg.alpha * grad[d];
      if (!std::isfinite(Q[d])) non_finite(step);
    }
    return loss;
  };

  for (std::size_t step = 0; step < cfg.n; ++step) {
    const double loss = evaluate(step, true);
    if (step == 0) out.initial_loss = loss;
    if (cfg.record_losses) out.per_step_losses.push_back(loss);
  }
  out.final_loss = evaluate(cfg.n, false);
  if (cfg.n == 0) out.initial_loss = out.final_loss;
  if (cfg.record_losses) out.per_step_losses.push_back(out.final_loss);

  if (cfg.n == 0) {
    out.updated_query.assign(query.begin(), query.end());
  } else {
    out.updated_query.resize(dim);
    for (std::size_t d = 0; d < dim; ++d) out.updated_query[d] = static_cast<float>(Q[d]);
  }
  out.stage_timings.distill_ms = ms_since(t_start);
  return out;
}

FeedbackResult run_feedback(const std::string& query_id, std::span<const float> query,
                            const DenseIndex& index, const RerankerScorer& scorer,
                            const FeedbackConfig& cfg) {
  cfg.validate();
  FeedbackResult result;
  Vector current(query.begin(), query.end());

  // doc -> (last re-ranker score, row); ties in score break by id.
  std::map<std::string, std::pair<double, std::size_t>> scored;

  for (std::size_t round = 1; round <= cfg.rounds; ++round) {
    auto t0 = std::chrono::steady_clock::now();
    CandidateSet cand = search(index, current, cfg.k, query_id);
    const double retrieval_ms = ms_since(t0);
    if (round == 1) result.baseline_run = cand;

    std::vector<std::string> ids(cand.entries.size());
    ScoreVector retr(cand.entries.size());
    for (std::size_t i = 0; i < cand.entries.size(); ++i) {
      ids[i] = cand.entries[i].doc_id;
      retr[i] = cand.entries[i].score;
    }
    t0 = std::chrono::steady_clock::now();
    const ScoreVector rr = scorer.score(query_id, ids, retr);
    const double rerank_ms = ms_since(t0);
    if (rr.size() != ids.size()) {
      throw std::runtime_error("scorer returned " + std::to_string(rr.size()) + " scores for " +
                               std::to_string(ids.size()) + " candidates");
    }

    FeedbackTrace trace = distill(current, cand, rr, cfg, index);
    trace.round = round;
    trace.stage_timings.first_retrieval_ms = retrieval_ms;
    trace.stage_timings.rerank_ms = rerank_ms;

    for (std::size_t i = 0; i < ids.size(); ++i) {
      scored[ids[i]] = {rr[i], cand.entries[i].row};
    }

    current = trace.updated_query;
    result.traces.push_back(std::move(trace));
  }

  auto t0 = std::chrono::steady_clock::now();
  result.feedback_run = search(index, current, cfg.k, query_id);
  result.traces.back().stage_timings.second_retrieval_ms = ms_since(t0);
  result.final_query = std::move(current);

  // Merged list: re-ranker-scored head, then unseen feedback docs with
  // synthetic scores strictly below the head.
  result.merged_run.query_id = query_id;
  auto& merged = result.merged_run.entries;
  for (const auto& [doc, sr] : scored) merged.push_back({doc, sr.first, sr.second});
  std::sort(merged.begin(), merged.end(), [](const Candidate& x, const Candidate& y) {
    if (x.score != y.score) return x.score > y.score;
    return x.doc_id < y.doc_id;
  });
  double floor_score = merged.empty() ? 0.0 : merged.back().score;
  for (const auto& e : result.feedback_run.entries) {
    if (!scored.count(e.doc_id)) {
      floor_score -= 1.0;
      merged.push_back({e.doc_id, floor_score, e.row});
    }
  }
  if (merged.size() > cfg.k) merged.resize(cfg.k);
  return result;
}

std::string trec_run_text(std::vector<CandidateSet> runs, const std::string& tag) {
  std::stable_sort(runs.begin(), runs.end(),
                   [](const CandidateSet& a, const CandidateSet& b) { return a.query_id < b.query_id; });
  std::string out;
  char buf[64];
  for (const auto& run : runs) {
    for (std::size_t i = 0; i < run.entries.size(); ++i) {
      const auto& e = run.entries[i];
      std::snprintf(buf, sizeof buf, "%.6f", e.score + 0.0);  // normalize -0
      out += run.query_id;
      out += " Q0 ";
      out += e.doc_id;
      out += ' ';
      out += std::to_string(i + 1);
      out += ' ';
      out += buf;
      out += ' ';
      out += tag;
      out += '\n';
    }
  }
  return out;
}

namespace {

StageStats stats_of(std::vector<double> values) {
  StageStats st;
  if (values.empty()) return st;
  std::sort(values.begin(), values.end());
  double sum = 0;
  for (double v : values) sum += v;
  st.mean_ms = sum / static_cast<double>(values.size());
  const auto pct = [&](double p) {
    const std::size_t rank =
        static_cast<std::size_t>(std::ceil(p * static_cast<double>(values.size())));
    return values[std::max<std::size_t>(rank, 1) - 1];
  };
  st.p50_ms = pct(0.50);
  st.p95_ms = pct(0.95);
  return st;
}

}  // namespace

std::string timing_csv(const std::vector<std::pair<std::string, StageStats>>& stats) {
  std::string out = "stage,mean_ms,p50_ms,p95_ms\n";
  char buf[128];
  for (const auto& [stage, st] : stats) {
    std::snprintf(buf, sizeof buf, "%s,%.3f,%.3f,%.3f\n", stage.c_str(), st.mean_ms, st.p50_ms,
                  st.p95_ms);
    out += buf;
  }
  return out;
}

BatchSummary batch_feedback(const std::vector<std::pair<std::string, Vector>>& queries,
                            const DenseIndex& index, const RerankerScorer& scorer,
                            const FeedbackConfig& cfg, const BatchOptions& opts) {
  cfg.validate();
  {
    std::unordered_set<std::string> seen;
    for (const auto& [qid, _] : queries) {
      if (!seen.insert(qid).second) {
        throw std::invalid_argument("batch: duplicate query id '" + qid + "'");
      }
    }
  }

  std::vector<std::size_t> order(queries.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return queries[a].first < queries[b].first;
  });

  std::vector<std::optional<FeedbackResult>> results(queries.size());
  std::vector<std::optional<QueryError>> errors(queries.size());

  unsigned n_threads = opts.threads > 0 ? static_cast<unsigned>(opts.threads)
                                        : std::max(1u, std::thread::hardware_concurrency());
  if (queries.size() < n_threads) n_threads = std::max<unsigned>(1, static_cast<unsigned>(queries.size()));

  std::atomic<std::size_t> next{0};
  std::atomic<bool> abort{false};
  const auto worker = [&] {
    for (;;) {
      const std::size_t slot = next.fetch_add(1);
      if (slot >= order.size() || abort.load()) return;
      const std::size_t i = order[slot];
      try {
        results[i] = run_feedback(queries[i].first, queries[i].second, index, scorer, cfg);
      } catch (const std::exception& e) {
        errors[i] = QueryError{queries[i].first, e.what()};
        if (opts.fail_fast) abort.store(true);
      }
    }
  };
  {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t + 1 < n_threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
  }

  BatchSummary summary;
  std::vector<CandidateSet> baseline, feedback, merged;
  std::vector<std::pair<std::string, Vector>> updated;
  std::vector<double> t_first, t_rerank, t_distill, t_second, t_total;
  std::string traces_csv =
      "query_id,round,initial_loss,final_loss,first_retrieval_ms,rerank_ms,distill_ms,"
      "second_retrieval_ms\n";

  for (std::size_t slot = 0; slot < order.size(); ++slot) {
    const std::size_t i = order[slot];
    if (errors[i]) {
      summary.errors.push_back(*errors[i]);
      if (opts.fail_fast) throw std::runtime_error(errors[i]->query_id + ": " + errors[i]->message);
      continue;
    }
    if (!results[i]) continue;  // skipped after fail_fast abort
    FeedbackResult& r = *results[i];
    ++summary.n_queries;

    DistillTimings sum;
    char buf[256];
    for (const auto& tr : r.traces) {
      sum.first_retrieval_ms += tr.stage_timings.first_retrieval_ms;
      sum.rerank_ms += tr.stage_timings.rerank_ms;
      sum.distill_ms += tr.stage_timings.distill_ms;
      sum.second_retrieval_ms += tr.stage_timings.second_retrieval_ms;
      std::snprintf(buf, sizeof buf, "%s,%zu,%.12g,%.12g,%.3f,%.3f,%.3f,%.3f\n",
                    queries[i].first.c_str(), tr.round, tr.initial_loss, tr.final_loss,
                    tr.stage_timings.first_retrieval_ms, tr.stage_timings.rerank_ms,
                    tr.stage_timings.distill_ms, tr.stage_timings.second_retrieval_ms);
      traces_csv += buf;
    }
    t_first.push_back(sum.first_retrieval_ms);
    t_rerank.push_back(sum.rerank_ms);
    t_distill.push_back(sum.distill_ms);
    t_second.push_back(sum.second_retrieval_ms);
    t_total.push_back(sum.first_retrieval_ms + sum.rerank_ms + sum.distill_ms +
                      sum.second_retrieval_ms);

    updated.emplace_back(queries[i].first, std::move(r.final_query));
    baseline.push_back(std::move(r.baseline_run));
    feedback.push_back(std::move(r.feedback_run));
    merged.push_back(std::move(r.merged_run));
  }

  if (!t_first.empty()) {
    summary.stage_stats = {{"first_retrieval", stats_of(t_first)},
                           {"rerank", stats_of(t_rerank)},
                           {"distill", stats_of(t_distill)},
                           {"second_retrieval", stats_of(t_second)},
                           {"total", stats_of(t_total)}};
  }

  std::filesystem::create_directories(opts.out_dir);
  const auto tag = [&](const char* dflt) { return opts.run_tag ? *opts.run_tag : dflt; };
  write_file_atomic(opts.out_dir / "baseline.run", trec_run_text(std::move(baseline), tag("baseline")));
  write_file_atomic(opts.out_dir / "feedback.run", trec_run_text(std::move(feedback), tag("feedback")));
  write_file_atomic(opts.out_dir / "merged.run", trec_run_text(std::move(merged), tag("merged")));
  write_file_atomic(opts.out_dir / "timings.csv", timing_csv(summary.stage_stats));
  write_file_atomic(opts.out_dir / "traces.csv", traces_csv);
  write_file_atomic(opts.out_dir / "queries_updated.jsonl", embeddings_jsonl(updated));
  return summary;
}

}  // namespace refeed
