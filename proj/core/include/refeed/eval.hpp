#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "refeed/qrels.hpp"

namespace refeed {

struct RunEntry {
  std::string doc_id;
  double score;
};

// query id -> ranked docs (rank = position + 1).
using Run = std::map<std::string, std::vector<RunEntry>>;

// TREC run lines `query_id Q0 doc_id rank score tag`. Ranks must count
// 1, 2, ... per query in file order, and scores must be non-increasing
// with rank; violations are errors naming the line.
Run load_trec_run(const std::filesystem::path& path);

// Metrics take the ranked list and the query's judgments, and return
// values in [0, 1]. All require at least one relevant (grade > 0) doc
// in the judgments and throw otherwise; evaluate() filters such
// queries out first.
double recall_at_k(std::span<const RunEntry> ranked, const std::map<std::string, int>& grades,
                   std::size_t k);
// gain 2^grade - 1, discount 1/log2(rank + 1), ideal from the grades
double ndcg_at_k(std::span<const RunEntry> ranked, const std::map<std::string, int>& grades,
                 std::size_t k);
double mrr_at_k(std::span<const RunEntry> ranked, const std::map<std::string, int>& grades,
                std::size_t k);

struct TTestResult {
  double t = 0;
  double p = 1;
  bool zero_variance = false;  // constant nonzero difference: p pinned to 0
};

// Two-sided paired t-test with n-1 degrees of freedom. Identical
// samples give (t=0, p=1); zero-variance nonzero differences give
// t=+/-inf, p=0 with the flag set. Throws when fewer than two pairs.
TTestResult paired_t_test(std::span<const double> a, std::span<const double> b);

struct MetricSpec {
  enum class Kind { kRecall, kNdcg, kMrr } kind;
  std::size_t k;

  std::string name() const;
  static MetricSpec parse(const std::string& text);  // "recall@100", "ndcg@10", "mrr@100"
};

struct Significance {
  std::string metric;
  double t = 0;
  double p = 1;
  bool zero_variance = false;
};

struct EvalReport {
  std::size_t n_queries = 0;                       // evaluated queries
  std::vector<std::string> metrics;                // column order
  std::map<std::string, double> aggregates;        // metric -> mean
  std::map<std::string, std::map<std::string, double>> per_query;  // query -> metric -> value
  std::optional<Significance> significance;        // vs the compare run, first metric
  std::size_t run_queries_without_qrels = 0;
  std::size_t queries_without_relevant = 0;
};

// Evaluates the intersection of run and qrels queries that have at
// least one relevant doc; everything else is counted in the warning
// fields. With a compare run, the paired t-test runs on the first
// metric over queries evaluated in both runs.
EvalReport evaluate(const Run& run, const QrelSet& qrels, const std::vector<MetricSpec>& metrics,
                    const Run* compare = nullptr);

}  // namespace refeed
