#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <utility>

#include "refeed/qrels.hpp"
#include "refeed/vecmath.hpp"

namespace refeed {

// Stand-in for the cross-encoder: scores a candidate list for a query.
// `retriever_scores` aligns with `doc_ids` (the retriever scores of the
// same candidates) so implementations can normalize over or fall back
// to them. Implementations must be deterministic and return one score
// per doc id, in order.
class RerankerScorer {
public:
  virtual ~RerankerScorer() = default;
  virtual ScoreVector score(const std::string& query_id, std::span<const std::string> doc_ids,
                            std::span<const double> retriever_scores) const = 0;
};

// (query_id, doc_id) -> score, loaded from TSV lines
// `query_id<TAB>doc_id<TAB>score`. Duplicate pairs are a load error
// naming the line.
class ScoreTable {
public:
  static ScoreTable load_tsv(const std::filesystem::path& path);

  void insert(const std::string& query_id, const std::string& doc_id, double score);
  const double* find(const std::string& query_id, const std::string& doc_id) const;
  std::size_t size() const { return scores_.size(); }

private:
  std::map<std::pair<std::string, std::string>, double> scores_;
};

enum class MissingPolicy {
  kError,           // unknown (query, doc) pair throws, naming the pair
  kRetrieverScore,  // fall back to the candidate's retriever score
};

std::unique_ptr<RerankerScorer> make_file_scorer(ScoreTable table, MissingPolicy policy);

// Synthetic-benchmark reranker: min-max normalizes the candidates'
// retriever scores and adds `margin` to every judged-relevant doc, so
// relevant candidates dominate the target distribution. Doc ids absent
// from the index are an error.
std::unique_ptr<RerankerScorer> make_oracle_scorer(QrelSet qrels, double margin,
                                                   const class DenseIndex& index);

}  // namespace refeed
