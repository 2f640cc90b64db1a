#include "refeed/scorer.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "refeed/index.hpp"

namespace refeed {

ScoreTable ScoreTable::load_tsv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  ScoreTable table;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto err = [&](const std::string& what) {
      return std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": " + what);
    };
    const std::size_t t1 = line.find('\t');
    const std::size_t t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
    if (t2 == std::string::npos) throw err("expected query_id<TAB>doc_id<TAB>score");
    const std::string qid = line.substr(0, t1);
    const std::string did = line.substr(t1 + 1, t2 - t1 - 1);
    const std::string rest = line.substr(t2 + 1);
    if (qid.empty() || did.empty()) throw err("empty id");
    std::size_t consumed = 0;
    double score;
    try {
      score = std::stod(rest, &consumed);
    } catch (const std::exception&) {
      throw err("bad score '" + rest + "'");
    }
    if (consumed != rest.size()) throw err("trailing characters after score '" + rest + "'");
    if (table.find(qid, did)) throw err("duplicate entry for (" + qid + ", " + did + ")");
    table.insert(qid, did, score);
  }
  return table;
}

void ScoreTable::insert(const std::string& query_id, const std::string& doc_id, double score) {
  scores_[{query_id, doc_id}] = score;
}

const double* ScoreTable::find(const std::string& query_id, const std::string& doc_id) const {
  auto it = scores_.find({query_id, doc_id});
  return it == scores_.end() ? nullptr : &it->second;
}

namespace {

class FileScorer final : public RerankerScorer {
public:
  FileScorer(ScoreTable table, MissingPolicy policy)
      : table_(std::move(table)), policy_(policy) {}

  ScoreVector score(const std::string& query_id, std::span<const std::string> doc_ids,
                    std::span<const double> retriever_scores) const override {
    if (doc_ids.size() != retriever_scores.size()) {
      throw std::invalid_argument("scorer: " + std::to_string(doc_ids.size()) + " doc ids vs " +
                                  std::to_string(retriever_scores.size()) + " retriever scores");
    }
    ScoreVector out(doc_ids.size());
    for (std::size_t i = 0; i < doc_ids.size(); ++i) {
      if (const double* s = table_.find(query_id, doc_ids[i])) {
        out[i] = *s;
      } else if (policy_ == MissingPolicy::kRetrieverScore) {
        out[i] = retriever_scores[i];
      } else {
        throw std::runtime_error("scorer: no score for (" + query_id + ", " + doc_ids[i] + ")");
      }
    }
    return out;
  }

private:
  ScoreTable table_;
  MissingPolicy policy_;
};

class OracleScorer final : public RerankerScorer {
public:
  OracleScorer(QrelSet qrels, double margin, const DenseIndex& index)
      : qrels_(std::move(qrels)), margin_(margin), index_(index) {}

  ScoreVector score(const std::string& query_id, std::span<const std::string> doc_ids,
                    std::span<const double> retriever_scores) const override {
    if (doc_ids.size() != retriever_scores.size()) {
      throw std::invalid_argument("scorer: " + std::to_string(doc_ids.size()) + " doc ids vs " +
                                  std::to_string(retriever_scores.size()) + " retriever scores");
    }
    if (doc_ids.empty()) return {};
    for (const auto& id : doc_ids) {
      if (!index_.row_of(id)) {
        throw std::runtime_error("oracle scorer: doc '" + id + "' not in index");
      }
    }
    ScoreVector out = min_max_normalize(retriever_scores);
    for (std::size_t i = 0; i < doc_ids.size(); ++i) {
      if (qrels_.relevant(query_id, doc_ids[i])) out[i] += margin_;
    }
    return out;
  }

private:
  QrelSet qrels_;
  double margin_;
  const DenseIndex& index_;
};

}  // namespace

std::unique_ptr<RerankerScorer> make_file_scorer(ScoreTable table, MissingPolicy policy) {
  return std::make_unique<FileScorer>(std::move(table), policy);
}

std::unique_ptr<RerankerScorer> make_oracle_scorer(QrelSet qrels, double margin,
                                                   const DenseIndex& index) {
  return std::make_unique<OracleScorer>(std::move(qrels), margin, index);
}

}  // namespace refeed
