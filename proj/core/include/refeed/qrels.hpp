#pragma once

#include <filesystem>
#include <map>
#include <string>

namespace refeed {

// Relevance judgments: query id -> doc id -> integer grade >= 0.
// Grade 0 entries are kept (explicitly judged non-relevant) but do not
// count as relevant anywhere.
struct QrelSet {
  std::map<std::string, std::map<std::string, int>> grades;

  bool relevant(const std::string& query_id, const std::string& doc_id) const {
    auto q = grades.find(query_id);
    if (q == grades.end()) return false;
    auto d = q->second.find(doc_id);
    return d != q->second.end() && d->second > 0;
  }
};

// TREC qrels lines: `query_id iteration doc_id grade`, whitespace
// separated; the iteration column is ignored. Errors name the line.
QrelSet load_qrels(const std::filesystem::path& path);

std::string qrels_text(const QrelSet& qrels);

}  // namespace refeed
