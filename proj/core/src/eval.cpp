#include "refeed/eval.hpp"

#include <algorithm>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace refeed {

Run load_trec_run(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  Run run;
  std::map<std::string, double> last_score;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto err = [&](const std::string& what) {
      return std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": " + what);
    };
    std::istringstream fields(line);
    std::string qid, q0, did, rank_str, score_str, tag;
    if (!(fields >> qid >> q0 >> did >> rank_str >> score_str >> tag)) {
      throw err("expected `query_id Q0 doc_id rank score tag`");
    }
    std::size_t rank = 0;
    double score = 0;
    try {
      std::size_t used = 0;
      rank = std::stoul(rank_str, &used);
      if (used != rank_str.size()) throw std::invalid_argument(rank_str);
      score = std::stod(score_str, &used);
      if (used != score_str.size()) throw std::invalid_argument(score_str);
    } catch (const std::exception&) {
      throw err("bad rank or score ('" + rank_str + "', '" + score_str + "')");
    }
    auto& entries = run[qid];
    if (rank != entries.size() + 1) {
      throw err("rank " + rank_str + " for query " + qid + ", expected " +
                std::to_string(entries.size() + 1));
    }
    if (!entries.empty() && score > last_score[qid]) {
      throw err("score " + score_str + " increases at rank " + rank_str + " for query " + qid);
    }
    for (const auto& e : entries) {
      if (e.doc_id == did) throw err("duplicate doc '" + did + "' for query " + qid);
    }
    last_score[qid] = score;
    entries.push_back({did, score});
  }
  return run;
}

namespace {

std::size_t count_relevant(const std::map<std::string, int>& grades) {
  std::size_t n = 0;
  for (const auto& [_, g] : grades) {
    if (g > 0) ++n;
  }
  return n;
}

void require_relevant(const std::map<std::string, int>& grades, const char* metric) {
  if (count_relevant(grades) == 0) {
    throw std::invalid_argument(std::string(metric) + ": no relevant docs in judgments");
  }
}

int grade_of(const std::map<std::string, int>& grades, const std::string& doc_id) {
  auto it = grades.find(doc_id);
  return it == grades.end() ? 0 : it->second;
}

}  // namespace

double recall_at_k(std::span<const RunEntry> ranked, const std::map<std::string, int>& grades,
                   std::size_t k) {
  require_relevant(grades, "recall");
  const std::size_t cutoff = std::min(k, ranked.size());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < cutoff; ++i) {
    if (grade_of(grades, ranked[i].doc_id) > 0) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(count_relevant(grades));
}

double ndcg_at_k(std::span<const RunEntry> ranked, const std::map<std::string, int>& grades,
                 std::size_t k) {
  require_relevant(grades, "ndcg");
  const auto gain = [](int g) { return std::pow(2.0, g) - 1.0; };
  double dcg = 0.0;
  const std::size_t cutoff = std::min(k, ranked.size());
  for (std::size_t i = 0; i < cutoff; ++i) {
    dcg += gain(grade_of(grades, ranked[i].doc_id)) /
           std::log2(static_cast<double>(i) + 2.0);
  }
  std::vector<int> sorted_grades;
  for (const auto& [_, g] : grades) {
    if (g > 0) sorted_grades.push_back(g);
  }
  std::sort(sorted_grades.rbegin(), sorted_grades.rend());
  double idcg = 0.0;
  for (std::size_t i = 0; i < std::min(k, sorted_grades.size()); ++i) {
    idcg += gain(sorted_grades[i]) / std::log2(static_cast<double>(i) + 2.0);
  }
  return dcg / idcg;
}

double mrr_at_k(std::span<const RunEntry> ranked, const std::map<std::string, int>& grades,
                std::size_t k) {
  require_relevant(grades, "mrr");
  const std::size_t cutoff = std::min(k, ranked.size());
  for (std::size_t i = 0; i < cutoff; ++i) {
    if (grade_of(grades, ranked[i].doc_id) > 0) return 1.0 / static_cast<double>(i + 1);
  }
  return 0.0;
}

TTestResult paired_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("paired t-test: sample sizes differ (" + std::to_string(a.size()) +
                                " vs " + std::to_string(b.size()) + ")");
  }
  const std::size_t n = a.size();
  if (n < 2) throw std::invalid_argument("paired t-test: need at least 2 pairs");

  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += a[i] - b[i];
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a[i] - b[i] - mean;
    ss += d * d;
  }
  const double var = ss / static_cast<double>(n - 1);

  TTestResult res;
  if (var == 0.0) {
    if (mean == 0.0) return res;  // identical samples: t=0, p=1
    res.t = mean > 0 ? std::numeric_limits<double>::infinity()
                     : -std::numeric_limits<double>::infinity();
    res.p = 0.0;
    res.zero_variance = true;
    return res;
  }
  res.t = mean / std::sqrt(var / static_cast<double>(n));
  boost::math::students_t dist(static_cast<double>(n - 1));
  res.p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(res.t)));
  return res;
}

std::string MetricSpec::name() const {
  const char* base = kind == Kind::kRecall ? "recall" : kind == Kind::kNdcg ? "ndcg" : "mrr";
  return std::string(base) + "@" + std::to_string(k);
}

MetricSpec MetricSpec::parse(const std::string& text) {
  const std::size_t at = text.find('@');
  if (at == std::string::npos) {
    throw std::invalid_argument("metric '" + text + "': expected name@k");
  }
  const std::string base = text.substr(0, at);
  const std::string k_str = text.substr(at + 1);
  MetricSpec spec{};
  if (base == "recall") {
    spec.kind = Kind::kRecall;
  } else if (base == "ndcg") {
    spec.kind = Kind::kNdcg;
  } else if (base == "mrr") {
    spec.kind = Kind::kMrr;
  } else {
    throw std::invalid_argument("metric '" + text + "': unknown metric '" + base + "'");
  }
  try {
    std::size_t used = 0;
    spec.k = std::stoul(k_str, &used);
    if (used != k_str.size() || spec.k == 0) throw std::invalid_argument(k_str);
  } catch (const std::exception&) {
    throw std::invalid_argument("metric '" + text + "': bad cutoff '" + k_str + "'");
  }
  return spec;
}

namespace {

double metric_value(const MetricSpec& m, std::span<const RunEntry> ranked,
                    const std::map<std::string, int>& grades) {
  switch (m.kind) {
    case MetricSpec::Kind::kRecall: return recall_at_k(ranked, grades, m.k);
    case MetricSpec::Kind::kNdcg: return ndcg_at_k(ranked, grades, m.k);
    case MetricSpec::Kind::kMrr: return mrr_at_k(ranked, grades, m.k);
  }
  throw std::logic_error("unreachable");
}

}  // namespace

EvalReport evaluate(const Run& run, const QrelSet& qrels, const std::vector<MetricSpec>& metrics,
                    const Run* compare) {
  if (metrics.empty()) throw std::invalid_argument("evaluate: no metrics requested");
  EvalReport report;
  for (const auto& m : metrics) report.metrics.push_back(m.name());

  std::vector<const std::string*> evaluated;
  for (const auto& [qid, ranked] : run) {
    auto q = qrels.grades.find(qid);
    if (q == qrels.grades.end()) {
      ++report.run_queries_without_qrels;
      continue;
    }
    if (count_relevant(q->second) == 0) {
      ++report.queries_without_relevant;
      continue;
    }
    auto& row = report.per_query[qid];
    for (const auto& m : metrics) row[m.name()] = metric_value(m, ranked, q->second);
    evaluated.push_back(&qid);
  }
  report.n_queries = evaluated.size();

  for (const auto& name : report.metrics) {
    double sum = 0.0;
    for (const auto& [_, row] : report.per_query) sum += row.at(name);
    report.aggregates[name] =
        report.per_query.empty() ? 0.0 : sum / static_cast<double>(report.per_query.size());
  }

  if (compare && !evaluated.empty()) {
    const MetricSpec& m = metrics.front();
    std::vector<double> ours, theirs;
    for (const std::string* qid : evaluated) {
      auto it = compare->find(*qid);
      if (it == compare->end()) continue;
      ours.push_back(report.per_query.at(*qid).at(m.name()));
      theirs.push_back(metric_value(m, it->second, qrels.grades.at(*qid)));
    }
    if (ours.size() >= 2) {
      const TTestResult t = paired_t_test(ours, theirs);
      report.significance = Significance{m.name(), t.t, t.p, t.zero_variance};
    }
  }
  return report;
}

}  // namespace refeed
