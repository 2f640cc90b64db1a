#include <doctest.h>

#include <numeric>
#include <vector>

#include "refeed/eval.hpp"
#include "refeed/index.hpp"
#include "refeed/scorer.hpp"
#include "refeed/synth.hpp"
#include "testutil.hpp"

using namespace refeed;

namespace {

std::vector<std::size_t> argsort_desc(const ScoreVector& s) {
  std::vector<std::size_t> order(s.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return s[a] > s[b]; });
  return order;
}

}  // namespace

TEST_SUITE("scorer") {

TEST_CASE("score table: loads TSV and rejects duplicates naming the line") {
  const tu::TempDir dir;
  const auto path = dir / "scores.tsv";
  tu::spit(path, "q1\td1\t0.9\nq1\td2\t0.4\nq2\td1\t-1.5\n");
  const ScoreTable table = ScoreTable::load_tsv(path);
  CHECK(table.size() == 3);
  REQUIRE(table.find("q2", "d1") != nullptr);
  CHECK(*table.find("q2", "d1") == -1.5);
  CHECK(table.find("q9", "d1") == nullptr);

  tu::spit(path, "q1\td1\t0.9\nq1\td1\t0.8\n");
  const std::string msg = tu::thrown_message([&] { ScoreTable::load_tsv(path); });
  CHECK(msg.find(":2") != std::string::npos);
  CHECK(msg.find("q1") != std::string::npos);
  CHECK(msg.find("d1") != std::string::npos);
}

TEST_CASE("score table: malformed lines are errors") {
  const tu::TempDir dir;
  const auto path = dir / "scores.tsv";
  tu::spit(path, "q1\td1\n");
  CHECK_THROWS_AS(ScoreTable::load_tsv(path), std::runtime_error);
  tu::spit(path, "q1\td1\tnot_a_number\n");
  CHECK_THROWS_AS(ScoreTable::load_tsv(path), std::runtime_error);
}

TEST_CASE("file scorer: plain lookup") {
  ScoreTable table;
  table.insert("q1", "d1", 0.9);
  const auto scorer = make_file_scorer(std::move(table), MissingPolicy::kError);
  const std::vector<std::string> docs{"d1"};
  const ScoreVector retriever{0.1};
  CHECK(scorer->score("q1", docs, retriever) == ScoreVector{0.9});
}

TEST_CASE("file scorer: missing pair under error policy names the pair") {
  ScoreTable table;
  table.insert("q1", "d1", 0.9);
  const auto scorer = make_file_scorer(std::move(table), MissingPolicy::kError);
  const std::vector<std::string> docs{"d2"};
  const ScoreVector retriever{0.1};
  const std::string msg = tu::thrown_message([&] { scorer->score("q1", docs, retriever); });
  CHECK(msg.find("q1") != std::string::npos);
  CHECK(msg.find("d2") != std::string::npos);
}

TEST_CASE("file scorer: retriever-score fallback fills only the gaps") {
  ScoreTable table;
  table.insert("q1", "d1", 0.9);
  const auto scorer = make_file_scorer(std::move(table), MissingPolicy::kRetrieverScore);
  const std::vector<std::string> docs{"d1", "d2"};
  const ScoreVector retriever{0.3, 0.4};
  CHECK(scorer->score("q1", docs, retriever) == ScoreVector{0.9, 0.4});
}

TEST_CASE("file scorer: deterministic pure lookup") {
  ScoreTable table;
  table.insert("q1", "d1", 0.25);
  table.insert("q1", "d2", -3.5);
  const auto scorer = make_file_scorer(std::move(table), MissingPolicy::kError);
  const std::vector<std::string> docs{"d2", "d1"};
  const ScoreVector retriever{0.0, 0.0};
  const ScoreVector a = scorer->score("q1", docs, retriever);
  const ScoreVector b = scorer->score("q1", docs, retriever);
  CHECK(a == b);
  CHECK(a == ScoreVector{-3.5, 0.25});  // aligned with input order
}

TEST_CASE("oracle scorer: margin 0 reproduces the retriever ranking") {
  const DenseIndex index = tu::make_index({{1, 0}, {0.9f, 0.1f}, {0.2f, 0.8f}, {-1, 0}});
  QrelSet qrels;
  qrels.grades["q"]["d0001"] = 1;
  const auto scorer = make_oracle_scorer(qrels, 0.0, index);
  const CandidateSet cand = search(index, Vector{1, 0}, 4, "q");
  std::vector<std::string> ids;
  ScoreVector retr;
  for (const auto& e : cand.entries) {
    ids.push_back(e.doc_id);
    retr.push_back(e.score);
  }
  const ScoreVector oracle = scorer->score("q", ids, retr);
  CHECK(argsort_desc(oracle) == argsort_desc(retr));
}

TEST_CASE("oracle scorer: margin 10 puts the judged-positive on top") {
  const DenseIndex index = tu::make_index({{1, 0}, {0.99f, 0.1f}, {0.0f, 1.0f}});
  QrelSet qrels;
  qrels.grades["q"]["d0002"] = 1;  // the worst retriever candidate
  const auto scorer = make_oracle_scorer(qrels, 10.0, index);
  const std::vector<std::string> ids{"d0000", "d0001", "d0002"};
  const ScoreVector retr{1.0, 0.99, 0.0};
  const ScoreVector oracle = scorer->score("q", ids, retr);
  CHECK(oracle[2] > oracle[0]);
  CHECK(oracle[2] > oracle[1]);
  CHECK(oracle[0] > oracle[1]);  // non-relevant order still informative
}

TEST_CASE("oracle scorer: unknown doc id is an error") {
  const DenseIndex index = tu::make_index({{1, 0}});
  const auto scorer = make_oracle_scorer(QrelSet{}, 10.0, index);
  const std::vector<std::string> ids{"ghost"};
  const ScoreVector retr{0.5};
  const std::string msg = tu::thrown_message([&] { scorer->score("q", ids, retr); });
  CHECK(msg.find("ghost") != std::string::npos);
}

TEST_CASE("oracle scorer: nDCG@10 at least the retriever's on every benchmark query") {
  SynthSpec spec;
  spec.n_queries = 50;
  const SynthResult data = generate(spec);
  const DenseIndex index = DenseIndex::build(data.passages);
  const auto scorer = make_oracle_scorer(data.qrels, 10.0, index);

  for (const auto& [qid, qvec] : data.queries) {
    const CandidateSet cand = search(index, qvec, 100, qid);
    std::vector<std::string> ids;
    ScoreVector retr;
    for (const auto& e : cand.entries) {
      ids.push_back(e.doc_id);
      retr.push_back(e.score);
    }
    const ScoreVector oracle = scorer->score(qid, ids, retr);

    const auto& grades = data.qrels.grades.at(qid);
    const auto as_run = [&](const std::vector<std::size_t>& order) {
      std::vector<RunEntry> run;
      for (std::size_t i : order) run.push_back({ids[i], 0.0});
      return run;
    };
    const auto retr_run = as_run(argsort_desc(retr));
    const auto oracle_run = as_run(argsort_desc(oracle));
    CHECK(ndcg_at_k(oracle_run, grades, 10) >= ndcg_at_k(retr_run, grades, 10) - 1e-12);
  }
}

}  // TEST_SUITE
