// End-to-end tests against the installed CLI binary. REFEED_CLI_PATH
// is injected by the build.

#include <doctest.h>

#include <json.hpp>
#include <cstdlib>
#include <string>

#include "refeed/io.hpp"
#include "testutil.hpp"

namespace {

const std::string kCli = REFEED_CLI_PATH;

// Tiny corpus: 8 passages of dim 4 with distinct score profiles for
// the two queries, a full reranker score table, and judgments.
struct Fixture {
  tu::TempDir dir{"refeed_cli"};

  std::filesystem::path corpus = dir / "corpus.jsonl";
  std::filesystem::path queries = dir / "queries.jsonl";
  std::filesystem::path scores = dir / "scores.tsv";
  std::filesystem::path qrels = dir / "qrels.txt";

  Fixture() {
    std::string jsonl;
    for (int i = 0; i < 8; ++i) {
      char buf[160];
      std::snprintf(buf, sizeof buf,
                    "{\"id\":\"d%d\",\"vector\":[1,%.9g,%.9g,%.9g]}\n", i, 0.125 * i,
                    0.25 * (i % 3), 1.0 - 0.0625 * i);
      jsonl += buf;
    }
    tu::spit(corpus, jsonl);
    tu::spit(queries,
             "{\"id\":\"qa\",\"vector\":[1,0,0.5,0]}\n"
             "{\"id\":\"qb\",\"vector\":[0,1,0,0.25]}\n");
    std::string tsv;
    for (const char* q : {"qa", "qb"}) {
      for (int i = 0; i < 8; ++i) {
        char buf[64];
        // qa prefers high ids, qb prefers low ids
        const double s = q[1] == 'a' ? 0.1 * i : 0.1 * (7 - i);
        std::snprintf(buf, sizeof buf, "%s\td%d\t%.9g\n", q, i, s);
        tsv += buf;
      }
    }
    tu::spit(scores, tsv);
    tu::spit(qrels,
             "qa 0 d6 1\n"
             "qa 0 d7 1\n"
             "qb 0 d0 1\n"
             "qb 0 d1 1\n");
  }

  std::string feedback_args(const std::string& out_dir, const std::string& extra = {}) const {
    return "feedback --index '" + corpus.string() + "' --queries '" + queries.string() +
           "' --scorer file:'" + scores.string() + "' --out-dir '" + out_dir + "' " + extra;
  }
};

// the report JSON sits between the table and any CSV that follows
nlohmann::json stdout_json(const std::string& out) {
  const std::size_t open = out.find('{');
  const std::size_t close = out.rfind('}');
  REQUIRE(open != std::string::npos);
  REQUIRE(close != std::string::npos);
  return nlohmann::json::parse(out.substr(open, close - open + 1));
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("--version prints the tool version") {
  const auto r = tu::run_process(kCli, "--version");
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("refeed 0.1.0") != std::string::npos);
}

TEST_CASE("build-index builds, reports, and reproduces byte-identical indexes") {
  Fixture fx;
  const auto idx1 = fx.dir / "a.idx";
  const auto idx2 = fx.dir / "b.idx";
  const auto r1 = tu::run_process(
      kCli, "build-index --embeddings '" + fx.corpus.string() + "' --out '" + idx1.string() + "'");
  CHECK(r1.exit_code == 0);
  CHECK(r1.out.find("indexed 8 vectors (dim 4)") != std::string::npos);
  const auto r2 = tu::run_process(
      kCli, "build-index --embeddings '" + fx.corpus.string() + "' --out '" + idx2.string() + "'");
  CHECK(r2.exit_code == 0);
  CHECK(tu::slurp(idx1) == tu::slurp(idx2));

  // a built index is accepted anywhere embeddings are
  const auto r3 = tu::run_process(
      kCli, "build-index --embeddings '" + idx1.string() + "' --out '" + idx2.string() + "'");
  CHECK(r3.exit_code == 0);
  CHECK(tu::slurp(idx1) == tu::slurp(idx2));
}

TEST_CASE("build-index rejects malformed embeddings naming the line") {
  Fixture fx;
  const auto bad = fx.dir / "bad.jsonl";
  tu::spit(bad,
           "{\"id\":\"d0\",\"vector\":[1,0]}\n"
           "{\"id\":\"d1\"}\n");
  const auto r = tu::run_process(
      kCli, "build-index --embeddings '" + bad.string() + "' --out '" + (fx.dir / "x.idx").string() + "'");
  CHECK(r.exit_code == 2);
  CHECK(r.err.find("error:") != std::string::npos);
  CHECK(r.err.find(":2:") != std::string::npos);
}

TEST_CASE("feedback writes the full artifact set with matching digests") {
  Fixture fx;
  const auto out = fx.dir / "out";
  const auto r = tu::run_process(kCli, fx.feedback_args(out.string(), "--n 50"));
  INFO(r.err);
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("feedback complete: 2/2") != std::string::npos);

  const auto manifest = nlohmann::json::parse(tu::slurp(out / "manifest.json"));
  CHECK(manifest.at("queries").at("completed") == 2);
  CHECK(manifest.at("queries").at("failed") == 0);
  CHECK(manifest.at("config").at("n") == 50);
  for (const char* name : {"baseline.run", "feedback.run", "merged.run", "queries_updated.jsonl"}) {
    CHECK(manifest.at("digests").at(name).get<std::string>()
          == refeed::sha256_hex(tu::slurp(out / name)));
  }
  CHECK(tu::slurp(out / "timings.csv").rfind("stage,mean_ms,p50_ms,p95_ms\n", 0) == 0);
  CHECK(tu::slurp(out / "traces.csv")
            .rfind("query_id,round,initial_loss,final_loss,first_retrieval_ms,rerank_ms,"
                   "distill_ms,second_retrieval_ms\n", 0) == 0);
  // run files carry their own default tags
  CHECK(tu::slurp(out / "baseline.run").find(" baseline\n") != std::string::npos);
  CHECK(tu::slurp(out / "feedback.run").find(" feedback\n") != std::string::npos);
  CHECK(tu::slurp(out / "merged.run").find(" merged\n") != std::string::npos);
}

TEST_CASE("feedback with zero steps reproduces the baseline run") {
  Fixture fx;
  const auto out = fx.dir / "out";
  const auto r = tu::run_process(kCli, fx.feedback_args(out.string(), "--n 0 --tag x"));
  CHECK(r.exit_code == 0);
  CHECK(tu::slurp(out / "baseline.run") == tu::slurp(out / "feedback.run"));
  const auto manifest = nlohmann::json::parse(tu::slurp(out / "manifest.json"));
  CHECK(manifest.at("config").at("n") == 0);
  // updated queries round-trip the originals exactly at n=0
  CHECK(tu::slurp(out / "queries_updated.jsonl") == tu::slurp(fx.queries));
}

TEST_CASE("feedback merges config file values under explicit flags") {
  Fixture fx;
  const auto cfg = fx.dir / "cfg.json";
  tu::spit(cfg, "{\"k\": 3, \"alpha\": 0.5, \"t_ce\": 1.5, \"n\": 20}\n");
  const auto out = fx.dir / "out";
  const auto r = tu::run_process(
      kCli, fx.feedback_args(out.string(), "--config '" + cfg.string() + "' --k 5"));
  CHECK(r.exit_code == 0);
  const auto manifest = nlohmann::json::parse(tu::slurp(out / "manifest.json"));
  CHECK(manifest.at("config").at("k") == 5);          // flag wins
  CHECK(manifest.at("config").at("alpha") == 0.5);    // config fills the rest
  CHECK(manifest.at("config").at("t_ce") == 1.5);
  CHECK(manifest.at("config").at("n") == 20);
}

TEST_CASE("feedback rejects unknown config keys and missing inputs") {
  Fixture fx;
  const auto cfg = fx.dir / "cfg.json";
  tu::spit(cfg, "{\"kk\": 1}\n");
  const auto r = tu::run_process(
      kCli, fx.feedback_args((fx.dir / "out").string(), "--config '" + cfg.string() + "'"));
  CHECK(r.exit_code == 2);
  CHECK(r.err.find("unknown key 'kk'") != std::string::npos);

  const auto r2 = tu::run_process(kCli, "feedback --queries '" + fx.queries.string() +
                                            "' --scorer file:'" + fx.scores.string() +
                                            "' --out-dir '" + (fx.dir / "o2").string() + "'");
  CHECK(r2.exit_code == 2);
  CHECK(r2.err.find("--index is required") != std::string::npos);
}

TEST_CASE("feedback manifest config replays byte-identically") {
  Fixture fx;
  const auto out1 = fx.dir / "out1";
  const auto r1 = tu::run_process(
      kCli, fx.feedback_args(out1.string(), "--k 6 --n 40 --alpha 0.01 --t-ce 1.7 --rounds 2 --tag t"));
  REQUIRE(r1.exit_code == 0);

  const auto manifest = nlohmann::json::parse(tu::slurp(out1 / "manifest.json"));
  const auto cfg = fx.dir / "replay.json";
  tu::spit(cfg, manifest.at("config").dump());

  const auto out2 = fx.dir / "out2";
  const auto r2 = tu::run_process(
      kCli, fx.feedback_args(out2.string(), "--config '" + cfg.string() + "'"));
  REQUIRE(r2.exit_code == 0);
  // timings.csv/traces.csv carry wall-clock columns; everything
  // content-bearing must replay byte-identically
  for (const char* name : {"baseline.run", "feedback.run", "merged.run", "queries_updated.jsonl"}) {
    CHECK(tu::slurp(out1 / name) == tu::slurp(out2 / name));
  }
}

TEST_CASE("feedback without a score for a candidate pair fails naming it") {
  Fixture fx;
  std::string tsv = tu::slurp(fx.scores);
  const auto cut = tsv.find("qb\td5");
  REQUIRE(cut != std::string::npos);
  tsv.erase(cut, tsv.find('\n', cut) - cut + 1);
  tu::spit(fx.scores, tsv);

  const auto r = tu::run_process(kCli, fx.feedback_args((fx.dir / "out").string(), "--n 5"));
  CHECK(r.exit_code == 2);
  CHECK(r.err.find("no score for (qb, d5)") != std::string::npos);
  CHECK(r.out.find("feedback complete: 1/2") != std::string::npos);

  // the run completes when the policy falls back to retriever scores
  const auto r2 = tu::run_process(
      kCli, fx.feedback_args((fx.dir / "out2").string(), "--n 5 --missing-policy retriever_score"));
  CHECK(r2.exit_code == 0);
}

TEST_CASE("feedback output is independent of worker threads") {
  Fixture fx;
  const auto out1 = fx.dir / "t1";
  const auto out2 = fx.dir / "t3";
  const auto r1 =
      tu::run_process(kCli, fx.feedback_args(out1.string(), "--n 30"), "REFEED_THREADS=1");
  const auto r2 =
      tu::run_process(kCli, fx.feedback_args(out2.string(), "--n 30"), "REFEED_THREADS=3");
  REQUIRE(r1.exit_code == 0);
  REQUIRE(r2.exit_code == 0);
  for (const char* name : {"baseline.run", "feedback.run", "merged.run", "queries_updated.jsonl"}) {
    CHECK(tu::slurp(out1 / name) == tu::slurp(out2 / name));
  }
  const auto m1 = nlohmann::json::parse(tu::slurp(out1 / "manifest.json"));
  CHECK(m1.at("threads") == 1);  // env cap applies
}

TEST_CASE("eval scores a perfect run at 100") {
  Fixture fx;
  const auto run = fx.dir / "perfect.run";
  tu::spit(run,
           "qa Q0 d6 1 2.000000 t\n"
           "qa Q0 d7 2 1.000000 t\n"
           "qb Q0 d0 1 2.000000 t\n"
           "qb Q0 d1 2 1.000000 t\n");
  const auto json_path = fx.dir / "report.json";
  const auto r = tu::run_process(kCli, "eval --run '" + run.string() + "' --qrels '" +
                                           fx.qrels.string() + "' --json '" + json_path.string() +
                                           "' --csv -");
  INFO(r.err);
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("queries evaluated: 2") != std::string::npos);
  CHECK(r.out.find("recall@100") != std::string::npos);
  CHECK(r.out.find("100.00") != std::string::npos);
  CHECK(r.out.find("query_id,recall@100") != std::string::npos);  // csv on stdout

  const auto doc = stdout_json(r.out);
  CHECK(doc.at("n_queries") == 2);
  CHECK(doc.at("aggregates").at("recall@100") == 1.0);
  CHECK(doc.at("aggregates").at("ndcg@10") == 1.0);
  CHECK(doc.at("aggregates").at("mrr@100") == 1.0);
  CHECK(doc.at("per_query").at("qa").at("recall@100") == 1.0);

  // --json also writes the same document to the file
  const auto filed = nlohmann::json::parse(tu::slurp(json_path));
  CHECK(filed == doc);
}

TEST_CASE("eval compares a run against itself with t=0 p=1") {
  Fixture fx;
  const auto run = fx.dir / "a.run";
  tu::spit(run,
           "qa Q0 d6 1 2.000000 t\n"
           "qa Q0 d0 2 1.000000 t\n"
           "qb Q0 d0 1 2.000000 t\n"
           "qb Q0 d9 2 1.000000 t\n");
  const auto r = tu::run_process(kCli, "eval --run '" + run.string() + "' --qrels '" +
                                           fx.qrels.string() + "' --compare '" + run.string() + "'");
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("t=0.0000") != std::string::npos);
  CHECK(r.out.find("p=1") != std::string::npos);
  const auto doc = stdout_json(r.out);
  CHECK(doc.at("significance").at("t") == 0.0);
  CHECK(doc.at("significance").at("p") == 1.0);
  CHECK(doc.at("significance").at("zero_variance") == false);
}

TEST_CASE("eval rejects malformed runs with the line number") {
  Fixture fx;
  const auto run = fx.dir / "bad.run";
  tu::spit(run,
           "qa Q0 d6 1 2.0 t\n"
           "qa Q0 d7 3 1.0 t\n");
  const auto r = tu::run_process(
      kCli, "eval --run '" + run.string() + "' --qrels '" + fx.qrels.string() + "'");
  CHECK(r.exit_code == 2);
  CHECK(r.err.find(":2:") != std::string::npos);
}

TEST_CASE("synth generates a reproducible dataset the pipeline accepts") {
  tu::TempDir dir("refeed_cli_synth");
  const std::string params = "--n-passages 2000 --n-queries 30 --dim 32 --clusters 10";
  const auto s1 = dir / "s1";
  const auto s2 = dir / "s2";
  const auto r1 = tu::run_process(kCli, "synth --out-dir '" + s1.string() + "' " + params);
  INFO(r1.err);
  CHECK(r1.exit_code == 0);
  CHECK(r1.out.find("baseline recall@100 0.") != std::string::npos);
  const auto r2 = tu::run_process(kCli, "synth --out-dir '" + s2.string() + "' " + params);
  CHECK(r2.exit_code == 0);
  CHECK(tu::slurp(s1 / "spec.json") == tu::slurp(s2 / "spec.json"));
  CHECK(tu::slurp(s1 / "embeddings.jsonl") == tu::slurp(s2 / "embeddings.jsonl"));

  // dataset feeds straight into the rest of the pipeline
  const auto idx = dir / "synth.idx";
  CHECK(tu::run_process(kCli, "build-index --embeddings '" + (s1 / "embeddings.jsonl").string() +
                                  "' --out '" + idx.string() + "'")
            .exit_code == 0);
  const auto out = dir / "fb";
  const auto rf = tu::run_process(
      kCli, "feedback --index '" + idx.string() + "' --queries '" + (s1 / "queries.jsonl").string() +
                "' --scorer oracle:'" + (s1 / "qrels.txt").string() + "',10 --k 20 --n 25 --out-dir '" +
                out.string() + "'");
  INFO(rf.err);
  CHECK(rf.exit_code == 0);
  const auto re = tu::run_process(
      kCli, "eval --run '" + (out / "merged.run").string() + "' --qrels '" +
                (s1 / "qrels.txt").string() + "' --metrics recall@20,ndcg@10");
  INFO(re.err);
  CHECK(re.exit_code == 0);
  CHECK(re.out.find("queries evaluated: 30") != std::string::npos);
}

TEST_CASE("synth fails an infeasible band with the measured recall") {
  tu::TempDir dir("refeed_cli_synth_bad");
  const auto r = tu::run_process(
      kCli, "synth --out-dir '" + (dir / "s").string() +
                "' --n-passages 500 --n-queries 10 --dim 16 --clusters 5 "
                "--positive-spread 1e-12 --query-offset 1e-12");
  CHECK(r.exit_code == 2);
  CHECK(r.err.find("outside [0.40, 0.80]") != std::string::npos);
  CHECK(r.err.find("1.0000") != std::string::npos);
}

TEST_CASE("export-vectors round-trips coordinates at full float precision") {
  Fixture fx;
  const auto out = fx.dir / "fb";
  REQUIRE(tu::run_process(kCli, fx.feedback_args(out.string(), "--n 20")).exit_code == 0);

  const auto csv_path = fx.dir / "viz.csv";
  const auto r = tu::run_process(
      kCli, "export-vectors --index '" + fx.corpus.string() + "' --queries '" + fx.queries.string() +
                "' --updated-queries '" + (out / "queries_updated.jsonl").string() + "' --out '" +
                csv_path.string() + "'");
  INFO(r.err);
  CHECK(r.exit_code == 0);

  const std::string csv = tu::slurp(csv_path);
  CHECK(csv.rfind("role,id,v0,v1,v2,v3\n", 0) == 0);
  CHECK(csv.find("passage,d0,") != std::string::npos);
  CHECK(csv.find("query_initial,qa,1,0,0.5,0\n") != std::string::npos);
  CHECK(csv.find("query_updated,qa,") != std::string::npos);

  // the updated query row re-parses to the exact floats that were written
  const auto updated = refeed::read_embeddings_jsonl(out / "queries_updated.jsonl");
  const auto row_at = csv.find("query_updated,qa,");
  std::string row = csv.substr(row_at, csv.find('\n', row_at) - row_at);
  row.erase(0, std::string("query_updated,qa,").size());
  std::vector<float> parsed;
  const char* p = row.c_str();
  char* end = nullptr;
  for (float v = std::strtof(p, &end); p != end; v = std::strtof(p, &end)) {
    parsed.push_back(v);
    p = *end == ',' ? end + 1 : end;
  }
  REQUIRE(parsed.size() == 4);
  for (std::size_t d = 0; d < 4; ++d) CHECK(parsed[d] == updated[0].second[d]);
}

TEST_CASE("export-vectors with no queries writes only the header") {
  Fixture fx;
  const auto empty = fx.dir / "none.jsonl";
  tu::spit(empty, "");
  const auto csv_path = fx.dir / "viz.csv";
  const auto r = tu::run_process(kCli, "export-vectors --index '" + fx.corpus.string() +
                                           "' --queries '" + empty.string() + "' --out '" +
                                           csv_path.string() + "'");
  CHECK(r.exit_code == 0);
  CHECK(tu::slurp(csv_path) == "role,id,v0,v1,v2,v3\n");
}

}  // TEST_SUITE("cli")
