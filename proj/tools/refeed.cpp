// refeed: dense retrieval with re-ranker relevance feedback.
//
// Subcommands: build-index, feedback, eval, synth, export-vectors.
// Exit codes: 0 success, 2 input or validation problems, 1 anything
// unexpected. REFEED_THREADS caps worker parallelism.

#include <CLI11.hpp>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <string>

#include "refeed/eval.hpp"
#include "refeed/feedback.hpp"
#include "refeed/index.hpp"
#include "refeed/io.hpp"
#include "refeed/qrels.hpp"
#include "refeed/scorer.hpp"
#include "refeed/synth.hpp"
#include "refeed/version.hpp"

namespace {

using namespace refeed;

int thread_cap_from_env(int requested) {
  int threads = requested;
  if (const char* env = std::getenv("REFEED_THREADS")) {
    const int cap = std::atoi(env);
    if (cap > 0 && (threads <= 0 || threads > cap)) threads = cap;
  }
  return threads;
}

DenseIndex load_index_any(const std::filesystem::path& path) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw std::runtime_error("cannot open " + path.string());
  char magic[4] = {};
  probe.read(magic, 4);
  if (probe.gcount() == 4 && std::string_view(magic, 4) == "RFDX") {
    return DenseIndex::load(path);
  }
  return DenseIndex::build(read_embeddings_jsonl(path));
}

// "file:PATH" or "oracle:QRELS_PATH[,MARGIN]"
std::unique_ptr<RerankerScorer> make_scorer(const std::string& spec, MissingPolicy policy,
                                            const DenseIndex& index) {
  if (spec.starts_with("file:")) {
    return make_file_scorer(ScoreTable::load_tsv(spec.substr(5)), policy);
  }
  if (spec.starts_with("oracle:")) {
    const std::string rest = spec.substr(7);
    const std::size_t comma = rest.find(',');
    double margin = 10.0;
    std::string qrels_path = rest;
    if (comma != std::string::npos) {
      qrels_path = rest.substr(0, comma);
      margin = std::stod(rest.substr(comma + 1));
    }
    return make_oracle_scorer(load_qrels(qrels_path), margin, index);
  }
  throw std::invalid_argument("scorer spec '" + spec +
                              "': expected file:PATH or oracle:QRELS[,MARGIN]");
}

// Fills variables CLI11 left untouched from a JSON config with the
// same key names.
class ConfigMerge {
public:
  explicit ConfigMerge(nlohmann::json cfg) : cfg_(std::move(cfg)) {}

  template <typename T>
  void apply(const CLI::Option* opt, const char* key, T& target) const {
    if (opt->count() > 0) return;
    if (auto it = cfg_.find(key); it != cfg_.end()) target = it->get<T>();
  }

  void check_known(std::initializer_list<const char*> keys) const {
    for (auto it = cfg_.begin(); it != cfg_.end(); ++it) {
      bool known = false;
      for (const char* k : keys) {
        if (it.key() == k) known = true;
      }
      if (!known) throw std::invalid_argument("config: unknown key '" + it.key() + "'");
    }
  }

private:
  nlohmann::json cfg_;
};

nlohmann::json read_json_file(const std::filesystem::path& path) {
  nlohmann::json parsed = nlohmann::json::parse(read_file(path), nullptr, false);
  if (parsed.is_discarded() || !parsed.is_object()) {
    throw std::runtime_error(path.string() + ": not a JSON object");
  }
  return parsed;
}

int cmd_build_index(const std::string& embeddings, const std::string& out) {
  const DenseIndex index = load_index_any(embeddings);
  index.save(out);
  std::printf("indexed %zu vectors (dim %u) -> %s\n", index.size(), index.dim(), out.c_str());
  return 0;
}

struct FeedbackArgs {
  std::string index_path, queries_path, scorer_spec, out_dir, config_path, tag;
  std::string missing_policy = "error";
  FeedbackConfig cfg;
  int threads = 0;
  bool fail_fast = false;
};

int cmd_feedback(FeedbackArgs& args, const std::map<std::string, const CLI::Option*>& opts) {
  if (!args.config_path.empty()) {
    const ConfigMerge merge{read_json_file(args.config_path)};
    merge.check_known({"index", "queries", "scorer", "missing_policy", "out_dir", "tag", "k", "n",
                       "alpha", "t_ce", "t_ret", "normalize", "rounds", "renormalize_each_step",
                       "threads", "fail_fast"});
    merge.apply(opts.at("index"), "index", args.index_path);
    merge.apply(opts.at("queries"), "queries", args.queries_path);
    merge.apply(opts.at("scorer"), "scorer", args.scorer_spec);
    merge.apply(opts.at("missing_policy"), "missing_policy", args.missing_policy);
    merge.apply(opts.at("out_dir"), "out_dir", args.out_dir);
    merge.apply(opts.at("tag"), "tag", args.tag);
    merge.apply(opts.at("k"), "k", args.cfg.k);
    merge.apply(opts.at("n"), "n", args.cfg.n);
    merge.apply(opts.at("alpha"), "alpha", args.cfg.alpha);
    merge.apply(opts.at("t_ce"), "t_ce", args.cfg.t_ce);
    merge.apply(opts.at("t_ret"), "t_ret", args.cfg.t_ret);
    merge.apply(opts.at("normalize"), "normalize", args.cfg.normalize);
    merge.apply(opts.at("rounds"), "rounds", args.cfg.rounds);
    merge.apply(opts.at("renormalize_each_step"), "renormalize_each_step",
                args.cfg.renormalize_each_step);
    merge.apply(opts.at("threads"), "threads", args.threads);
    merge.apply(opts.at("fail_fast"), "fail_fast", args.fail_fast);
  }
  for (const auto& [flag, value] : {std::pair{"--index", &args.index_path},
                                    {"--queries", &args.queries_path},
                                    {"--scorer", &args.scorer_spec},
                                    {"--out-dir", &args.out_dir}}) {
    if (value->empty()) throw std::invalid_argument(std::string(flag) + " is required");
  }
  MissingPolicy policy;
  if (args.missing_policy == "error") {
    policy = MissingPolicy::kError;
  } else if (args.missing_policy == "retriever_score") {
    policy = MissingPolicy::kRetrieverScore;
  } else {
    throw std::invalid_argument("missing_policy '" + args.missing_policy +
                                "': expected error or retriever_score");
  }

  const DenseIndex index = load_index_any(args.index_path);
  const auto queries = read_embeddings_jsonl(args.queries_path);
  const auto scorer = make_scorer(args.scorer_spec, policy, index);

  BatchOptions bopts;
  bopts.out_dir = args.out_dir;
  bopts.threads = thread_cap_from_env(args.threads);
  bopts.fail_fast = args.fail_fast;
  if (!args.tag.empty()) bopts.run_tag = args.tag;

  const BatchSummary summary = batch_feedback(queries, index, *scorer, args.cfg, bopts);

  nlohmann::ordered_json manifest{
      {"tool_version", kVersion},
      {"config",
       {{"k", args.cfg.k},
        {"n", args.cfg.n},
        {"alpha", args.cfg.alpha},
        {"t_ce", args.cfg.t_ce},
        {"t_ret", args.cfg.t_ret},
        {"normalize", args.cfg.normalize},
        {"rounds", args.cfg.rounds},
        {"renormalize_each_step", args.cfg.renormalize_each_step},
        {"missing_policy", args.missing_policy},
        {"tag", args.tag}}},
      {"paths",
       {{"index", args.index_path},
        {"queries", args.queries_path},
        {"scorer", args.scorer_spec},
        {"out_dir", args.out_dir}}},
      {"threads", bopts.threads},
      {"queries", {{"total", queries.size()}, {"completed", summary.n_queries},
                   {"failed", summary.errors.size()}}},
  };
  auto& errors = manifest["errors"] = nlohmann::ordered_json::array();
  for (const auto& e : summary.errors) {
    errors.push_back({{"query_id", e.query_id}, {"message", e.message}});
  }
  auto& timings = manifest["timings"] = nlohmann::ordered_json::object();
  for (const auto& [stage, st] : summary.stage_stats) {
    timings[stage] = {{"mean_ms", st.mean_ms}, {"p50_ms", st.p50_ms}, {"p95_ms", st.p95_ms}};
  }
  auto& digests = manifest["digests"] = nlohmann::ordered_json::object();
  for (const char* name :
       {"baseline.run", "feedback.run", "merged.run", "queries_updated.jsonl"}) {
    digests[name] = sha256_hex_file(std::filesystem::path(args.out_dir) / name);
  }
  write_file_atomic(std::filesystem::path(args.out_dir) / "manifest.json",
                    manifest.dump(2) + "\n");

  for (const auto& e : summary.errors) {
    std::fprintf(stderr, "query %s failed: %s\n", e.query_id.c_str(), e.message.c_str());
  }
  std::printf("feedback complete: %zu/%zu queries -> %s\n", summary.n_queries, queries.size(),
              args.out_dir.c_str());
  return summary.errors.empty() ? 0 : 2;
}

struct EvalArgs {
  std::string run_path, qrels_path, compare_path, json_path, csv_path;
  std::string metrics = "recall@100,ndcg@10,mrr@100,recall@20";
};

int cmd_eval(const EvalArgs& args) {
  const Run run = load_trec_run(args.run_path);
  const QrelSet qrels = load_qrels(args.qrels_path);
  std::vector<MetricSpec> metrics;
  std::stringstream names(args.metrics);
  for (std::string item; std::getline(names, item, ',');) {
    if (!item.empty()) metrics.push_back(MetricSpec::parse(item));
  }
  std::optional<Run> compare;
  if (!args.compare_path.empty()) compare = load_trec_run(args.compare_path);

  const EvalReport report = evaluate(run, qrels, metrics, compare ? &*compare : nullptr);

  std::printf("queries evaluated: %zu", report.n_queries);
  if (report.run_queries_without_qrels || report.queries_without_relevant) {
    std::printf(" (skipped: %zu without judgments, %zu without relevant docs)",
                report.run_queries_without_qrels, report.queries_without_relevant);
  }
  std::printf("\n%-14s %s\n", "metric", "mean(%)");
  for (const auto& name : report.metrics) {
    std::printf("%-14s %.2f\n", name.c_str(), report.aggregates.at(name) * 100.0);
  }
  if (report.significance) {
    const auto& s = *report.significance;
    std::printf("paired t-test on %s vs %s: t=%.4f, p=%.6g%s\n", s.metric.c_str(),
                args.compare_path.c_str(), s.t, s.p,
                s.zero_variance ? " (zero-variance differences)" : "");
  }

  nlohmann::ordered_json doc{
      {"n_queries", report.n_queries},
      {"metrics", report.metrics},
      {"aggregates", report.aggregates},
      {"warnings",
       {{"run_queries_without_qrels", report.run_queries_without_qrels},
        {"queries_without_relevant", report.queries_without_relevant}}},
  };
  doc["per_query"] = report.per_query;
  if (report.significance) {
    const auto& s = *report.significance;
    doc["significance"] = {{"metric", s.metric},
                           {"t", s.t},
                           {"p", s.p},
                           {"zero_variance", s.zero_variance},
                           {"compare_run", args.compare_path}};
  }
  const std::string text = doc.dump(2) + "\n";
  std::fputs(text.c_str(), stdout);
  if (!args.json_path.empty() && args.json_path != "-") write_file_atomic(args.json_path, text);
  if (!args.csv_path.empty()) {
    std::string csv = "query_id";
    for (const auto& name : report.metrics) csv += "," + name;
    csv += '\n';
    char buf[64];
    for (const auto& [qid, row] : report.per_query) {
      csv += qid;
      for (const auto& name : report.metrics) {
        std::snprintf(buf, sizeof buf, ",%.6f", row.at(name));
        csv += buf;
      }
      csv += '\n';
    }
    if (args.csv_path == "-") {
      std::fputs(csv.c_str(), stdout);
    } else {
      write_file_atomic(args.csv_path, csv);
    }
  }
  return 0;
}

struct SynthArgs {
  std::string out_dir, spec_path;
  SynthSpec spec;
};

int cmd_synth(SynthArgs& args, const std::map<std::string, const CLI::Option*>& opts) {
  if (!args.spec_path.empty()) {
    const ConfigMerge merge{read_json_file(args.spec_path)};
    merge.check_known({"seed", "dim", "n_passages", "n_queries", "positives_per_query",
                       "clusters", "cluster_spread", "query_offset", "positive_spread"});
    merge.apply(opts.at("seed"), "seed", args.spec.seed);
    merge.apply(opts.at("dim"), "dim", args.spec.dim);
    merge.apply(opts.at("n_passages"), "n_passages", args.spec.n_passages);
    merge.apply(opts.at("n_queries"), "n_queries", args.spec.n_queries);
    merge.apply(opts.at("positives_per_query"), "positives_per_query",
                args.spec.positives_per_query);
    merge.apply(opts.at("clusters"), "clusters", args.spec.clusters);
    merge.apply(opts.at("cluster_spread"), "cluster_spread", args.spec.cluster_spread);
    merge.apply(opts.at("query_offset"), "query_offset", args.spec.query_offset);
    merge.apply(opts.at("positive_spread"), "positive_spread", args.spec.positive_spread);
  }
  const SynthResult result = generate(args.spec);
  write_synth(result, args.spec, args.out_dir);
  std::printf("synth dataset: %zu passages, %zu queries, baseline recall@100 %.4f -> %s\n",
              result.passages.size(), result.queries.size(), result.measured_recall,
              args.out_dir.c_str());
  return 0;
}

struct ExportArgs {
  std::string index_path, queries_path, updated_path, out_path;
};

int cmd_export_vectors(const ExportArgs& args) {
  const DenseIndex index = load_index_any(args.index_path);
  const auto queries = read_embeddings_jsonl(args.queries_path);
  std::vector<std::pair<std::string, Vector>> updated;
  if (!args.updated_path.empty()) updated = read_embeddings_jsonl(args.updated_path);

  std::string csv = "role,id";
  for (std::uint32_t d = 0; d < index.dim(); ++d) csv += ",v" + std::to_string(d);
  csv += '\n';

  const auto append = [&](const char* role, const std::string& id, std::span<const float> v) {
    if (v.size() != index.dim()) {
      throw std::invalid_argument("export: vector '" + id + "' has dim " +
                                  std::to_string(v.size()) + ", index has " +
                                  std::to_string(index.dim()));
    }
    csv += role;
    csv += ',';
    csv += id;
    for (float x : v) {
      csv += ',';
      csv += format_f32(x);
    }
    csv += '\n';
  };

  if (!queries.empty()) {
    for (std::size_t i = 0; i < index.size(); ++i) append("passage", index.id(i), index.row(i));
    for (const auto& [id, v] : queries) append("query_initial", id, v);
    for (const auto& [id, v] : updated) append("query_updated", id, v);
  }
  write_file_atomic(args.out_path, csv);
  std::printf("exported %s\n", args.out_path.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dense retrieval with re-ranker relevance feedback"};
  app.set_version_flag("--version", std::string("refeed ") + kVersion);
  app.require_subcommand(1);

  std::string bi_embeddings, bi_out;
  auto* build = app.add_subcommand("build-index", "build a binary index from embeddings");
  build->add_option("--embeddings", bi_embeddings, "JSONL embeddings or existing index")
      ->required();
  build->add_option("--out", bi_out, "output index path")->required();

  FeedbackArgs fb;
  std::map<std::string, const CLI::Option*> fb_opts;
  auto* feedback = app.add_subcommand("feedback", "retrieve, re-rank, distill, re-retrieve");
  fb_opts["index"] = feedback->add_option("--index", fb.index_path, "index or embeddings JSONL");
  fb_opts["queries"] = feedback->add_option("--queries", fb.queries_path, "query JSONL");
  fb_opts["scorer"] =
      feedback->add_option("--scorer", fb.scorer_spec, "file:PATH or oracle:QRELS[,MARGIN]");
  fb_opts["missing_policy"] = feedback->add_option(
      "--missing-policy", fb.missing_policy, "file scorer fallback: error|retriever_score");
  fb_opts["out_dir"] = feedback->add_option("--out-dir", fb.out_dir, "output directory");
  fb_opts["tag"] = feedback->add_option("--tag", fb.tag, "tag for all run files");
  fb_opts["k"] = feedback->add_option("--k", fb.cfg.k, "candidates per query");
  fb_opts["n"] = feedback->add_option("--n", fb.cfg.n, "gradient steps");
  fb_opts["alpha"] = feedback->add_option("--alpha", fb.cfg.alpha, "step size");
  fb_opts["t_ce"] = feedback->add_option("--t-ce,--t_ce", fb.cfg.t_ce, "target temperature");
  fb_opts["t_ret"] = feedback->add_option("--t-ret,--t_ret", fb.cfg.t_ret, "retriever temperature");
  fb_opts["normalize"] = feedback->add_option("--normalize", fb.cfg.normalize,
                                              "min-max both score sets (true|false)");
  fb_opts["rounds"] = feedback->add_option("--rounds", fb.cfg.rounds, "feedback rounds");
  fb_opts["renormalize_each_step"] = feedback->add_option(
      "--renormalize-each-step,--renormalize_each_step", fb.cfg.renormalize_each_step,
      "refresh min/max every step (true|false)");
  fb_opts["threads"] = feedback->add_option("--threads", fb.threads, "worker threads (0 = auto)");
  fb_opts["fail_fast"] = feedback->add_flag("--fail-fast", fb.fail_fast, "stop on first error");
  feedback->add_option("--config", fb.config_path, "JSON config; flags override");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "score a run against qrels");
  eval_cmd->add_option("--run", ev.run_path, "TREC run file")->required();
  eval_cmd->add_option("--qrels", ev.qrels_path, "TREC qrels")->required();
  eval_cmd->add_option("--metrics", ev.metrics, "comma list: recall@K,ndcg@K,mrr@K");
  eval_cmd->add_option("--compare", ev.compare_path, "second run for the paired t-test");
  eval_cmd->add_option("--json", ev.json_path, "also write the JSON report to this file");
  eval_cmd->add_option("--csv", ev.csv_path, "write per-query CSV here ('-' = stdout)");

  SynthArgs sy;
  std::map<std::string, const CLI::Option*> sy_opts;
  auto* synth = app.add_subcommand("synth", "generate the synthetic benchmark");
  synth->add_option("--out-dir", sy.out_dir, "output directory")->required();
  synth->add_option("--spec", sy.spec_path, "JSON spec; flags override");
  sy_opts["seed"] = synth->add_option("--seed", sy.spec.seed, "RNG seed");
  sy_opts["dim"] = synth->add_option("--dim", sy.spec.dim, "embedding dimension");
  sy_opts["n_passages"] =
      synth->add_option("--n-passages,--n_passages", sy.spec.n_passages, "background passages");
  sy_opts["n_queries"] = synth->add_option("--n-queries,--n_queries", sy.spec.n_queries, "queries");
  sy_opts["positives_per_query"] = synth->add_option(
      "--positives-per-query,--positives_per_query", sy.spec.positives_per_query,
      "relevant docs per query");
  sy_opts["clusters"] = synth->add_option("--clusters", sy.spec.clusters, "cluster count");
  sy_opts["cluster_spread"] = synth->add_option("--cluster-spread,--cluster_spread",
                                                sy.spec.cluster_spread, "background noise scale");
  sy_opts["query_offset"] = synth->add_option("--query-offset,--query_offset",
                                              sy.spec.query_offset, "anchor distance from center");
  sy_opts["positive_spread"] = synth->add_option(
      "--positive-spread,--positive_spread", sy.spec.positive_spread, "positive noise scale");

  ExportArgs ex;
  auto* export_cmd = app.add_subcommand("export-vectors", "dump vectors as CSV for plotting");
  export_cmd->add_option("--index", ex.index_path, "index or embeddings JSONL")->required();
  export_cmd->add_option("--queries", ex.queries_path, "query JSONL")->required();
  export_cmd->add_option("--updated-queries", ex.updated_path, "updated query JSONL");
  export_cmd->add_option("--out", ex.out_path, "output CSV")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (build->parsed()) return cmd_build_index(bi_embeddings, bi_out);
    if (feedback->parsed()) return cmd_feedback(fb, fb_opts);
    if (eval_cmd->parsed()) return cmd_eval(ev);
    if (synth->parsed()) return cmd_synth(sy, sy_opts);
    if (export_cmd->parsed()) return cmd_export_vectors(ex);
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::runtime_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return 1;
  }
  return 0;
}
