// setcomp: benchmark generation, retrieval, re-ranking and evaluation for
// set-compositional queries.

#include "setcomp/benchgen.hpp"
#include "setcomp/corpus.hpp"
#include "setcomp/error.hpp"
#include "setcomp/eval.hpp"
#include "setcomp/parallel.hpp"
#include "setcomp/pipeline.hpp"
#include "setcomp/rerank.hpp"
#include "setcomp/retrieval.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

namespace fs = std::filesystem;
using namespace setcomp;

namespace {

std::vector<SizeBucket> parse_buckets(const std::string& spec) {
    std::vector<SizeBucket> out;
    std::stringstream ss(spec);
    for (std::string part; std::getline(ss, part, ',');) {
        const auto dash = part.find('-');
        if (dash == std::string::npos) throw ConfigError("bucket must look like LO-HI: " + part);
        out.push_back({std::stoi(part.substr(0, dash)), std::stoi(part.substr(dash + 1))});
    }
    return out;
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    for (std::string part; std::getline(ss, part, ',');) {
        if (!part.empty()) out.push_back(part);
    }
    return out;
}

std::vector<int> parse_cutoffs(const std::string& s) {
    std::vector<int> out;
    for (const auto& p : split_list(s)) out.push_back(std::stoi(p));
    return out;
}

std::vector<EntityDoc> load_docs_or_throw(const fs::path& path, const SplitterConfig& splitter, int threads) {
    auto loaded = load_corpus(path, splitter, threads);
    if (loaded.skipped > 0) spdlog::warn("{}: {} malformed lines skipped", path.string(), loaded.skipped);
    return std::move(loaded.docs);
}

void print_bench_stats(const fs::path& dir) {
    const auto queries = read_queries(dir / "queries.jsonl");
    GenConfig gen;
    if (fs::exists(dir / "generation_report.json")) {
        std::ifstream in(dir / "generation_report.json");
        const auto j = nlohmann::json::parse(in);
        gen.buckets.clear();
        for (const auto& b : j.at("buckets")) gen.buckets.push_back({b[0].get<int>(), b[1].get<int>()});
    }
    std::map<std::string, std::vector<std::size_t>> sizes;
    for (const auto& q : queries) sizes[std::string(q.tmpl.name())].push_back(q.gold_size);

    fmt::print("{:<12} {:>6} {:>10}", "template", "n", "mean_gold");
    for (const auto& b : gen.buckets) fmt::print(" {:>9}", fmt::format("[{},{}]", b.lo, b.hi));
    fmt::print("\n");
    double total = 0.0;
    std::size_t count = 0;
    for (auto kind : kAllTemplates) {
        const auto& v = sizes[std::string(to_string(kind))];
        std::vector<int> fill(gen.buckets.size(), 0);
        double sum = 0.0;
        for (auto s : v) {
            sum += static_cast<double>(s);
            if (const int b = gen.bucket_of(s); b >= 0) ++fill[static_cast<std::size_t>(b)];
        }
        total += sum;
        count += v.size();
        fmt::print("{:<12} {:>6} {:>10.2f}", to_string(kind), v.size(), v.empty() ? 0.0 : sum / v.size());
        for (int f : fill) fmt::print(" {:>9}", f);
        fmt::print("\n");
    }
    fmt::print("{:<12} {:>6} {:>10.2f}\n", "all", count, count ? total / count : 0.0);
}

void print_corpus_stats(const fs::path& path, const SplitterConfig& splitter, int threads, int top) {
    const auto loaded = load_corpus(path, splitter, threads);
    const auto index = build_attribute_index(loaded.docs);
    fmt::print("documents: {}\nattributes: {}\nskipped_lines: {}\n", index.doc_count(), index.attribute_count(),
               loaded.skipped);
    std::vector<std::pair<std::size_t, std::string>> freq;
    for (const auto& a : index.attributes()) freq.emplace_back(index.postings(a).size(), a);
    std::sort(freq.begin(), freq.end(), [](const auto& x, const auto& y) {
        return x.first != y.first ? x.first > y.first : x.second < y.second;
    });
    fmt::print("top attributes:\n");
    for (std::size_t i = 0; i < freq.size() && static_cast<int>(i) < top; ++i) {
        fmt::print("  {:>6}  {}\n", freq[i].first, freq[i].second);
    }
}

}  // namespace

int main(int argc, char** argv) {
    spdlog::set_default_logger(spdlog::stderr_color_mt("setcomp"));

    CLI::App app{"Set-compositional retrieval benchmark toolkit"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_config("--config", "", "TOML config file; flags override it");
    int threads = 0;
    std::string log_level = "info";
    app.add_option("--threads", threads, "Worker threads (default: SETCOMP_THREADS or 1)");
    app.add_option("--log-level", log_level, "trace|debug|info|warn|error|off");
    bool split_final_and = false;
    app.add_flag("--split-final-and", split_final_and, "Split a bare \"A and B\" final list item");

    // corpus
    auto* corpus_cmd = app.add_subcommand("corpus", "Synthesize or inspect attribute-list corpora");
    corpus_cmd->require_subcommand(1);
    SynthConfig synth;
    fs::path synth_out;
    auto* synth_cmd = corpus_cmd->add_subcommand("synth", "Generate a synthetic corpus");
    synth_cmd->add_option("--entities", synth.n_entities)->capture_default_str();
    synth_cmd->add_option("--attributes", synth.n_attributes)->capture_default_str();
    synth_cmd->add_option("--skew", synth.popularity_skew)->capture_default_str();
    synth_cmd->add_option("--min-attrs", synth.min_attrs)->capture_default_str();
    synth_cmd->add_option("--max-attrs", synth.max_attrs)->capture_default_str();
    synth_cmd->add_option("--seed", synth.seed)->capture_default_str();
    synth_cmd->add_option("-o,--output", synth_out)->required();
    fs::path inspect_path;
    int inspect_top = 10;
    auto* inspect_cmd = corpus_cmd->add_subcommand("inspect", "Print corpus statistics");
    inspect_cmd->add_option("corpus", inspect_path)->required()->check(CLI::ExistingFile);
    inspect_cmd->add_option("--top", inspect_top)->capture_default_str();

    // bench
    auto* bench_cmd = app.add_subcommand("bench", "Generate or summarize a benchmark");
    bench_cmd->require_subcommand(1);
    GenConfig gen;
    fs::path gen_corpus, gen_out;
    std::string bucket_spec;
    auto* generate_cmd = bench_cmd->add_subcommand("generate", "Instantiate the seven templates");
    generate_cmd->add_option("--corpus", gen_corpus)->required()->check(CLI::ExistingFile);
    generate_cmd->add_option("--per-template", gen.per_template_limit)->capture_default_str();
    generate_cmd->add_option("--quota", gen.per_bucket_quota, "Per-bucket quota (0: limit / buckets)");
    generate_cmd->add_option("--max-attempts", gen.max_attempts, "Draw budget (0: 200 x limit)");
    generate_cmd->add_option("--buckets", bucket_spec, "e.g. 1-3,4-10,11-35,36-100,101-200");
    generate_cmd->add_option("--seed", gen.seed)->capture_default_str();
    generate_cmd->add_option("-o,--output", gen_out)->required();
    fs::path stats_dir;
    auto* stats_cmd = bench_cmd->add_subcommand("stats", "Per-template gold sizes and bucket fill");
    stats_cmd->add_option("outdir", stats_dir)->required()->check(CLI::ExistingDirectory);

    // search
    std::string model = "bm25";
    SearchParams search;
    fs::path search_corpus, search_queries_path, search_out;
    auto* search_cmd = app.add_subcommand("search", "First-stage retrieval to a TREC run file");
    search_cmd->add_option("--model", model)->check(CLI::IsMember({"bm25", "setcomp", "oracle"}))->capture_default_str();
    search_cmd->add_option("--corpus", search_corpus)->required()->check(CLI::ExistingFile);
    search_cmd->add_option("--queries", search_queries_path)->required()->check(CLI::ExistingFile);
    search_cmd->add_option("--k", search.k)->capture_default_str();
    search_cmd->add_option("--k1", search.bm25.k1)->capture_default_str();
    search_cmd->add_option("--b", search.bm25.b)->capture_default_str();
    search_cmd->add_option("--alpha", search.setcomp.alpha)->capture_default_str();
    search_cmd->add_option("-o,--output", search_out)->required();

    // pool
    auto* pool_cmd = app.add_subcommand("pool", "Curated re-ranking pools");
    pool_cmd->require_subcommand(1);
    fs::path pool_corpus, pool_queries, pool_qrels, pool_run, pool_out;
    int n_noise = 5, n_irrel = 5;
    std::uint64_t pool_seed = 42;
    auto* pool_build_cmd = pool_cmd->add_subcommand("build", "Gold + noise + irrelevant candidates");
    pool_build_cmd->add_option("--corpus", pool_corpus)->required()->check(CLI::ExistingFile);
    pool_build_cmd->add_option("--queries", pool_queries)->required()->check(CLI::ExistingFile);
    pool_build_cmd->add_option("--qrels", pool_qrels)->required()->check(CLI::ExistingFile);
    pool_build_cmd->add_option("--run", pool_run, "BM25 run file")->required()->check(CLI::ExistingFile);
    pool_build_cmd->add_option("--noise", n_noise)->capture_default_str();
    pool_build_cmd->add_option("--irrelevant", n_irrel)->capture_default_str();
    pool_build_cmd->add_option("--seed", pool_seed)->capture_default_str();
    pool_build_cmd->add_option("-o,--output", pool_out)->required();

    // rerank
    std::string method = "symbolic", scorer_spec = "exact:0.05", transport_spec;
    int timeout_ms = 30000, retries = 2, in_flight = 1;
    bool strict_protocol = false;
    fs::path rr_corpus, rr_queries, rr_pools, rr_out;
    auto* rerank_cmd = app.add_subcommand("rerank", "Re-rank curated pools");
    rerank_cmd->add_option("--method", method)->check(CLI::IsMember({"symbolic", "external"}))->capture_default_str();
    rerank_cmd->add_option("--scorer", scorer_spec, "exact:EPS | overlap[:EPS]")->capture_default_str();
    rerank_cmd->add_option("--transport", transport_spec, "subprocess:CMD | http:URL");
    rerank_cmd->add_option("--timeout-ms", timeout_ms)->capture_default_str();
    rerank_cmd->add_option("--retries", retries)->capture_default_str();
    rerank_cmd->add_option("--in-flight", in_flight)->capture_default_str();
    rerank_cmd->add_flag("--strict", strict_protocol, "Fail on malformed scorer responses");
    rerank_cmd->add_option("--corpus", rr_corpus)->required()->check(CLI::ExistingFile);
    rerank_cmd->add_option("--queries", rr_queries)->required()->check(CLI::ExistingFile);
    rerank_cmd->add_option("--pools", rr_pools)->required()->check(CLI::ExistingFile);
    rerank_cmd->add_option("-o,--output", rr_out)->required();

    // eval
    std::vector<fs::path> eval_runs;
    fs::path eval_qrels, eval_queries, eval_out;
    std::string cutoff_spec = "5,20,100", strata_spec = "template,depth,operator_family";
    bool strict_eval = false;
    auto* eval_cmd = app.add_subcommand("eval", "Recall@k, nDCG@k and MAP with stratification");
    eval_cmd->add_option("--run", eval_runs)->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--qrels", eval_qrels)->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--queries", eval_queries, "Queries JSONL (template metadata)")->check(CLI::ExistingFile);
    eval_cmd->add_option("--cutoffs", cutoff_spec)->capture_default_str();
    eval_cmd->add_option("--strata", strata_spec)->capture_default_str();
    eval_cmd->add_flag("--strict", strict_eval, "Error on run queries missing from qrels");
    eval_cmd->add_option("-o,--output", eval_out)->required();

    // pipeline
    auto* pipeline_cmd = app.add_subcommand("pipeline", "Run several stages end to end");
    pipeline_cmd->require_subcommand(1);
    PipelineConfig pcfg;
    std::string stage_spec = "synth,generate,search,pool,rerank,eval";
    std::string p_scorer = "exact:0.05", p_transport, p_cutoffs = "5,20,100", p_strata = "template,depth,operator_family",
                p_buckets;
    auto* run_cmd = pipeline_cmd->add_subcommand("run", "Execute stages in order");
    run_cmd->add_option("--stages", stage_spec)->capture_default_str();
    run_cmd->add_option("--outdir", pcfg.outdir)->capture_default_str();
    run_cmd->add_option("--corpus", pcfg.corpus);
    run_cmd->add_option("--queries", pcfg.queries);
    run_cmd->add_option("--qrels", pcfg.qrels);
    run_cmd->add_option("--seed", pcfg.seed)->capture_default_str();
    run_cmd->add_option("--entities", pcfg.synth.n_entities)->capture_default_str();
    run_cmd->add_option("--attributes", pcfg.synth.n_attributes)->capture_default_str();
    run_cmd->add_option("--skew", pcfg.synth.popularity_skew)->capture_default_str();
    run_cmd->add_option("--min-attrs", pcfg.synth.min_attrs)->capture_default_str();
    run_cmd->add_option("--max-attrs", pcfg.synth.max_attrs)->capture_default_str();
    run_cmd->add_option("--per-template", pcfg.gen.per_template_limit)->capture_default_str();
    run_cmd->add_option("--quota", pcfg.gen.per_bucket_quota);
    run_cmd->add_option("--max-attempts", pcfg.gen.max_attempts);
    run_cmd->add_option("--buckets", p_buckets);
    run_cmd->add_option("--k", pcfg.search.k)->capture_default_str();
    run_cmd->add_option("--k1", pcfg.search.bm25.k1)->capture_default_str();
    run_cmd->add_option("--b", pcfg.search.bm25.b)->capture_default_str();
    run_cmd->add_option("--alpha", pcfg.search.setcomp.alpha)->capture_default_str();
    run_cmd->add_option("--noise", pcfg.n_noise)->capture_default_str();
    run_cmd->add_option("--irrelevant", pcfg.n_irrel)->capture_default_str();
    run_cmd->add_option("--method", pcfg.rerank_method)->check(CLI::IsMember({"symbolic", "external"}));
    run_cmd->add_option("--scorer", p_scorer)->capture_default_str();
    run_cmd->add_option("--transport", p_transport);
    run_cmd->add_option("--cutoffs", p_cutoffs)->capture_default_str();
    run_cmd->add_option("--strata", p_strata)->capture_default_str();
    run_cmd->add_flag("--strict", pcfg.strict);

    CLI11_PARSE(app, argc, argv);

    spdlog::set_level(spdlog::level::from_str(log_level));
    const int nthreads = resolve_threads(threads);
    SplitterConfig splitter;
    splitter.split_bare_final_and = split_final_and;

    try {
        if (*synth_cmd) {
            const auto docs = synth_corpus(synth);
            write_corpus(synth_out, docs);
            write_provenance(synth_out, "synth",
                             {{"seed", synth.seed},
                              {"entities", synth.n_entities},
                              {"attributes", synth.n_attributes},
                              {"skew", synth.popularity_skew},
                              {"min_attrs", synth.min_attrs},
                              {"max_attrs", synth.max_attrs}},
                             {});
            spdlog::info("wrote {} entities to {}", docs.size(), synth_out.string());
        } else if (*inspect_cmd) {
            print_corpus_stats(inspect_path, splitter, nthreads, inspect_top);
        } else if (*generate_cmd) {
            if (!bucket_spec.empty()) gen.buckets = parse_buckets(bucket_spec);
            const auto docs = load_docs_or_throw(gen_corpus, splitter, nthreads);
            const auto index = build_attribute_index(docs);
            const auto bench = generate_benchmark(index, gen, nthreads);
            fs::create_directories(gen_out);
            write_queries(gen_out / "queries.jsonl", bench.queries);
            write_qrels(gen_out / "qrels.txt", bench.queries);
            write_generation_report(gen_out / "generation_report.json", bench, gen);
            const nlohmann::ordered_json params = {{"seed", gen.seed},
                                                   {"per_template_limit", gen.per_template_limit},
                                                   {"per_bucket_quota", gen.quota()},
                                                   {"max_attempts", gen.attempts()}};
            for (const char* f : {"queries.jsonl", "qrels.txt", "generation_report.json"}) {
                write_provenance(gen_out / f, "generate", params, {gen_corpus});
            }
            spdlog::info("wrote {} queries to {}", bench.queries.size(), gen_out.string());
        } else if (*stats_cmd) {
            print_bench_stats(stats_dir);
        } else if (*search_cmd) {
            const auto docs = load_docs_or_throw(search_corpus, splitter, nthreads);
            const auto queries = read_queries(search_queries_path);
            const auto run = search_queries(model, docs, queries, search, nthreads);
            write_run(search_out, run);
            write_provenance(search_out, "search",
                             {{"model", model},
                              {"k", search.k},
                              {"k1", search.bm25.k1},
                              {"b", search.bm25.b},
                              {"alpha", search.setcomp.alpha},
                              {"setcomp_and", "add"}},
                             {search_corpus, search_queries_path});
        } else if (*pool_build_cmd) {
            const auto docs = load_docs_or_throw(pool_corpus, splitter, nthreads);
            std::vector<std::string> ids;
            for (const auto& d : docs) ids.push_back(d.doc_id);
            std::sort(ids.begin(), ids.end());
            const auto pools = build_pools(read_queries(pool_queries), read_qrels(pool_qrels), read_run(pool_run), ids,
                                           n_noise, n_irrel, pool_seed, nthreads);
            write_pools(pool_out, pools);
            write_provenance(pool_out, "pool", {{"seed", pool_seed}, {"noise", n_noise}, {"irrelevant", n_irrel}},
                             {pool_corpus, pool_queries, pool_qrels, pool_run});
        } else if (*rerank_cmd) {
            const auto docs = load_docs_or_throw(rr_corpus, splitter, nthreads);
            const auto lookup = make_doc_lookup(docs);
            const auto queries = read_queries(rr_queries);
            const auto pools = read_pools(rr_pools);
            std::vector<Ranking> run;
            nlohmann::ordered_json params = {{"method", method}};
            if (method == "symbolic") {
                const auto scorer = PredicateScorer::parse(scorer_spec);
                run = rerank_symbolic(pools, queries, lookup, scorer, nthreads);
                params["scorer"] = scorer.describe();
            } else {
                if (transport_spec.empty()) throw ConfigError("--transport is required for --method external");
                auto cfg = ScorerProtocolConfig::parse(transport_spec);
                cfg.timeout = std::chrono::milliseconds(timeout_ms);
                cfg.retries = retries;
                cfg.strict = strict_protocol;
                cfg.in_flight = in_flight;
                ExternalScorer scorer(cfg);
                std::vector<std::string> warnings;
                run = rerank_external(pools, queries, lookup, scorer, &warnings);
                if (!warnings.empty()) spdlog::warn("external scorer: {} degraded calls", warnings.size());
                params["transport"] = transport_spec;
            }
            write_run(rr_out, run);
            write_provenance(rr_out, "rerank", params, {rr_corpus, rr_queries, rr_pools});
        } else if (*eval_cmd) {
            const auto qrels = read_qrels(eval_qrels);
            std::map<std::string, QueryMeta> meta;
            if (!eval_queries.empty()) meta = query_meta(read_queries(eval_queries));
            const auto cutoffs = parse_cutoffs(cutoff_spec);
            const auto strata = split_list(strata_spec);
            for (const auto& rf : eval_runs) {
                const auto run = read_run(rf);
                auto report = evaluate_run(run, qrels, cutoffs, strict_eval, nthreads);
                if (!meta.empty() && !strata.empty()) report = stratified_report(report, meta, strata);
                const auto dir = eval_runs.size() == 1 ? eval_out : eval_out / rf.stem();
                write_eval_outputs(dir, report, meta);
                const nlohmann::ordered_json params = {{"cutoffs", cutoffs}, {"strata", strata}};
                for (const char* f : {"report.csv", "strata.csv", "report.md"}) {
                    write_provenance(dir / f, "eval", params, {rf, eval_qrels});
                }
                fmt::print("{}", [&] {
                    std::string line = rf.filename().string();
                    for (const auto& n : report.metric_names()) line += fmt::format("  {}={:.4f}", n, report.aggregates.at(n));
                    return line + "\n";
                }());
            }
        } else if (*run_cmd) {
            pcfg.threads = nthreads;
            pcfg.splitter = splitter;
            if (!p_buckets.empty()) pcfg.gen.buckets = parse_buckets(p_buckets);
            pcfg.scorer = PredicateScorer::parse(p_scorer);
            if (!p_transport.empty()) pcfg.transport = ScorerProtocolConfig::parse(p_transport);
            pcfg.cutoffs = parse_cutoffs(p_cutoffs);
            pcfg.strata = split_list(p_strata);
            return run_pipeline(pcfg, split_list(stage_spec));
        }
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return 1;
    }
    return 0;
}
