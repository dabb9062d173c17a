#include "setcomp/pipeline.hpp"

#include "setcomp/error.hpp"
#include "setcomp/text.hpp"
#include "setcomp/parallel.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <fstream>
#include <iterator>
#include <unordered_map>

namespace setcomp {

namespace fs = std::filesystem;

LogicalExpr query_expression(const BenchQuery& q) {
    if (static_cast<int>(q.attributes.size()) == q.tmpl.depth()) return q.tmpl.expression(q.attributes);
    return parse_query_text(q.text);
}

std::map<std::string, QueryMeta> query_meta(std::span<const BenchQuery> queries) {
    std::map<std::string, QueryMeta> meta;
    for (const auto& q : queries) {
        meta[q.query_id] = {std::string(q.tmpl.name()), q.tmpl.depth(),
                            std::string(to_string(q.tmpl.operator_family()))};
    }
    return meta;
}

std::vector<Ranking> search_queries(const std::string& model, std::span<const EntityDoc> docs,
                                    std::span<const BenchQuery> queries, const SearchParams& params,
                                    int threads) {
    std::vector<Ranking> out(queries.size());
    if (model == "oracle") {
        const auto index = build_attribute_index(docs);
        parallel_for(queries.size(), threads, [&](std::size_t i) {
            try {
                out[i] = oracle_search(query_expression(queries[i]), index, queries[i].query_id);
            } catch (const UnknownAttribute& e) {
                spdlog::warn("oracle: query {}: {}", queries[i].query_id, e.what());
                out[i] = Ranking{queries[i].query_id, {}, "oracle"};
            }
        });
        return out;
    }
    if (model != "bm25" && model != "setcomp") throw ConfigError("unknown model: " + model);
    if (params.k < 1) throw ConfigError("k must be >= 1");
    const auto index = Bm25Index::build(docs, params.bm25);
    const auto bm25_tag = fmt::format("bm25-k1_{:g}-b_{:g}", params.bm25.k1, params.bm25.b);
    parallel_for(queries.size(), threads, [&](std::size_t i) {
        const auto& q = queries[i];
        if (model == "bm25") {
            out[i] = bm25_search(index, q.text, params.k, q.query_id, bm25_tag);
        } else {
            out[i] = setcomp_search(index, query_expression(q), params.k, params.setcomp, q.query_id);
        }
    });
    return out;
}

std::vector<CandidatePool> build_pools(std::span<const BenchQuery> queries, const Qrels& qrels,
                                       std::span<const Ranking> bm25_run,
                                       std::span<const std::string> corpus_doc_ids, int n_noise,
                                       int n_irrel, std::uint64_t seed, int threads) {
    std::unordered_map<std::string, const Ranking*> runs;
    for (const auto& r : bm25_run) runs.emplace(r.query_id, &r);
    std::vector<CandidatePool> pools(queries.size());
    const Ranking empty;
    parallel_for(queries.size(), threads, [&](std::size_t i) {
        const auto& qid = queries[i].query_id;
        auto g = qrels.find(qid);
        if (g == qrels.end()) throw MissingMetadata("no qrels for query " + qid);
        const std::vector<std::string> gold(g->second.begin(), g->second.end());
        auto r = runs.find(qid);
        if (r == runs.end()) spdlog::warn("pool {}: query absent from BM25 run", qid);
        auto rng = pool_stream(seed, qid);
        pools[i] = build_candidate_pool(qid, gold, r == runs.end() ? empty : *r->second, corpus_doc_ids,
                                        n_noise, n_irrel, rng);
    });
    return pools;
}

namespace {

std::unordered_map<std::string, const BenchQuery*> by_id(std::span<const BenchQuery> queries) {
    std::unordered_map<std::string, const BenchQuery*> m;
    for (const auto& q : queries) m.emplace(q.query_id, &q);
    return m;
}

const BenchQuery& find_query(const std::unordered_map<std::string, const BenchQuery*>& m, const std::string& id) {
    auto it = m.find(id);
    if (it == m.end()) throw MissingMetadata("pool query not in queries file: " + id);
    return *it->second;
}

}  // namespace

std::vector<Ranking> rerank_symbolic(std::span<const CandidatePool> pools, std::span<const BenchQuery> queries,
                                     const DocLookup& docs, const PredicateScorer& scorer, int threads) {
    const auto lookup = by_id(queries);
    std::vector<Ranking> out(pools.size());
    parallel_for(pools.size(), threads, [&](std::size_t i) {
        const auto& q = find_query(lookup, pools[i].query_id);
        out[i] = symbolic_rerank(query_expression(q), pools[i], docs, scorer);
    });
    return out;
}

std::vector<Ranking> rerank_external(std::span<const CandidatePool> pools, std::span<const BenchQuery> queries,
                                     const DocLookup& docs, ExternalScorer& scorer,
                                     std::vector<std::string>* warnings) {
    const auto lookup = by_id(queries);
    std::vector<Ranking> out;
    out.reserve(pools.size());
    for (const auto& pool : pools) {
        auto result = external_rerank(pool, find_query(lookup, pool.query_id).text, docs, scorer);
        if (warnings) std::move(result.warnings.begin(), result.warnings.end(), std::back_inserter(*warnings));
        out.push_back(std::move(result.ranking));
    }
    return out;
}

void write_eval_outputs(const fs::path& outdir, const EvalReport& report,
                        const std::map<std::string, QueryMeta>& meta) {
    fs::create_directories(outdir);
    write_report_csv(outdir / "report.csv", report, meta);
    write_strata_csv(outdir / "strata.csv", report);
    write_report_md(outdir / "report.md", report);
}

std::string file_digest(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[1 << 16];
    while (in.read(buf, sizeof buf) || in.gcount() > 0) {
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ULL;
        }
    }
    return fmt::format("{:016x}", h);
}

void write_provenance(const fs::path& artifact, const std::string& stage, const nlohmann::ordered_json& params,
                      const std::vector<fs::path>& inputs) {
    nlohmann::ordered_json j;
    j["artifact"] = artifact.filename().string();
    j["stage"] = stage;
    j["params"] = params;
    auto& in = j["inputs"] = nlohmann::ordered_json::array();
    for (const auto& p : inputs) {
        in.push_back({{"file", p.filename().string()}, {"fnv1a64", file_digest(p)}});
    }
    if (fs::exists(artifact) && fs::is_regular_file(artifact)) j["fnv1a64"] = file_digest(artifact);
    auto out = open_output(artifact.string() + ".meta.json", "provenance");
    out << j.dump(2) << '\n';
}

// ---- pipeline -------------------------------------------------------------------

namespace {

struct Paths {
    fs::path corpus, queries, qrels, runs, pools, eval;
};

Paths resolve(const PipelineConfig& cfg) {
    Paths p;
    p.corpus = cfg.corpus.empty() ? cfg.outdir / "corpus.jsonl" : cfg.corpus;
    p.queries = cfg.queries.empty() ? cfg.outdir / "queries.jsonl" : cfg.queries;
    p.qrels = cfg.qrels.empty() ? cfg.outdir / "qrels.txt" : cfg.qrels;
    p.runs = cfg.outdir / "runs";
    p.pools = cfg.outdir / "pools.jsonl";
    p.eval = cfg.outdir / "eval";
    return p;
}

void require(const fs::path& p, const char* what) {
    if (!fs::exists(p)) throw IoError(std::string(what) + " not found: " + p.string());
}

std::vector<EntityDoc> load_docs(const fs::path& path, const PipelineConfig& cfg, int threads) {
    require(path, "corpus");
    auto loaded = load_corpus(path, cfg.splitter, threads);
    if (loaded.skipped > 0) spdlog::warn("{}: {} malformed lines skipped", path.string(), loaded.skipped);
    return std::move(loaded.docs);
}

std::vector<BenchQuery> load_queries(const fs::path& path) {
    require(path, "queries");
    return read_queries(path);
}

nlohmann::ordered_json search_params_json(const PipelineConfig& cfg) {
    return {{"k", cfg.search.k},
            {"k1", cfg.search.bm25.k1},
            {"b", cfg.search.bm25.b},
            {"alpha", cfg.search.setcomp.alpha},
            {"setcomp_and", "add"}};
}

void stage_synth(const PipelineConfig& cfg, const Paths& p) {
    auto synth = cfg.synth;
    synth.seed = cfg.seed;
    const auto docs = synth_corpus(synth);
    write_corpus(p.corpus, docs);
    write_provenance(p.corpus, "synth",
                     {{"seed", synth.seed},
                      {"entities", synth.n_entities},
                      {"attributes", synth.n_attributes},
                      {"skew", synth.popularity_skew},
                      {"min_attrs", synth.min_attrs},
                      {"max_attrs", synth.max_attrs}},
                     {});
    spdlog::info("synth: wrote {} entities to {}", docs.size(), p.corpus.string());
}

void stage_generate(const PipelineConfig& cfg, const Paths& p, int threads) {
    const auto docs = load_docs(p.corpus, cfg, threads);
    const auto index = build_attribute_index(docs);
    auto gen = cfg.gen;
    gen.seed = cfg.seed;
    const auto bench = generate_benchmark(index, gen, threads);
    write_queries(p.queries, bench.queries);
    write_qrels(p.qrels, bench.queries);
    const auto report_path = cfg.outdir / "generation_report.json";
    write_generation_report(report_path, bench, gen);
    nlohmann::ordered_json params = {{"seed", gen.seed},
                                     {"per_template_limit", gen.per_template_limit},
                                     {"per_bucket_quota", gen.quota()},
                                     {"max_attempts", gen.attempts()}};
    for (const auto& out : {p.queries, p.qrels, report_path}) {
        write_provenance(out, "generate", params, {p.corpus});
    }
    spdlog::info("generate: {} queries", bench.queries.size());
}

void stage_search(const PipelineConfig& cfg, const Paths& p, int threads) {
    const auto docs = load_docs(p.corpus, cfg, threads);
    const auto queries = load_queries(p.queries);
    fs::create_directories(p.runs);
    for (const std::string model : {"bm25", "setcomp", "oracle"}) {
        const auto run = search_queries(model, docs, queries, cfg.search, threads);
        const auto path = p.runs / (model + ".trec");
        write_run(path, run);
        auto params = search_params_json(cfg);
        params["model"] = model;
        write_provenance(path, "search", params, {p.corpus, p.queries});
        spdlog::info("search: {} -> {}", model, path.string());
    }
}

void stage_pool(const PipelineConfig& cfg, const Paths& p, int threads) {
    const auto docs = load_docs(p.corpus, cfg, threads);
    const auto queries = load_queries(p.queries);
    require(p.qrels, "qrels");
    const auto qrels = read_qrels(p.qrels);
    const auto bm25_path = p.runs / "bm25.trec";
    require(bm25_path, "bm25 run");
    const auto run = read_run(bm25_path);
    std::vector<std::string> ids;
    ids.reserve(docs.size());
    for (const auto& d : docs) ids.push_back(d.doc_id);
    std::sort(ids.begin(), ids.end());
    const auto pools = build_pools(queries, qrels, run, ids, cfg.n_noise, cfg.n_irrel, cfg.seed, threads);
    write_pools(p.pools, pools);
    write_provenance(p.pools, "pool", {{"seed", cfg.seed}, {"noise", cfg.n_noise}, {"irrelevant", cfg.n_irrel}},
                     {p.corpus, p.queries, p.qrels, bm25_path});
    spdlog::info("pool: {} pools", pools.size());
}

void stage_rerank(const PipelineConfig& cfg, const Paths& p, int threads) {
    const auto docs = load_docs(p.corpus, cfg, threads);
    const auto lookup = make_doc_lookup(docs);
    const auto queries = load_queries(p.queries);
    require(p.pools, "pools");
    const auto pools = read_pools(p.pools);
    fs::create_directories(p.runs);
    std::vector<Ranking> run;
    nlohmann::ordered_json params = {{"method", cfg.rerank_method}};
    if (cfg.rerank_method == "symbolic") {
        run = rerank_symbolic(pools, queries, lookup, cfg.scorer, threads);
        params["scorer"] = cfg.scorer.describe();
    } else if (cfg.rerank_method == "external") {
        if (!cfg.transport) throw ConfigError("external rerank needs a transport");
        ExternalScorer scorer(*cfg.transport);
        run = rerank_external(pools, queries, lookup, scorer);
        params["transport"] = cfg.transport->transport == ScorerProtocolConfig::Transport::Http ? "http" : "subprocess";
        params["target"] = cfg.transport->target;
    } else {
        throw ConfigError("unknown rerank method: " + cfg.rerank_method);
    }
    const auto path = p.runs / ("rerank-" + cfg.rerank_method + ".trec");
    write_run(path, run);
    write_provenance(path, "rerank", params, {p.corpus, p.queries, p.pools});
}

void stage_eval(const PipelineConfig& cfg, const Paths& p, int threads) {
    require(p.qrels, "qrels");
    const auto qrels = read_qrels(p.qrels);
    std::map<std::string, QueryMeta> meta;
    if (fs::exists(p.queries)) meta = query_meta(load_queries(p.queries));
    require(p.runs, "runs directory");
    std::vector<fs::path> run_files;
    for (const auto& entry : fs::directory_iterator(p.runs)) {
        if (entry.path().extension() == ".trec") run_files.push_back(entry.path());
    }
    std::sort(run_files.begin(), run_files.end());
    for (const auto& rf : run_files) {
        const auto run = read_run(rf);
        // Pools only cover their own queries; score re-ranked runs over those.
        Qrels subset;
        const bool reranked = rf.stem().string().starts_with("rerank-");
        if (reranked) {
            for (const auto& r : run) {
                if (auto it = qrels.find(r.query_id); it != qrels.end()) subset.insert(*it);
            }
        }
        auto report = evaluate_run(run, reranked ? subset : qrels, cfg.cutoffs, cfg.strict, threads);
        bool covered = !cfg.strata.empty();
        for (const auto& [qid, _] : report.per_query) covered = covered && meta.count(qid) != 0;
        if (covered) report = stratified_report(report, meta, cfg.strata);
        const auto dir = p.eval / rf.stem();
        write_eval_outputs(dir, report, meta);
        nlohmann::ordered_json params = {{"cutoffs", cfg.cutoffs}, {"strata", cfg.strata}};
        for (const auto* name : {"report.csv", "strata.csv", "report.md"}) {
            write_provenance(dir / name, "eval", params, {rf, p.qrels});
        }
        spdlog::info("eval: {} -> {}", rf.filename().string(), dir.string());
    }
}

}  // namespace

void run_pipeline_or_throw(const PipelineConfig& cfg, const std::vector<std::string>& stages) {
    for (const auto& s : stages) {
        if (std::find(kPipelineStages.begin(), kPipelineStages.end(), s) == kPipelineStages.end()) {
            throw ConfigError("unknown stage: " + s);
        }
    }
    if (stages.empty()) return;
    const int threads = resolve_threads(cfg.threads);
    const auto paths = resolve(cfg);
    fs::create_directories(cfg.outdir);
    for (const auto& s : stages) {
        try {
            if (s == "synth") stage_synth(cfg, paths);
            else if (s == "generate") stage_generate(cfg, paths, threads);
            else if (s == "search") stage_search(cfg, paths, threads);
            else if (s == "pool") stage_pool(cfg, paths, threads);
            else if (s == "rerank") stage_rerank(cfg, paths, threads);
            else if (s == "eval") stage_eval(cfg, paths, threads);
        } catch (const std::exception& e) {
            throw Error("stage " + s + ": " + e.what());
        }
    }
}

int run_pipeline(const PipelineConfig& cfg, const std::vector<std::string>& stages) {
    try {
        run_pipeline_or_throw(cfg, stages);
        return 0;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return 1;
    }
}

}  // namespace setcomp
