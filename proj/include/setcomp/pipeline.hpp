#pragma once

#include "setcomp/benchgen.hpp"
#include "setcomp/corpus.hpp"
#include "setcomp/eval.hpp"
#include "setcomp/rerank.hpp"
#include "setcomp/retrieval.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace setcomp {

struct SearchParams {
    std::size_t k = 1000;
    Bm25Params bm25;
    SetCompConfig setcomp;
};

/// Expression from template metadata when present, else parsed from the text.
LogicalExpr query_expression(const BenchQuery& q);

std::map<std::string, QueryMeta> query_meta(std::span<const BenchQuery> queries);

/// model: "bm25" | "setcomp" | "oracle". Output order follows the queries.
std::vector<Ranking> search_queries(const std::string& model, std::span<const EntityDoc> docs,
                                    std::span<const BenchQuery> queries, const SearchParams& params,
                                    int threads = 1);

std::vector<CandidatePool> build_pools(std::span<const BenchQuery> queries, const Qrels& qrels,
                                       std::span<const Ranking> bm25_run,
                                       std::span<const std::string> corpus_doc_ids, int n_noise,
                                       int n_irrel, std::uint64_t seed, int threads = 1);

std::vector<Ranking> rerank_symbolic(std::span<const CandidatePool> pools, std::span<const BenchQuery> queries,
                                     const DocLookup& docs, const PredicateScorer& scorer, int threads = 1);

std::vector<Ranking> rerank_external(std::span<const CandidatePool> pools, std::span<const BenchQuery> queries,
                                     const DocLookup& docs, ExternalScorer& scorer,
                                     std::vector<std::string>* warnings = nullptr);

/// report.csv, strata.csv and report.md under outdir.
void write_eval_outputs(const std::filesystem::path& outdir, const EvalReport& report,
                        const std::map<std::string, QueryMeta>& meta);

/// Provenance sidecar "<artifact>.meta.json". Inputs are recorded by file
/// name and content hash so the sidecar does not depend on directory layout.
void write_provenance(const std::filesystem::path& artifact, const std::string& stage,
                      const nlohmann::ordered_json& params,
                      const std::vector<std::filesystem::path>& inputs);

/// FNV-1a 64 of a file's bytes, hex encoded.
std::string file_digest(const std::filesystem::path& path);

struct PipelineConfig {
    std::filesystem::path outdir = "out";
    std::filesystem::path corpus;   // default: outdir/corpus.jsonl
    std::filesystem::path queries;  // default: outdir/queries.jsonl
    std::filesystem::path qrels;    // default: outdir/qrels.txt
    SplitterConfig splitter;
    SynthConfig synth;
    GenConfig gen;
    SearchParams search;
    int n_noise = 5;
    int n_irrel = 5;
    std::string rerank_method = "symbolic";
    PredicateScorer scorer;
    std::optional<ScorerProtocolConfig> transport;
    std::vector<int> cutoffs = kDefaultCutoffs;
    std::vector<std::string> strata = {"template", "depth", "operator_family"};
    std::uint64_t seed = 42;
    int threads = 1;
    bool strict = false;
};

inline const std::vector<std::string> kPipelineStages = {"synth", "generate", "search", "pool", "rerank", "eval"};

/// Runs the stages in the given order. Returns 0 on success; on failure logs
/// "stage <name>: <error>" and returns 1.
int run_pipeline(const PipelineConfig& cfg, const std::vector<std::string>& stages);

/// Throwing variant of run_pipeline.
void run_pipeline_or_throw(const PipelineConfig& cfg, const std::vector<std::string>& stages);

}  // namespace setcomp
