#pragma once

#include "setcomp/retrieval.hpp"

#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace setcomp {

/// query_id -> relevant doc ids (binary relevance).
using Qrels = std::map<std::string, std::set<std::string>>;

/// Accepts TREC qrels ("qid 0 doc rel"), BEIR TSV ("qid doc score", optional
/// header) and BEIR JSONL ({"query-id","corpus-id","score"}). Only positive
/// relevance is kept.
Qrels read_qrels(const std::filesystem::path& path);

double recall_at_k(const Ranking& ranking, const std::set<std::string>& gold, std::size_t k);
double ndcg_at_k(const Ranking& ranking, const std::set<std::string>& gold, std::size_t k);
/// Over the full ranking depth.
double average_precision(const Ranking& ranking, const std::set<std::string>& gold);

struct QueryMeta {
    std::string template_name;
    int depth = 0;
    std::string operator_family;
};

struct Stratum {
    std::string key;    // "template", "depth", "operator_family"
    std::string value;  // e.g. "Inter2", "3"
    std::size_t count = 0;
    std::map<std::string, double> means;
};

struct EvalReport {
    std::string run_tag;
    std::vector<int> cutoffs;
    /// query_id -> metric name ("recall@5", "ndcg@20", "ap") -> value.
    std::map<std::string, std::map<std::string, double>> per_query;
    std::map<std::string, double> aggregates;
    std::vector<Stratum> strata;
    std::vector<std::string> warnings;

    /// Metric names in report column order.
    std::vector<std::string> metric_names() const;
};

inline const std::vector<int> kDefaultCutoffs = {5, 20, 100};

/// Every qrels query is scored (absent from the run -> zeros). Run queries
/// missing from qrels are skipped with a warning, or raise
/// StrictMissingQrels when strict.
EvalReport evaluate_run(std::span<const Ranking> run, const Qrels& qrels,
                        const std::vector<int>& cutoffs = kDefaultCutoffs, bool strict = false,
                        int threads = 1);

EvalReport stratified_report(const EvalReport& report, const std::map<std::string, QueryMeta>& meta,
                             const std::vector<std::string>& keys);

void write_report_csv(const std::filesystem::path& path, const EvalReport& report,
                      const std::map<std::string, QueryMeta>& meta);
void write_strata_csv(const std::filesystem::path& path, const EvalReport& report);
/// Template x metric table, 4 decimals.
void write_report_md(const std::filesystem::path& path, const EvalReport& report);

}  // namespace setcomp
