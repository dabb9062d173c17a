#pragma once

#include "setcomp/corpus.hpp"
#include "setcomp/expr.hpp"

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace setcomp {

/// Lowercases and splits on every ASCII non-alphanumeric byte. Bytes >= 0x80
/// are kept inside tokens so UTF-8 sequences survive intact.
std::vector<std::string> tokenize(std::string_view text);

struct Bm25Params {
    double k1 = 0.9;
    double b = 0.4;
};

struct Posting {
    DocNo doc = 0;
    std::uint32_t tf = 0;
    double weight = 0.0;  // idf(t) * saturated tf
};

/// Frozen BM25 index. Per-term document weights are precomputed:
///   idf(t)   = ln(1 + (N - df + 0.5) / (df + 0.5))
///   w(t, d)  = idf(t) * tf * (k1 + 1) / (tf + k1 * (1 - b + b * |d| / avgdl))
class Bm25Index {
public:
    static Bm25Index build(std::span<const EntityDoc> corpus, Bm25Params params = {});

    std::size_t doc_count() const { return doc_ids_.size(); }
    double avg_doc_length() const { return avg_doc_length_; }
    const Bm25Params& params() const { return params_; }
    const std::vector<std::string>& doc_ids() const { return doc_ids_; }
    const std::string& doc_id(DocNo d) const { return doc_ids_.at(d); }
    std::uint32_t doc_length(DocNo d) const { return doc_lengths_.at(d); }

    /// Empty for unknown terms.
    std::span<const Posting> postings(std::string_view term) const;
    std::size_t df(std::string_view term) const { return postings(term).size(); }
    /// 0 for unknown terms.
    double idf(std::string_view term) const;
    /// 0 when the term does not occur in the document.
    double weight(std::string_view term, DocNo d) const;

private:
    Bm25Params params_;
    std::vector<std::string> doc_ids_;
    std::vector<std::uint32_t> doc_lengths_;
    double avg_doc_length_ = 0.0;
    std::unordered_map<std::string, std::size_t> slot_;
    std::vector<std::vector<Posting>> lists_;
    std::vector<double> idf_;
};

/// Term -> weight. Zero weights are never stored.
struct SparseVector {
    std::map<std::string, double> weights;

    void add(const std::string& term, double w);
    SparseVector& operator+=(const SparseVector& other);
    SparseVector scaled(double factor) const;
    bool empty() const { return weights.empty(); }

    friend bool operator==(const SparseVector&, const SparseVector&) = default;
};

/// Token-count vector of a text.
SparseVector term_counts(std::string_view text);

struct RankedDoc {
    std::string doc_id;
    double score = 0.0;
    int rank = 0;

    friend bool operator==(const RankedDoc&, const RankedDoc&) = default;
};

struct Ranking {
    std::string query_id;
    std::vector<RankedDoc> entries;
    std::string run_tag;
};

/// Orders (doc_id, score) pairs by score descending, doc_id ascending, and
/// assigns ranks from 1.
Ranking make_ranking(std::string query_id, std::vector<std::pair<std::string, double>> scored,
                     std::string run_tag, std::size_t k = static_cast<std::size_t>(-1));

/// Exact dot-product scoring of a query vector against BM25 document weights.
/// Only documents sharing at least one query term are ranked.
Ranking score_query_vector(const Bm25Index& index, const SparseVector& query, std::size_t k,
                           std::string query_id, std::string run_tag);

Ranking bm25_search(const Bm25Index& index, std::string_view query_text, std::size_t k,
                    std::string query_id = {}, std::string run_tag = "bm25");

/// Inverse of render_query_text. Throws UnrecognizedTemplate.
LogicalExpr parse_query_text(std::string_view text);

struct SetCompConfig {
    double alpha = 1.0;  // negation weight
    std::size_t top_k = 1000;

    void validate() const;
    std::string run_tag() const;
};

/// Atom -> token counts of the attribute; And/Or -> sum; Not -> -alpha * child.
SparseVector compose_query_vector(const LogicalExpr& expr, const SetCompConfig& cfg);

Ranking setcomp_search(const Bm25Index& index, const LogicalExpr& expr, std::size_t k,
                       const SetCompConfig& cfg, std::string query_id = {});

/// Exact set evaluation; every member scores 1.0, ordered by doc_id.
Ranking oracle_search(const LogicalExpr& expr, const AttributeIndex& index, std::string query_id = {});

// ---- TREC run files ---------------------------------------------------------

/// "query_id Q0 doc_id rank score run_tag", scores with 6 decimals.
void write_run(const std::filesystem::path& path, std::span<const Ranking> rankings);
std::string format_run(std::span<const Ranking> rankings);
/// Groups lines by query (first-appearance order). Entries are ordered by
/// score descending, then the file's rank column, then doc_id.
std::vector<Ranking> read_run(const std::filesystem::path& path);

}  // namespace setcomp
