#pragma once

#include "setcomp/benchgen.hpp"
#include "setcomp/corpus.hpp"
#include "setcomp/expr.hpp"
#include "setcomp/retrieval.hpp"

#include <chrono>
#include <filesystem>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace setcomp {

// ---- candidate pools ---------------------------------------------------------

enum class Provenance { Gold, Noise, Irrelevant };

std::string_view to_string(Provenance p);
Provenance provenance_from_string(std::string_view s);

struct PoolEntry {
    std::string doc_id;
    Provenance provenance = Provenance::Gold;
    std::optional<int> bm25_rank;  // absent for random fills and unretrieved gold

    friend bool operator==(const PoolEntry&, const PoolEntry&) = default;
};

struct CandidatePool {
    std::string query_id;
    std::vector<PoolEntry> candidates;

    std::size_t count(Provenance p) const;
};

/// Per-query generator so pools do not depend on processing order.
std::mt19937_64 pool_stream(std::uint64_t seed, std::string_view query_id);

/// Gold docs + the top n_noise non-gold run entries + the last n_irrel non-gold
/// run entries. Shortfalls are drawn uniformly from non-gold corpus docs, and
/// the pool is shuffled before it is returned.
CandidatePool build_candidate_pool(const std::string& query_id, std::span<const std::string> gold,
                                   const Ranking& bm25_run, std::span<const std::string> corpus_doc_ids,
                                   int n_noise, int n_irrel, std::mt19937_64& rng);

void write_pools(const std::filesystem::path& path, std::span<const CandidatePool> pools);
std::vector<CandidatePool> read_pools(const std::filesystem::path& path);

// ---- symbolic re-ranking -----------------------------------------------------

struct PredicateScorer {
    enum class Mode { ExactAttr, LexicalOverlap };
    Mode mode = Mode::ExactAttr;
    double epsilon = 0.05;

    /// "exact:0.05", "exact", "overlap", "overlap:0.01".
    static PredicateScorer parse(std::string_view spec);
    std::string describe() const;
};

double predicate_plausibility(std::string_view atom, const EntityDoc& doc, const PredicateScorer& scorer);

/// Bottom-up aggregate: Atom -> plausibility, And -> product, Or -> noisy-or,
/// Not -> complement.
double symbolic_score(const LogicalExpr& expr, const EntityDoc& doc, const PredicateScorer& scorer);

using DocLookup = std::unordered_map<std::string, const EntityDoc*>;
DocLookup make_doc_lookup(std::span<const EntityDoc> docs);

Ranking symbolic_rerank(const LogicalExpr& expr, const CandidatePool& pool, const DocLookup& docs,
                        const PredicateScorer& scorer);

// ---- external pointwise scorer --------------------------------------------------

/// Prompt for LLM-backed scorers implementing the wire protocol.
std::string relevance_prompt(std::string_view query_text, std::string_view document_text);

struct ScorerProtocolConfig {
    enum class Transport { Subprocess, Http };
    Transport transport = Transport::Subprocess;
    std::string target;  // shell command or base URL
    std::chrono::milliseconds timeout{30000};
    int retries = 2;
    bool strict = false;
    int in_flight = 1;  // concurrent calls (http only)

    /// "subprocess:CMD" or "http:URL".
    static ScorerProtocolConfig parse(std::string_view spec);
    void validate() const;
};

/// One request/response exchange. Implementations throw TransportError when the
/// endpoint is unreachable and return std::nullopt on timeout.
class ScorerTransport {
public:
    virtual ~ScorerTransport() = default;
    virtual std::optional<std::string> exchange(const std::string& request) = 0;
};

std::unique_ptr<ScorerTransport> make_transport(const ScorerProtocolConfig& cfg);

struct ExternalRerankResult {
    Ranking ranking;
    std::vector<std::string> warnings;
};

/// Holds the transport (and its child process) across queries.
class ExternalScorer {
public:
    explicit ExternalScorer(ScorerProtocolConfig cfg);
    ~ExternalScorer();
    ExternalScorer(const ExternalScorer&) = delete;
    ExternalScorer& operator=(const ExternalScorer&) = delete;

    const ScorerProtocolConfig& config() const { return cfg_; }

    /// Scores 0..4 per candidate; ties by pool BM25 rank, then doc_id.
    ExternalRerankResult rerank(const CandidatePool& pool, std::string_view query_text, const DocLookup& docs);

private:
    int score_one(const std::string& request, const std::string& qid, const std::string& docid,
                  ScorerTransport& transport, std::vector<std::string>& warnings);

    ScorerProtocolConfig cfg_;
    std::unique_ptr<ScorerTransport> transport_;
};

ExternalRerankResult external_rerank(const CandidatePool& pool, std::string_view query_text,
                                     const DocLookup& docs, ExternalScorer& scorer);

}  // namespace setcomp
