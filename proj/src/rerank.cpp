#include "setcomp/rerank.hpp"

#include "setcomp/error.hpp"
#include "setcomp/text.hpp"
#include "setcomp/parallel.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <fstream>
#include <limits>
#include <set>
#include <unordered_set>

namespace setcomp {

std::string_view to_string(Provenance p) {
    switch (p) {
        case Provenance::Gold: return "gold";
        case Provenance::Noise: return "noise";
        case Provenance::Irrelevant: return "irrelevant";
    }
    return "?";
}

Provenance provenance_from_string(std::string_view s) {
    if (s == "gold") return Provenance::Gold;
    if (s == "noise") return Provenance::Noise;
    if (s == "irrelevant") return Provenance::Irrelevant;
    throw ParseError("unknown provenance: " + std::string(s));
}

std::size_t CandidatePool::count(Provenance p) const {
    return static_cast<std::size_t>(std::count_if(candidates.begin(), candidates.end(),
                                                  [p](const PoolEntry& e) { return e.provenance == p; }));
}

std::mt19937_64 pool_stream(std::uint64_t seed, std::string_view query_id) {
    // FNV-1a keeps the stream a pure function of (seed, query_id).
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const char c : query_id) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
    return std::mt19937_64(seq);
}

CandidatePool build_candidate_pool(const std::string& query_id, std::span<const std::string> gold,
                                   const Ranking& bm25_run, std::span<const std::string> corpus_doc_ids,
                                   int n_noise, int n_irrel, std::mt19937_64& rng) {
    const std::unordered_set<std::string> gold_set(gold.begin(), gold.end());
    std::unordered_map<std::string, int> run_rank;
    std::vector<const RankedDoc*> non_gold;
    for (const auto& e : bm25_run.entries) {
        run_rank.emplace(e.doc_id, e.rank);
        if (gold_set.count(e.doc_id) == 0) non_gold.push_back(&e);
    }

    CandidatePool pool;
    pool.query_id = query_id;
    std::unordered_set<std::string> chosen;
    for (const auto& g : gold) {
        if (!chosen.insert(g).second) continue;
        PoolEntry entry{g, Provenance::Gold, std::nullopt};
        if (auto it = run_rank.find(g); it != run_rank.end()) entry.bm25_rank = it->second;
        pool.candidates.push_back(std::move(entry));
    }

    const auto want_noise = static_cast<std::size_t>(std::max(0, n_noise));
    const auto want_irrel = static_cast<std::size_t>(std::max(0, n_irrel));
    const std::size_t noise_taken = std::min(want_noise, non_gold.size());
    for (std::size_t i = 0; i < noise_taken; ++i) {
        chosen.insert(non_gold[i]->doc_id);
        pool.candidates.push_back({non_gold[i]->doc_id, Provenance::Noise, non_gold[i]->rank});
    }
    const std::size_t tail_available = non_gold.size() - noise_taken;
    const std::size_t irrel_taken = std::min(want_irrel, tail_available);
    for (std::size_t i = non_gold.size() - irrel_taken; i < non_gold.size(); ++i) {
        chosen.insert(non_gold[i]->doc_id);
        pool.candidates.push_back({non_gold[i]->doc_id, Provenance::Irrelevant, non_gold[i]->rank});
    }

    const std::size_t short_noise = want_noise - noise_taken;
    const std::size_t short_irrel = want_irrel - irrel_taken;
    if (short_noise + short_irrel > 0) {
        std::vector<std::string_view> eligible;
        for (const auto& d : corpus_doc_ids) {
            if (gold_set.count(d) == 0 && chosen.count(d) == 0) eligible.push_back(d);
        }
        const std::size_t wanted = short_noise + short_irrel;
        const std::size_t drawn = std::min(wanted, eligible.size());
        // partial Fisher-Yates
        for (std::size_t i = 0; i < drawn; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, eligible.size() - 1);
            std::swap(eligible[i], eligible[pick(rng)]);
            const auto prov = i < short_noise ? Provenance::Noise : Provenance::Irrelevant;
            pool.candidates.push_back({std::string(eligible[i]), prov, std::nullopt});
        }
        spdlog::debug("pool {}: run short by {} noise / {} irrelevant, filled {} at random", query_id,
                      short_noise, short_irrel, drawn);
        if (drawn < wanted) {
            spdlog::warn("pool {}: corpus too small, {} candidates missing", query_id, wanted - drawn);
        }
    }
    std::shuffle(pool.candidates.begin(), pool.candidates.end(), rng);
    return pool;
}

void write_pools(const std::filesystem::path& path, std::span<const CandidatePool> pools) {
    auto out = open_output(path, "pool file");
    for (const auto& p : pools) {
        for (const auto& c : p.candidates) {
            nlohmann::ordered_json j;
            j["query_id"] = p.query_id;
            j["doc_id"] = c.doc_id;
            j["provenance"] = to_string(c.provenance);
            j["bm25_rank"] = c.bm25_rank ? nlohmann::ordered_json(*c.bm25_rank) : nlohmann::ordered_json();
            out << j.dump() << '\n';
        }
    }
}

std::vector<CandidatePool> read_pools(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open pool file: " + path.string());
    std::vector<CandidatePool> pools;
    std::unordered_map<std::string, std::size_t> slot;
    std::size_t line_no = 0;
    for (std::string line; std::getline(in, line);) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            const auto qid = j.at("query_id").get<std::string>();
            PoolEntry e{j.at("doc_id").get<std::string>(),
                        provenance_from_string(j.at("provenance").get<std::string>()), std::nullopt};
            if (j.contains("bm25_rank") && j["bm25_rank"].is_number_integer()) {
                e.bm25_rank = j["bm25_rank"].get<int>();
            }
            auto [it, fresh] = slot.try_emplace(qid, pools.size());
            if (fresh) pools.push_back({qid, {}});
            pools[it->second].candidates.push_back(std::move(e));
        } catch (const Error&) {
            throw;
        } catch (const std::exception& ex) {
            throw ParseError(path.string() + " line " + std::to_string(line_no) + ": " + ex.what());
        }
    }
    return pools;
}

// ---- symbolic ----------------------------------------------------------------

PredicateScorer PredicateScorer::parse(std::string_view spec) {
    PredicateScorer s;
    const auto colon = spec.find(':');
    const auto mode = spec.substr(0, colon);
    if (mode == "exact") {
        s.mode = Mode::ExactAttr;
    } else if (mode == "overlap") {
        s.mode = Mode::LexicalOverlap;
    } else {
        throw ConfigError("unknown scorer: " + std::string(spec));
    }
    if (colon != std::string_view::npos) {
        try {
            s.epsilon = std::stod(std::string(spec.substr(colon + 1)));
        } catch (const std::exception&) {
            throw ConfigError("bad scorer epsilon: " + std::string(spec));
        }
    }
    if (!(s.epsilon > 0.0 && s.epsilon < 0.5)) throw ConfigError("scorer epsilon must be in (0, 0.5)");
    return s;
}

std::string PredicateScorer::describe() const {
    return fmt::format("{}{:g}", mode == Mode::ExactAttr ? "exact" : "overlap", epsilon);
}

double predicate_plausibility(std::string_view atom, const EntityDoc& doc, const PredicateScorer& scorer) {
    const double eps = scorer.epsilon;
    if (scorer.mode == PredicateScorer::Mode::ExactAttr) {
        return doc.has_attribute(atom) ? 1.0 - eps : eps;
    }
    const auto atom_tokens = tokenize(atom);
    const std::set<std::string> wanted(atom_tokens.begin(), atom_tokens.end());
    if (wanted.empty()) return eps;
    const auto doc_tokens = tokenize(doc.text);
    const std::unordered_set<std::string> present(doc_tokens.begin(), doc_tokens.end());
    const auto hit = std::count_if(wanted.begin(), wanted.end(),
                                   [&](const std::string& t) { return present.count(t) != 0; });
    const double overlap = static_cast<double>(hit) / static_cast<double>(wanted.size());
    return std::clamp(overlap, eps, 1.0 - eps);
}

double symbolic_score(const LogicalExpr& expr, const EntityDoc& doc, const PredicateScorer& scorer) {
    using Op = LogicalExpr::Op;
    switch (expr.op) {
        case Op::Atom:
            return predicate_plausibility(expr.attribute, doc, scorer);
        case Op::And: {
            double p = 1.0;
            for (const auto& c : expr.children) p *= symbolic_score(c, doc, scorer);
            return p;
        }
        case Op::Or: {
            double miss = 1.0;
            for (const auto& c : expr.children) miss *= 1.0 - symbolic_score(c, doc, scorer);
            return 1.0 - miss;
        }
        case Op::Not:
            return 1.0 - symbolic_score(expr.children.front(), doc, scorer);
    }
    return 0.0;
}

DocLookup make_doc_lookup(std::span<const EntityDoc> docs) {
    DocLookup lookup;
    lookup.reserve(docs.size());
    for (const auto& d : docs) lookup.emplace(d.doc_id, &d);
    return lookup;
}

namespace {

const EntityDoc& lookup_doc(const DocLookup& docs, const std::string& id) {
    auto it = docs.find(id);
    if (it == docs.end()) throw Error("candidate not in corpus: " + id);
    return *it->second;
}

}  // namespace

Ranking symbolic_rerank(const LogicalExpr& expr, const CandidatePool& pool, const DocLookup& docs,
                        const PredicateScorer& scorer) {
    std::vector<std::pair<std::string, double>> scored;
    scored.reserve(pool.candidates.size());
    for (const auto& c : pool.candidates) {
        scored.emplace_back(c.doc_id, symbolic_score(expr, lookup_doc(docs, c.doc_id), scorer));
    }
    return make_ranking(pool.query_id, std::move(scored), "symbolic-" + scorer.describe());
}

// ---- external ----------------------------------------------------------------

std::string relevance_prompt(std::string_view query_text, std::string_view document_text) {
    return fmt::format(
        "From a scale of 0 to 4, judge the relevance between the query and the document.  "
        "Return ONLY the integer score. \nQuery: {}\nDocument: {}\nOutput:",
        query_text, document_text);
}

ScorerProtocolConfig ScorerProtocolConfig::parse(std::string_view spec) {
    ScorerProtocolConfig cfg;
    const auto colon = spec.find(':');
    if (colon == std::string_view::npos) throw ConfigError("transport must be subprocess:CMD or http:URL");
    const auto kind = spec.substr(0, colon);
    cfg.target = std::string(spec.substr(colon + 1));
    if (kind == "subprocess") {
        cfg.transport = Transport::Subprocess;
    } else if (kind == "http") {
        cfg.transport = Transport::Http;
    } else {
        throw ConfigError("unknown transport: " + std::string(kind));
    }
    cfg.validate();
    return cfg;
}

void ScorerProtocolConfig::validate() const {
    if (target.empty()) throw ConfigError("scorer transport target is empty");
    if (timeout.count() <= 0) throw ConfigError("scorer timeout must be > 0");
    if (retries < 0) throw ConfigError("retries must be >= 0");
    if (in_flight < 1) throw ConfigError("in_flight must be >= 1");
}

ExternalScorer::ExternalScorer(ScorerProtocolConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    transport_ = make_transport(cfg_);
}

ExternalScorer::~ExternalScorer() = default;

int ExternalScorer::score_one(const std::string& request, const std::string& qid, const std::string& docid,
                              ScorerTransport& transport, std::vector<std::string>& warnings) {
    std::string last_transport_error;
    int timeouts = 0;
    for (int attempt = 0; attempt <= cfg_.retries; ++attempt) {
        std::optional<std::string> reply;
        try {
            reply = transport.exchange(request);
        } catch (const TransportError& e) {
            last_transport_error = e.what();
            continue;
        }
        if (!reply) {
            ++timeouts;
            continue;
        }
        try {
            const auto j = nlohmann::json::parse(*reply);
            if (!j.is_object() || !j.contains("score")) throw ProtocolError("response without score");
            if (j.contains("qid") && j["qid"] != qid) throw ProtocolError("response qid mismatch");
            if (j.contains("docid") && j["docid"] != docid) throw ProtocolError("response docid mismatch");
            const auto& s = j["score"];
            if (!s.is_number_integer()) throw ProtocolError("score is not an integer: " + s.dump());
            const auto v = s.get<long long>();
            if (v < 0 || v > 4) throw ProtocolError("score out of range 0..4: " + std::to_string(v));
            return static_cast<int>(v);
        } catch (const nlohmann::json::exception&) {
            if (cfg_.strict) throw ProtocolError("malformed response for " + qid + "/" + docid + ": " + *reply);
            warnings.push_back("malformed response for " + qid + "/" + docid + ", scored 0");
            return 0;
        } catch (const ProtocolError& e) {
            if (cfg_.strict) throw;
            warnings.push_back(std::string(e.what()) + " for " + qid + "/" + docid + ", scored 0");
            return 0;
        }
    }
    if (timeouts == 0) {
        throw TransportError("scorer unreachable after " + std::to_string(cfg_.retries + 1) +
                             " attempts: " + last_transport_error);
    }
    warnings.push_back("timed out scoring " + qid + "/" + docid + ", scored 0");
    return 0;
}

ExternalRerankResult ExternalScorer::rerank(const CandidatePool& pool, std::string_view query_text,
                                            const DocLookup& docs) {
    const auto n = pool.candidates.size();
    std::vector<std::string> requests(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& c = pool.candidates[i];
        nlohmann::ordered_json j;
        j["qid"] = pool.query_id;
        j["query"] = query_text;
        j["docid"] = c.doc_id;
        j["doc"] = lookup_doc(docs, c.doc_id).text;
        requests[i] = j.dump();
    }

    std::vector<int> scores(n, 0);
    std::vector<std::vector<std::string>> warnings(n);
    if (cfg_.transport == ScorerProtocolConfig::Transport::Http && cfg_.in_flight > 1) {
        parallel_for(n, cfg_.in_flight, [&](std::size_t i) {
            auto transport = make_transport(cfg_);
            scores[i] = score_one(requests[i], pool.query_id, pool.candidates[i].doc_id, *transport, warnings[i]);
        });
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            scores[i] = score_one(requests[i], pool.query_id, pool.candidates[i].doc_id, *transport_, warnings[i]);
        }
    }

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    constexpr int kUnranked = std::numeric_limits<int>::max();
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        const int ra = pool.candidates[a].bm25_rank.value_or(kUnranked);
        const int rb = pool.candidates[b].bm25_rank.value_or(kUnranked);
        if (ra != rb) return ra < rb;
        return pool.candidates[a].doc_id < pool.candidates[b].doc_id;
    });

    ExternalRerankResult result;
    result.ranking.query_id = pool.query_id;
    result.ranking.run_tag = "external";
    int rank = 0;
    for (auto i : order) {
        result.ranking.entries.push_back({pool.candidates[i].doc_id, static_cast<double>(scores[i]), ++rank});
    }
    for (auto& w : warnings) {
        for (auto& msg : w) {
            spdlog::warn("external scorer: {}", msg);
            result.warnings.push_back(std::move(msg));
        }
    }
    return result;
}

ExternalRerankResult external_rerank(const CandidatePool& pool, std::string_view query_text,
                                     const DocLookup& docs, ExternalScorer& scorer) {
    return scorer.rerank(pool, query_text, docs);
}

}  // namespace setcomp
