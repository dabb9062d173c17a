#include "setcomp/retrieval.hpp"

#include "setcomp/benchgen.hpp"
#include "setcomp/error.hpp"
#include "setcomp/text.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_set>

namespace setcomp {

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string cur;
    for (const char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (c >= 0x80 || std::isalnum(c)) {
            cur += c < 0x80 ? static_cast<char>(std::tolower(c)) : ch;
        } else if (!cur.empty()) {
            tokens.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) tokens.push_back(std::move(cur));
    return tokens;
}

// ---- index -----------------------------------------------------------------

Bm25Index Bm25Index::build(std::span<const EntityDoc> corpus, Bm25Params params) {
    if (corpus.empty()) throw EmptyCorpus();
    std::vector<const EntityDoc*> order;
    order.reserve(corpus.size());
    for (const auto& d : corpus) order.push_back(&d);
    std::sort(order.begin(), order.end(),
              [](const EntityDoc* a, const EntityDoc* b) { return a->doc_id < b->doc_id; });
    for (std::size_t i = 1; i < order.size(); ++i) {
        if (order[i]->doc_id == order[i - 1]->doc_id) throw DuplicateDocId(order[i]->doc_id);
    }

    Bm25Index index;
    index.params_ = params;
    index.doc_ids_.reserve(order.size());
    index.doc_lengths_.reserve(order.size());
    std::uint64_t total_length = 0;
    for (std::size_t i = 0; i < order.size(); ++i) {
        const auto tokens = tokenize(order[i]->text);
        index.doc_ids_.push_back(order[i]->doc_id);
        index.doc_lengths_.push_back(static_cast<std::uint32_t>(tokens.size()));
        total_length += tokens.size();

        std::map<std::string_view, std::uint32_t> tf;
        for (const auto& t : tokens) ++tf[t];
        for (const auto& [term, count] : tf) {
            auto [it, fresh] = index.slot_.try_emplace(std::string(term), index.lists_.size());
            if (fresh) index.lists_.emplace_back();
            index.lists_[it->second].push_back({static_cast<DocNo>(i), count, 0.0});
        }
    }
    const auto n = static_cast<double>(order.size());
    index.avg_doc_length_ = static_cast<double>(total_length) / n;

    const double k1 = params.k1;
    const double b = params.b;
    index.idf_.resize(index.lists_.size());
    for (std::size_t s = 0; s < index.lists_.size(); ++s) {
        const auto df = static_cast<double>(index.lists_[s].size());
        const double idf = std::log(1.0 + (n - df + 0.5) / (df + 0.5));
        index.idf_[s] = idf;
        for (auto& p : index.lists_[s]) {
            const double tf = p.tf;
            const double len_norm = index.avg_doc_length_ > 0.0
                                        ? index.doc_lengths_[p.doc] / index.avg_doc_length_
                                        : 0.0;
            p.weight = idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * len_norm));
        }
    }
    return index;
}

std::span<const Posting> Bm25Index::postings(std::string_view term) const {
    auto it = slot_.find(std::string(term));
    if (it == slot_.end()) return {};
    return lists_[it->second];
}

double Bm25Index::idf(std::string_view term) const {
    auto it = slot_.find(std::string(term));
    return it == slot_.end() ? 0.0 : idf_[it->second];
}

double Bm25Index::weight(std::string_view term, DocNo d) const {
    const auto list = postings(term);
    auto it = std::lower_bound(list.begin(), list.end(), d,
                               [](const Posting& p, DocNo doc) { return p.doc < doc; });
    return it != list.end() && it->doc == d ? it->weight : 0.0;
}

// ---- sparse vectors --------------------------------------------------------

void SparseVector::add(const std::string& term, double w) {
    auto& slot = weights[term];
    slot += w;
    if (slot == 0.0) weights.erase(term);
}

SparseVector& SparseVector::operator+=(const SparseVector& other) {
    for (const auto& [t, w] : other.weights) add(t, w);
    return *this;
}

SparseVector SparseVector::scaled(double factor) const {
    SparseVector out;
    if (factor == 0.0) return out;
    for (const auto& [t, w] : weights) out.weights.emplace(t, w * factor);
    return out;
}

SparseVector term_counts(std::string_view text) {
    SparseVector v;
    for (const auto& t : tokenize(text)) v.add(t, 1.0);
    return v;
}

// ---- scoring ---------------------------------------------------------------

Ranking make_ranking(std::string query_id, std::vector<std::pair<std::string, double>> scored,
                     std::string run_tag, std::size_t k) {
    auto better = [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second > b.second : a.first < b.first;
    };
    if (k < scored.size()) {
        std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(k), scored.end(),
                          better);
        scored.resize(k);
    } else {
        std::sort(scored.begin(), scored.end(), better);
    }
    Ranking r{std::move(query_id), {}, std::move(run_tag)};
    r.entries.reserve(scored.size());
    int rank = 0;
    for (auto& [doc, score] : scored) r.entries.push_back({std::move(doc), score, ++rank});
    return r;
}

Ranking score_query_vector(const Bm25Index& index, const SparseVector& query, std::size_t k,
                           std::string query_id, std::string run_tag) {
    if (k == 0) throw ConfigError("k must be >= 1");
    std::vector<double> acc(index.doc_count(), 0.0);
    std::vector<char> touched(index.doc_count(), 0);
    std::vector<DocNo> hits;
    for (const auto& [term, qw] : query.weights) {
        for (const auto& p : index.postings(term)) {
            if (!touched[p.doc]) {
                touched[p.doc] = 1;
                hits.push_back(p.doc);
            }
            acc[p.doc] += qw * p.weight;
        }
    }
    auto better = [&](DocNo a, DocNo b) { return acc[a] != acc[b] ? acc[a] > acc[b] : a < b; };
    if (k < hits.size()) {
        std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(k), hits.end(), better);
        hits.resize(k);
    } else {
        std::sort(hits.begin(), hits.end(), better);
    }
    // DocNo order is doc_id order, so the tie policy matches make_ranking.
    Ranking r{std::move(query_id), {}, std::move(run_tag)};
    r.entries.reserve(hits.size());
    int rank = 0;
    for (auto d : hits) r.entries.push_back({index.doc_id(d), acc[d], ++rank});
    return r;
}

Ranking bm25_search(const Bm25Index& index, std::string_view query_text, std::size_t k,
                    std::string query_id, std::string run_tag) {
    return score_query_vector(index, term_counts(query_text), k, std::move(query_id), std::move(run_tag));
}

// ---- set-compositional sparse retrieval -------------------------------------

void SetCompConfig::validate() const {
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ConfigError("alpha must be a finite real >= 0");
    if (top_k < 1) throw ConfigError("top_k must be >= 1");
}

std::string SetCompConfig::run_tag() const { return fmt::format("setcomp-and_add-alpha{:g}", alpha); }

SparseVector compose_query_vector(const LogicalExpr& expr, const SetCompConfig& cfg) {
    using Op = LogicalExpr::Op;
    switch (expr.op) {
        case Op::Atom:
            return term_counts(expr.attribute);
        case Op::And:
        case Op::Or: {
            SparseVector sum;
            for (const auto& c : expr.children) sum += compose_query_vector(c, cfg);
            return sum;
        }
        case Op::Not:
            return compose_query_vector(expr.children.front(), cfg).scaled(-cfg.alpha);
    }
    return {};
}

Ranking setcomp_search(const Bm25Index& index, const LogicalExpr& expr, std::size_t k,
                       const SetCompConfig& cfg, std::string query_id) {
    cfg.validate();
    return score_query_vector(index, compose_query_vector(expr, cfg), k, std::move(query_id),
                              cfg.run_tag());
}

Ranking oracle_search(const LogicalExpr& expr, const AttributeIndex& index, std::string query_id) {
    const auto members = eval_set_expr(expr, index);
    Ranking r{std::move(query_id), {}, "oracle"};
    r.entries.reserve(members.size());
    int rank = 0;
    for (auto d : members) r.entries.push_back({index.doc_id(d), 1.0, ++rank});
    return r;
}

// ---- run files -------------------------------------------------------------

std::string format_run(std::span<const Ranking> rankings) {
    std::string out;
    for (const auto& r : rankings) {
        for (const auto& e : r.entries) {
            out += fmt::format("{} Q0 {} {} {:.6f} {}\n", r.query_id, e.doc_id, e.rank, e.score,
                               r.run_tag.empty() ? "run" : r.run_tag);
        }
    }
    return out;
}

void write_run(const std::filesystem::path& path, std::span<const Ranking> rankings) {
    auto out = open_output(path, "run file");
    out << format_run(rankings);
}

std::vector<Ranking> read_run(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open run file: " + path.string());
    struct Line {
        std::string doc;
        double score;
        int rank;
    };
    std::vector<Ranking> runs;
    std::unordered_map<std::string, std::size_t> slot;
    std::vector<std::vector<Line>> lines;
    std::size_t line_no = 0;
    for (std::string line; std::getline(in, line);) {
        ++line_no;
        std::istringstream fields(line);
        std::string qid, q0, doc, tag;
        int rank = 0;
        double score = 0.0;
        if (!(fields >> qid)) continue;
        if (!(fields >> q0 >> doc >> rank >> score)) {
            throw ParseError(path.string() + " line " + std::to_string(line_no) + ": malformed run line");
        }
        fields >> tag;
        auto [it, fresh] = slot.try_emplace(qid, runs.size());
        if (fresh) {
            runs.push_back({qid, {}, tag});
            lines.emplace_back();
        }
        lines[it->second].push_back({std::move(doc), score, rank});
    }
    for (std::size_t i = 0; i < runs.size(); ++i) {
        auto& entries = lines[i];
        // Printed scores are rounded, so the rank column breaks score ties.
        std::stable_sort(entries.begin(), entries.end(), [](const Line& a, const Line& b) {
            if (a.score != b.score) return a.score > b.score;
            if (a.rank != b.rank) return a.rank < b.rank;
            return a.doc < b.doc;
        });
        std::unordered_set<std::string> seen;
        int rank = 0;
        for (auto& e : entries) {
            if (!seen.insert(e.doc).second) continue;
            runs[i].entries.push_back({std::move(e.doc), e.score, ++rank});
        }
    }
    return runs;
}

}  // namespace setcomp
