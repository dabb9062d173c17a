#include "setcomp/benchgen.hpp"

#include "setcomp/error.hpp"
#include "setcomp/text.hpp"
#include "setcomp/parallel.hpp"

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <fstream>
#include <iterator>
#include <numeric>
#include <set>

namespace setcomp {

using Op = LogicalExpr::Op;

std::string_view to_string(TemplateKind kind) {
    switch (kind) {
        case TemplateKind::Atomic: return "Atomic";
        case TemplateKind::Union2: return "Union2";
        case TemplateKind::Union3: return "Union3";
        case TemplateKind::Inter2: return "Inter2";
        case TemplateKind::Inter3: return "Inter3";
        case TemplateKind::Excl2: return "Excl2";
        case TemplateKind::InterExcl3: return "InterExcl3";
    }
    return "?";
}

std::string_view to_string(OperatorFamily family) {
    switch (family) {
        case OperatorFamily::Atomic: return "atomic";
        case OperatorFamily::Disjunction: return "disjunction";
        case OperatorFamily::Conjunction: return "conjunction";
        case OperatorFamily::Exclusion: return "exclusion";
    }
    return "?";
}

TemplateKind template_from_string(std::string_view name) {
    for (auto k : kAllTemplates) {
        if (to_string(k) == name) return k;
    }
    throw ParseError("unknown template: " + std::string(name));
}

OperatorFamily operator_family_from_string(std::string_view name) {
    for (auto f : {OperatorFamily::Atomic, OperatorFamily::Disjunction, OperatorFamily::Conjunction,
                   OperatorFamily::Exclusion}) {
        if (to_string(f) == name) return f;
    }
    throw ParseError("unknown operator family: " + std::string(name));
}

int QueryTemplate::depth() const {
    switch (kind) {
        case TemplateKind::Atomic: return 1;
        case TemplateKind::Union2:
        case TemplateKind::Inter2:
        case TemplateKind::Excl2: return 2;
        case TemplateKind::Union3:
        case TemplateKind::Inter3:
        case TemplateKind::InterExcl3: return 3;
    }
    return 0;
}

OperatorFamily QueryTemplate::operator_family() const {
    switch (kind) {
        case TemplateKind::Atomic: return OperatorFamily::Atomic;
        case TemplateKind::Union2:
        case TemplateKind::Union3: return OperatorFamily::Disjunction;
        case TemplateKind::Inter2:
        case TemplateKind::Inter3: return OperatorFamily::Conjunction;
        case TemplateKind::Excl2:
        case TemplateKind::InterExcl3: return OperatorFamily::Exclusion;
    }
    return OperatorFamily::Atomic;
}

std::string_view QueryTemplate::name() const { return to_string(kind); }

LogicalExpr QueryTemplate::expression(std::span<const std::string> a) const {
    if (static_cast<int>(a.size()) != depth()) {
        throw ArityError(std::string(name()) + " expects " + std::to_string(depth()) +
                         " attributes, got " + std::to_string(a.size()));
    }
    using E = LogicalExpr;
    switch (kind) {
        case TemplateKind::Atomic: return E::atom(a[0]);
        case TemplateKind::Union2: return E::any_of({E::atom(a[0]), E::atom(a[1])});
        case TemplateKind::Union3: return E::any_of({E::atom(a[0]), E::atom(a[1]), E::atom(a[2])});
        case TemplateKind::Inter2: return E::all_of({E::atom(a[0]), E::atom(a[1])});
        case TemplateKind::Inter3: return E::all_of({E::atom(a[0]), E::atom(a[1]), E::atom(a[2])});
        case TemplateKind::Excl2: return E::all_of({E::atom(a[0]), E::negate(E::atom(a[1]))});
        case TemplateKind::InterExcl3:
            return E::all_of({E::atom(a[0]), E::atom(a[1]), E::negate(E::atom(a[2]))});
    }
    return {};
}

std::string render_query_text(const QueryTemplate& tmpl, std::span<const std::string> a) {
    if (static_cast<int>(a.size()) != tmpl.depth()) {
        throw ArityError(std::string(tmpl.name()) + " expects " + std::to_string(tmpl.depth()) +
                         " attributes, got " + std::to_string(a.size()));
    }
    const std::string who = "Who likes ";
    switch (tmpl.kind) {
        case TemplateKind::Atomic: return who + a[0] + "?";
        case TemplateKind::Union2: return who + a[0] + " or " + a[1] + "?";
        case TemplateKind::Union3: return who + a[0] + " or " + a[1] + " or " + a[2] + "?";
        case TemplateKind::Inter2: return who + a[0] + " and also " + a[1] + "?";
        case TemplateKind::Inter3: return who + a[0] + " and also both " + a[1] + " and " + a[2] + "?";
        case TemplateKind::Excl2: return who + a[0] + " but not " + a[1] + "?";
        case TemplateKind::InterExcl3: return who + a[0] + " and also " + a[1] + " but not " + a[2] + "?";
    }
    return {};
}

// ---- set evaluation --------------------------------------------------------

namespace {

DocSet universe(const AttributeIndex& index) {
    DocSet all(index.doc_count());
    std::iota(all.begin(), all.end(), DocNo{0});
    return all;
}

DocSet difference(const DocSet& a, const DocSet& b) {
    DocSet out;
    std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return out;
}

}  // namespace

DocSet eval_set_expr(const LogicalExpr& expr, const AttributeIndex& index) {
    switch (expr.op) {
        case Op::Atom: {
            if (!index.contains(expr.attribute)) throw UnknownAttribute(expr.attribute);
            auto p = index.postings(expr.attribute);
            return {p.begin(), p.end()};
        }
        case Op::Or: {
            DocSet acc;
            for (const auto& c : expr.children) {
                auto s = eval_set_expr(c, index);
                DocSet merged;
                std::set_union(acc.begin(), acc.end(), s.begin(), s.end(), std::back_inserter(merged));
                acc = std::move(merged);
            }
            return acc;
        }
        case Op::And: {
            std::optional<DocSet> acc;
            std::vector<const LogicalExpr*> excluded;
            for (const auto& c : expr.children) {
                if (c.op == Op::Not) {
                    excluded.push_back(&c.children.front());
                    continue;
                }
                auto s = eval_set_expr(c, index);
                if (!acc) {
                    acc = std::move(s);
                    continue;
                }
                DocSet merged;
                std::set_intersection(acc->begin(), acc->end(), s.begin(), s.end(),
                                      std::back_inserter(merged));
                acc = std::move(merged);
            }
            if (!acc) acc = universe(index);
            for (const auto* neg : excluded) acc = difference(*acc, eval_set_expr(*neg, index));
            return *acc;
        }
        case Op::Not:
            return difference(universe(index), eval_set_expr(expr.children.front(), index));
    }
    return {};
}

// ---- sampling --------------------------------------------------------------

void GenConfig::validate() const {
    if (per_template_limit < 0) throw ConfigError("per_template_limit must be >= 0");
    if (buckets.empty()) throw ConfigError("at least one size bucket is required");
    if (buckets.front().lo < 1) throw ConfigError("buckets must start at a size >= 1");
    for (std::size_t i = 0; i < buckets.size(); ++i) {
        if (buckets[i].lo > buckets[i].hi) throw ConfigError("bucket with lo > hi");
        if (i > 0 && buckets[i].lo != buckets[i - 1].hi + 1) {
            throw ConfigError("buckets must be contiguous without gaps or overlaps");
        }
    }
    if (per_bucket_quota < 0 || max_attempts < 0) throw ConfigError("negative quota or attempts");
}

int GenConfig::quota() const {
    if (per_bucket_quota > 0) return per_bucket_quota;
    return per_template_limit / static_cast<int>(buckets.size());
}

std::int64_t GenConfig::attempts() const {
    return max_attempts > 0 ? max_attempts : std::int64_t{200} * per_template_limit;
}

int GenConfig::bucket_of(std::size_t gold_size) const {
    for (std::size_t i = 0; i < buckets.size(); ++i) {
        if (static_cast<int>(gold_size) >= buckets[i].lo && static_cast<int>(gold_size) <= buckets[i].hi) {
            return static_cast<int>(i);
        }
    }
    return -1;
}

namespace {

struct Candidate {
    std::vector<std::string> attributes;
    DocSet gold;
    int bucket = 0;
};

std::string zero_pad5(int n) {
    auto s = std::to_string(n);
    if (s.size() < 5) s.insert(0, 5 - s.size(), '0');
    return s;
}

}  // namespace

std::vector<BenchQuery> sample_template_queries(const QueryTemplate& tmpl, const AttributeIndex& index,
                                                const GenConfig& cfg, std::mt19937_64& rng,
                                                TemplateFill* fill) {
    cfg.validate();
    const auto& vocab = index.attributes();
    const int depth = tmpl.depth();
    const int limit = cfg.per_template_limit;
    const int quota = cfg.quota();
    const std::int64_t budget = cfg.attempts();
    const std::int64_t phase1_budget = budget / 2;
    const auto n_buckets = cfg.buckets.size();

    TemplateFill local;
    local.kind = tmpl.kind;
    local.phase1_per_bucket.assign(n_buckets, 0);
    local.final_per_bucket.assign(n_buckets, 0);

    std::vector<Candidate> accepted;
    if (limit > 0 && static_cast<int>(vocab.size()) >= depth) {
        std::set<std::vector<std::string>> seen;
        std::vector<Candidate> reserve;
        std::vector<int> occupancy(n_buckets, 0);
        std::uniform_int_distribution<std::size_t> pick(0, vocab.size() - 1);
        std::int64_t attempts = 0;

        // Returns a fresh valid candidate, or nullopt for duplicates and
        // out-of-range sizes.
        auto draw = [&]() -> std::optional<Candidate> {
            ++attempts;
            std::vector<std::size_t> slots;
            while (static_cast<int>(slots.size()) < depth) {
                const auto s = pick(rng);
                if (std::find(slots.begin(), slots.end(), s) == slots.end()) slots.push_back(s);
            }
            Candidate c;
            for (auto s : slots) c.attributes.push_back(vocab[s]);
            auto key = c.attributes;
            std::sort(key.begin(), key.end());
            if (!seen.insert(std::move(key)).second) return std::nullopt;
            c.gold = eval_set_expr(tmpl.expression(c.attributes), index);
            c.bucket = cfg.bucket_of(c.gold.size());
            if (c.bucket < 0) return std::nullopt;
            return c;
        };
        auto all_full = [&] {
            return std::all_of(occupancy.begin(), occupancy.end(), [&](int n) { return n >= quota; });
        };

        // Phase 1: fill each bucket up to its quota.
        while (attempts < phase1_budget && static_cast<int>(accepted.size()) < limit && !all_full()) {
            auto c = draw();
            if (!c) continue;
            if (occupancy[c->bucket] < quota) {
                ++occupancy[c->bucket];
                accepted.push_back(std::move(*c));
            } else {
                reserve.push_back(std::move(*c));
            }
        }
        local.phase1_per_bucket = occupancy;

        // Phase 2: top up with held-back candidates, then fresh draws.
        for (auto& c : reserve) {
            if (static_cast<int>(accepted.size()) >= limit) break;
            accepted.push_back(std::move(c));
        }
        while (attempts < budget && static_cast<int>(accepted.size()) < limit) {
            if (auto c = draw()) accepted.push_back(std::move(*c));
        }
        local.attempts_used = attempts;
    }

    std::vector<BenchQuery> out;
    out.reserve(accepted.size());
    for (std::size_t i = 0; i < accepted.size(); ++i) {
        auto& c = accepted[i];
        BenchQuery q;
        q.query_id = std::string(tmpl.name()) + "-" + zero_pad5(static_cast<int>(i) + 1);
        q.tmpl = tmpl;
        q.text = render_query_text(tmpl, c.attributes);
        q.attributes = std::move(c.attributes);
        q.gold.reserve(c.gold.size());
        for (auto d : c.gold) q.gold.push_back(index.doc_id(d));
        q.gold_size = q.gold.size();
        q.bucket = c.bucket;
        ++local.final_per_bucket[static_cast<std::size_t>(q.bucket)];
        out.push_back(std::move(q));
    }
    local.accepted = static_cast<int>(out.size());
    local.under_filled = local.accepted < limit;
    if (local.under_filled) {
        spdlog::warn("template {} under-filled: {}/{} queries after {} attempts", tmpl.name(),
                     local.accepted, limit, local.attempts_used);
    }
    if (fill) *fill = std::move(local);
    return out;
}

std::mt19937_64 template_stream(std::uint64_t seed, TemplateKind kind) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(kind) + 1U, 0x5E7C0u};
    return std::mt19937_64(seq);
}

Benchmark generate_benchmark(const AttributeIndex& index, const GenConfig& cfg, int threads) {
    cfg.validate();
    std::vector<std::vector<BenchQuery>> per_template(kAllTemplates.size());
    Benchmark bench;
    bench.report.resize(kAllTemplates.size());
    parallel_for(kAllTemplates.size(), threads, [&](std::size_t i) {
        auto rng = template_stream(cfg.seed, kAllTemplates[i]);
        per_template[i] = sample_template_queries(QueryTemplate{kAllTemplates[i]}, index, cfg, rng,
                                                  &bench.report[i]);
    });
    for (auto& qs : per_template) {
        std::move(qs.begin(), qs.end(), std::back_inserter(bench.queries));
    }
    return bench;
}

// ---- files -----------------------------------------------------------------

void write_queries(const std::filesystem::path& path, std::span<const BenchQuery> queries) {
    auto out = open_output(path, "queries file");
    for (const auto& q : queries) {
        nlohmann::ordered_json j;
        j["query_id"] = q.query_id;
        j["text"] = q.text;
        j["template"] = q.tmpl.name();
        j["depth"] = q.tmpl.depth();
        j["operator_family"] = to_string(q.tmpl.operator_family());
        j["attributes"] = q.attributes;
        j["gold_size"] = q.gold_size;
        out << j.dump() << '\n';
    }
}

std::vector<BenchQuery> read_queries(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open queries file: " + path.string());
    std::vector<BenchQuery> out;
    std::size_t line_no = 0;
    for (std::string line; std::getline(in, line);) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            BenchQuery q;
            // LIMIT-style query files use "_id" and carry no template metadata.
            q.query_id = j.contains("query_id") ? j.at("query_id").get<std::string>()
                                                : j.at("_id").get<std::string>();
            q.text = j.at("text").get<std::string>();
            q.tmpl.kind = j.contains("template") ? template_from_string(j["template"].get<std::string>())
                                                 : TemplateKind::Atomic;
            if (j.contains("attributes")) q.attributes = j["attributes"].get<std::vector<std::string>>();
            if (j.contains("gold_size")) q.gold_size = j["gold_size"].get<std::size_t>();
            out.push_back(std::move(q));
        } catch (const Error&) {
            throw;
        } catch (const std::exception& e) {
            throw ParseError(path.string() + " line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

void write_qrels(const std::filesystem::path& path, std::span<const BenchQuery> queries) {
    auto out = open_output(path, "qrels file");
    for (const auto& q : queries) {
        for (const auto& d : q.gold) out << q.query_id << " 0 " << d << " 1\n";
    }
}

void write_generation_report(const std::filesystem::path& path, const Benchmark& bench,
                             const GenConfig& cfg) {
    nlohmann::ordered_json j;
    j["seed"] = cfg.seed;
    j["per_template_limit"] = cfg.per_template_limit;
    j["per_bucket_quota"] = cfg.quota();
    j["max_attempts"] = cfg.attempts();
    auto& buckets = j["buckets"] = nlohmann::ordered_json::array();
    for (const auto& b : cfg.buckets) buckets.push_back({b.lo, b.hi});
    auto& templates = j["templates"] = nlohmann::ordered_json::array();
    for (const auto& f : bench.report) {
        nlohmann::ordered_json t;
        t["template"] = to_string(f.kind);
        t["accepted"] = f.accepted;
        t["attempts_used"] = f.attempts_used;
        t["under_filled"] = f.under_filled;
        t["phase1_per_bucket"] = f.phase1_per_bucket;
        t["final_per_bucket"] = f.final_per_bucket;
        templates.push_back(std::move(t));
    }
    auto out = open_output(path, "generation report");
    out << j.dump(2) << '\n';
}

}  // namespace setcomp
