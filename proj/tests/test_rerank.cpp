#include "setcomp/error.hpp"
#include "setcomp/eval.hpp"
#include "setcomp/pipeline.hpp"
#include "setcomp/rerank.hpp"
#include "support.hpp"

#include <gtest/gtest.h>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include <random>
#include <thread>

using namespace setcomp;
using testing_support::TempDir;
using E = LogicalExpr;

namespace {

const PredicateScorer kExact{};

EntityDoc doc_with(std::vector<std::string> attrs) {
    std::sort(attrs.begin(), attrs.end());
    return parse_entity_text("d", render_entity_text("N", attrs));
}

// Generated queries, their BM25 run and pools over the synthetic corpus.
struct PoolFixture {
    std::vector<BenchQuery> queries;
    Qrels qrels;
    std::vector<Ranking> bm25;
    std::vector<std::string> ids;
    std::vector<CandidatePool> pools;
};

const PoolFixture& pool_fixture() {
    static const PoolFixture f = [] {
        PoolFixture f;
        const auto& docs = testing_support::synth5000();
        GenConfig gen;
        gen.per_template_limit = 20;
        gen.seed = 8;
        f.queries = generate_benchmark(build_attribute_index(docs), gen, 2).queries;
        for (const auto& q : f.queries) f.qrels[q.query_id].insert(q.gold.begin(), q.gold.end());
        f.bm25 = search_queries("bm25", docs, f.queries, SearchParams{}, 4);
        for (const auto& d : docs) f.ids.push_back(d.doc_id);
        std::sort(f.ids.begin(), f.ids.end());
        f.pools = build_pools(f.queries, f.qrels, f.bm25, f.ids, 5, 5, 42, 4);
        return f;
    }();
    return f;
}

std::string fake_scorer(const std::string& args) { return std::string("subprocess:") + FAKE_SCORER_PATH + " " + args; }

CandidatePool small_pool() {
    CandidatePool p;
    p.query_id = "q1";
    p.candidates = {{"c", Provenance::Noise, 3},
                    {"a", Provenance::Gold, std::nullopt},
                    {"b", Provenance::Gold, 7},
                    {"d", Provenance::Irrelevant, 1},
                    {"e", Provenance::Irrelevant, std::nullopt}};
    return p;
}

std::vector<EntityDoc> small_docs() {
    std::vector<EntityDoc> docs;
    for (const char* id : {"a", "b", "c", "d", "e"}) docs.push_back(parse_entity_text(id, std::string(id) + " likes Tea."));
    return docs;
}

std::vector<std::string> order_of(const Ranking& r) {
    std::vector<std::string> out;
    for (const auto& e : r.entries) out.push_back(e.doc_id);
    return out;
}

// ---- plausibility and aggregation -----------------------------------------------

TEST(Plausibility, ExactAttr) {
    const auto d = doc_with({"Tea", "Thin Mints"});
    EXPECT_DOUBLE_EQ(predicate_plausibility("Tea", d, kExact), 0.95);
    EXPECT_DOUBLE_EQ(predicate_plausibility("Rum", d, kExact), 0.05);
}

TEST(Plausibility, LexicalOverlap) {
    const auto overlap = PredicateScorer::parse("overlap:0.05");
    const auto d = parse_entity_text("d", "N likes Mints, and Tea.");
    EXPECT_DOUBLE_EQ(predicate_plausibility("Thin Mints", d, overlap), 0.5);
    EXPECT_DOUBLE_EQ(predicate_plausibility("Tea", d, overlap), 0.95);
    EXPECT_DOUBLE_EQ(predicate_plausibility("Rum", d, overlap), 0.05);
}

TEST(Plausibility, ScorerSpecs) {
    EXPECT_EQ(PredicateScorer::parse("exact").describe(), "exact0.05");
    EXPECT_EQ(PredicateScorer::parse("exact:0.01").describe(), "exact0.01");
    EXPECT_THROW(PredicateScorer::parse("fuzzy"), ConfigError);
    EXPECT_THROW(PredicateScorer::parse("exact:0.7"), ConfigError);
}

TEST(Aggregation, ArithmeticOfRules) {
    const auto d = doc_with({"P"});
    EXPECT_NEAR(symbolic_score(E::all_of({E::atom("P"), E::negate(E::atom("Q"))}), d, kExact), 0.9025, 1e-15);
    EXPECT_NEAR(symbolic_score(E::any_of({E::atom("Q"), E::atom("R")}), d, kExact), 0.0975, 1e-15);
}

TEST(Aggregation, DeMorganOverTruthAssignments) {
    const auto P = E::atom("P"), Q = E::atom("Q");
    // Dyadic epsilons keep every intermediate exact in binary floating point.
    for (double eps : {0.0625, 0.125, 0.25, 0.05}) {
        PredicateScorer s;
        s.epsilon = eps;
        for (const auto& attrs : std::vector<std::vector<std::string>>{{"X"}, {"P"}, {"Q"}, {"P", "Q"}}) {
            const auto d = doc_with(attrs);
            const double lhs = 1.0 - symbolic_score(E::any_of({E::negate(P), E::negate(Q)}), d, s);
            const double rhs = symbolic_score(E::all_of({P, Q}), d, s);
            if (eps == 0.05) {
                EXPECT_NEAR(lhs, rhs, 1e-15);
            } else {
                EXPECT_EQ(lhs, rhs) << eps;
            }
        }
    }
}

TEST(Aggregation, BoundsOnRandomExpressions) {
    const std::vector<std::string> vocab{"A", "B", "C", "D", "E"};
    std::mt19937_64 rng(17);
    std::uniform_int_distribution<int> op(0, 3), width(1, 3), leaf(0, 4);
    std::function<E(int)> make = [&](int depth) -> E {
        const int o = depth == 0 ? 0 : op(rng);
        if (o == 0) return E::atom(vocab[static_cast<std::size_t>(leaf(rng))]);
        if (o == 3) return E::negate(make(depth - 1));
        std::vector<E> kids;
        for (int i = width(rng); i > 0; --i) kids.push_back(make(depth - 1));
        return o == 1 ? E::all_of(std::move(kids)) : E::any_of(std::move(kids));
    };
    const auto overlap = PredicateScorer::parse("overlap:0.1");
    for (int t = 0; t < 500; ++t) {
        const auto expr = make(3);
        const auto d = doc_with({vocab[static_cast<std::size_t>(leaf(rng))], vocab[static_cast<std::size_t>(leaf(rng))]});
        for (const auto& s : {kExact, overlap}) {
            const double v = symbolic_score(expr, d, s);
            ASSERT_GE(v, 0.0);
            ASSERT_LE(v, 1.0);
            if (expr.op == E::Op::And || expr.op == E::Op::Or) {
                for (const auto& c : expr.children) {
                    const double cv = symbolic_score(c, d, s);
                    if (expr.op == E::Op::And) ASSERT_LE(v, cv + 1e-15);
                    if (expr.op == E::Op::Or) ASSERT_GE(v, cv - 1e-15);
                }
            }
        }
    }
}

// ---- pools ---------------------------------------------------------------

TEST(Pools, SingleGoldGivesEleven) {
    std::vector<std::pair<std::string, double>> scored;
    std::vector<std::string> ids;
    for (int i = 0; i < 40; ++i) {
        ids.push_back("d" + std::to_string(100 + i));
        scored.emplace_back(ids.back(), 40.0 - i);
    }
    const auto run = make_ranking("q", scored, "bm25");
    auto rng = pool_stream(1, "q");
    const std::vector<std::string> gold{"d105"};
    const auto pool = build_candidate_pool("q", gold, run, ids, 5, 5, rng);
    EXPECT_EQ(pool.candidates.size(), 11u);
    EXPECT_EQ(pool.count(Provenance::Gold), 1u);
    EXPECT_EQ(pool.count(Provenance::Noise), 5u);
    EXPECT_EQ(pool.count(Provenance::Irrelevant), 5u);
    for (const auto& c : pool.candidates) {
        if (c.doc_id == "d105") EXPECT_EQ(c.bm25_rank, 6);
        if (c.provenance == Provenance::Noise) EXPECT_LE(*c.bm25_rank, 6);
        if (c.provenance == Provenance::Irrelevant) EXPECT_GE(*c.bm25_rank, 36);
    }
}

TEST(Pools, RunOfOnlyGoldFillsAtRandom) {
    std::vector<std::string> ids;
    for (int i = 0; i < 30; ++i) ids.push_back("d" + std::to_string(10 + i));
    const std::vector<std::string> gold{"d10", "d11", "d12"};
    const auto run = make_ranking("q", {{"d10", 3}, {"d11", 2}, {"d12", 1}}, "bm25");
    auto rng = pool_stream(1, "q");
    const auto pool = build_candidate_pool("q", gold, run, ids, 5, 5, rng);
    EXPECT_EQ(pool.candidates.size(), 13u);
    std::set<std::string> seen;
    for (const auto& c : pool.candidates) {
        EXPECT_TRUE(seen.insert(c.doc_id).second);
        if (c.provenance != Provenance::Gold) {
            EXPECT_FALSE(c.bm25_rank.has_value());
            EXPECT_EQ(std::find(gold.begin(), gold.end(), c.doc_id), gold.end());
        }
    }
}

TEST(Pools, TinyCorpusCannotFill) {
    const std::vector<std::string> ids{"a", "b", "c"};
    const std::vector<std::string> gold{"a"};
    auto rng = pool_stream(1, "q");
    const auto pool = build_candidate_pool("q", gold, Ranking{}, ids, 5, 5, rng);
    EXPECT_EQ(pool.candidates.size(), 3u);
}

TEST(Pools, ProvenanceRecountFromRun) {
    const auto& f = pool_fixture();
    ASSERT_EQ(f.pools.size(), f.queries.size());
    for (std::size_t i = 0; i < f.pools.size(); ++i) {
        const auto& pool = f.pools[i];
        const auto& gold = f.qrels.at(pool.query_id);
        const auto& run = f.bm25[i];
        ASSERT_EQ(run.query_id, pool.query_id);
        std::vector<std::string> non_gold;
        for (const auto& e : run.entries) {
            if (!gold.count(e.doc_id)) non_gold.push_back(e.doc_id);
        }
        std::set<std::string> noise, irrel;
        for (std::size_t j = 0; j < std::min<std::size_t>(5, non_gold.size()); ++j) noise.insert(non_gold[j]);
        for (std::size_t j = non_gold.size(); j > 0 && irrel.size() < 5; --j) {
            if (!noise.count(non_gold[j - 1])) irrel.insert(non_gold[j - 1]);
        }
        std::set<std::string> pool_gold, pool_noise, pool_irrel;
        for (const auto& c : pool.candidates) {
            if (c.provenance == Provenance::Gold) pool_gold.insert(c.doc_id);
            if (c.provenance == Provenance::Noise && c.bm25_rank) pool_noise.insert(c.doc_id);
            if (c.provenance == Provenance::Irrelevant && c.bm25_rank) pool_irrel.insert(c.doc_id);
        }
        ASSERT_EQ(pool_gold, gold) << pool.query_id;
        ASSERT_EQ(pool_noise, noise) << pool.query_id;
        ASSERT_EQ(pool_irrel, irrel) << pool.query_id;
        ASSERT_EQ(pool.candidates.size(), gold.size() + 10) << pool.query_id;
    }
}

TEST(Pools, DeterministicAndOrderIndependent) {
    const auto& f = pool_fixture();
    const auto again = build_pools(f.queries, f.qrels, f.bm25, f.ids, 5, 5, 42, 1);
    ASSERT_EQ(again.size(), f.pools.size());
    for (std::size_t i = 0; i < again.size(); ++i) EXPECT_EQ(again[i].candidates, f.pools[i].candidates);
    // A single query built alone matches its slot in the batch.
    const auto& q = f.queries[7];
    auto rng = pool_stream(42, q.query_id);
    const auto alone = build_candidate_pool(q.query_id, q.gold, f.bm25[7], f.ids, 5, 5, rng);
    EXPECT_EQ(alone.candidates, f.pools[7].candidates);
}

TEST(Pools, JsonlRoundTrip) {
    TempDir tmp;
    const auto& f = pool_fixture();
    write_pools(tmp / "p.jsonl", f.pools);
    const auto back = read_pools(tmp / "p.jsonl");
    ASSERT_EQ(back.size(), f.pools.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
        EXPECT_EQ(back[i].query_id, f.pools[i].query_id);
        EXPECT_EQ(back[i].candidates, f.pools[i].candidates);
    }
}

// ---- symbolic rerank --------------------------------------------------------

TEST(SymbolicRerank, ExactScorerPerfectOnGeneratedPools) {
    const auto& f = pool_fixture();
    const auto lookup = make_doc_lookup(testing_support::synth5000());
    for (std::size_t i = 0; i < f.pools.size(); ++i) {
        const auto& q = f.queries[i];
        const auto r = symbolic_rerank(q.expression(), f.pools[i], lookup, kExact);
        const auto& gold = f.qrels.at(q.query_id);
        ASSERT_EQ(average_precision(r, gold), 1.0) << q.query_id;
        EXPECT_EQ(recall_at_k(r, gold, f.pools[i].candidates.size()), 1.0);
        // every non-gold candidate breaks at least one predicate
        for (const auto& c : f.pools[i].candidates) {
            if (gold.count(c.doc_id)) continue;
            ASSERT_FALSE(testing_support::brute_force_member(q.tmpl.kind, q.attributes, *lookup.at(c.doc_id)));
        }
    }
}

TEST(SymbolicRerank, RunTag) {
    const auto docs = small_docs();
    const auto r = symbolic_rerank(E::atom("Tea"), small_pool(), make_doc_lookup(docs), kExact);
    EXPECT_EQ(r.run_tag, "symbolic-exact0.05");
    EXPECT_EQ(order_of(r), (std::vector<std::string>{"a", "b", "c", "d", "e"}));
}

// ---- external scorer ------------------------------------------------------------

TEST(ExternalScorer, ConstantScoreFollowsTiePolicy) {
    const auto docs = small_docs();
    ExternalScorer scorer(ScorerProtocolConfig::parse(fake_scorer("const4")));
    const auto res = external_rerank(small_pool(), "Who likes Tea?", make_doc_lookup(docs), scorer);
    // bm25_rank ascending, unranked last, then doc_id
    EXPECT_EQ(order_of(res.ranking), (std::vector<std::string>{"d", "c", "b", "a", "e"}));
    EXPECT_TRUE(res.warnings.empty());
    for (const auto& e : res.ranking.entries) EXPECT_EQ(e.score, 4.0);
}

TEST(ExternalScorer, GoldAwareScorerIsPerfect) {
    TempDir tmp;
    const auto& f = pool_fixture();
    std::vector<BenchQuery> qs(f.queries.begin(), f.queries.begin() + 25);
    write_qrels(tmp / "qrels.txt", qs);
    ExternalScorer scorer(ScorerProtocolConfig::parse(fake_scorer("oracle " + (tmp / "qrels.txt").string())));
    const auto lookup = make_doc_lookup(testing_support::synth5000());
    for (std::size_t i = 0; i < qs.size(); ++i) {
        const auto res = external_rerank(f.pools[i], qs[i].text, lookup, scorer);
        EXPECT_EQ(ndcg_at_k(res.ranking, f.qrels.at(qs[i].query_id), 5), 1.0) << qs[i].query_id;
    }
}

TEST(ExternalScorer, MalformedRepliesScoreZero) {
    const auto docs = small_docs();
    ExternalScorer scorer(ScorerProtocolConfig::parse(fake_scorer("malformed")));
    const auto res = external_rerank(small_pool(), "Who likes Tea?", make_doc_lookup(docs), scorer);
    // request order c, a, b, d, e -> valid 3, garbage, out of range, valid 3, garbage
    std::map<std::string, double> score;
    for (const auto& e : res.ranking.entries) score[e.doc_id] = e.score;
    EXPECT_EQ(score["c"], 3.0);
    EXPECT_EQ(score["a"], 0.0);
    EXPECT_EQ(score["b"], 0.0);
    EXPECT_EQ(score["d"], 3.0);
    EXPECT_EQ(score["e"], 0.0);
    EXPECT_EQ(res.warnings.size(), 3u);
    EXPECT_EQ(order_of(res.ranking), (std::vector<std::string>{"d", "c", "b", "a", "e"}));
}

TEST(ExternalScorer, StrictModeRaises) {
    const auto docs = small_docs();
    auto cfg = ScorerProtocolConfig::parse(fake_scorer("malformed"));
    cfg.strict = true;
    ExternalScorer scorer(cfg);
    EXPECT_THROW(external_rerank(small_pool(), "q", make_doc_lookup(docs), scorer), ProtocolError);
}

TEST(ExternalScorer, TimeoutsScoreZeroWithWarning) {
    const auto docs = small_docs();
    auto cfg = ScorerProtocolConfig::parse(fake_scorer("sleep 2000"));
    cfg.timeout = std::chrono::milliseconds(50);
    cfg.retries = 0;
    ExternalScorer scorer(cfg);
    CandidatePool pool = small_pool();
    pool.candidates.resize(2);
    const auto res = external_rerank(pool, "q", make_doc_lookup(docs), scorer);
    EXPECT_EQ(res.warnings.size(), 2u);
    for (const auto& e : res.ranking.entries) EXPECT_EQ(e.score, 0.0);
}

TEST(ExternalScorer, DeadProcessIsTransportError) {
    const auto docs = small_docs();
    ExternalScorer scorer(ScorerProtocolConfig::parse(fake_scorer("exit")));
    EXPECT_THROW(external_rerank(small_pool(), "q", make_doc_lookup(docs), scorer), TransportError);
}

TEST(ExternalScorer, ConfigParsing) {
    EXPECT_THROW(ScorerProtocolConfig::parse("carrier-pigeon:coop"), ConfigError);
    EXPECT_THROW(ScorerProtocolConfig::parse("subprocess:"), ConfigError);
    const auto http = ScorerProtocolConfig::parse("http:http://localhost:9/x");
    EXPECT_EQ(http.transport, ScorerProtocolConfig::Transport::Http);
    EXPECT_EQ(http.target, "http://localhost:9/x");
}

TEST(ExternalScorer, HttpTransport) {
    httplib::Server server;
    std::atomic<int> calls{0};
    server.Post("/score", [&](const httplib::Request& req, httplib::Response& res) {
        ++calls;
        const auto j = nlohmann::json::parse(req.body);
        const int s = j.at("docid") == "a" || j.at("docid") == "e" ? 4 : 1;
        res.set_content(nlohmann::json{{"qid", j["qid"]}, {"docid", j["docid"]}, {"score", s}}.dump(), "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread th([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    const auto docs = small_docs();
    auto cfg = ScorerProtocolConfig::parse("http:http://127.0.0.1:" + std::to_string(port));
    cfg.in_flight = 3;
    ExternalScorer scorer(cfg);
    const auto res = external_rerank(small_pool(), "Who likes Tea?", make_doc_lookup(docs), scorer);
    server.stop();
    th.join();
    EXPECT_EQ(calls.load(), 5);
    EXPECT_EQ(order_of(res.ranking), (std::vector<std::string>{"a", "e", "d", "c", "b"}));
    EXPECT_TRUE(res.warnings.empty());
}

TEST(ExternalScorer, HttpUnreachable) {
    const auto docs = small_docs();
    auto cfg = ScorerProtocolConfig::parse("http:http://127.0.0.1:1");
    cfg.retries = 1;
    cfg.timeout = std::chrono::milliseconds(500);
    ExternalScorer scorer(cfg);
    EXPECT_THROW(external_rerank(small_pool(), "q", make_doc_lookup(docs), scorer), TransportError);
}

TEST(ExternalScorer, PromptCarriesQueryAndDocument) {
    const auto p = relevance_prompt("Who likes Tea?", "Ann likes Tea.");
    EXPECT_NE(p.find("Query: Who likes Tea?"), std::string::npos);
    EXPECT_NE(p.find("Document: Ann likes Tea."), std::string::npos);
    EXPECT_NE(p.find("0 to 4"), std::string::npos);
}

}  // namespace
