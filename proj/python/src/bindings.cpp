#include "setcomp/benchgen.hpp"
#include "setcomp/corpus.hpp"
#include "setcomp/error.hpp"
#include "setcomp/eval.hpp"
#include "setcomp/expr.hpp"
#include "setcomp/pipeline.hpp"
#include "setcomp/rerank.hpp"
#include "setcomp/retrieval.hpp"

#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace setcomp;

namespace {

struct Corpus {
    std::vector<EntityDoc> docs;
    AttributeIndex attrs;
    Bm25Index bm25;
    DocLookup lookup;

    Corpus(std::vector<EntityDoc> d, Bm25Params params)
        : docs(std::move(d)), attrs(build_attribute_index(docs)), bm25(Bm25Index::build(docs, params)),
          lookup(make_doc_lookup(docs)) {}
};

std::vector<std::string> gold_ids(const LogicalExpr& expr, const AttributeIndex& index) {
    std::vector<std::string> out;
    for (DocNo d : eval_set_expr(expr, index)) out.push_back(index.doc_id(d));
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Set-compositional retrieval benchmark toolkit";

    auto base = py::register_exception<Error>(m, "SetcompError", PyExc_RuntimeError);
    py::register_exception<ParseError>(m, "ParseError", base);
    py::register_exception<IoError>(m, "IoError", base);
    py::register_exception<ConfigError>(m, "ConfigError", base);
    py::register_exception<DuplicateDocId>(m, "DuplicateDocId", base);
    py::register_exception<UnknownAttribute>(m, "UnknownAttribute", base);
    py::register_exception<ArityError>(m, "ArityError", base);
    py::register_exception<UnrecognizedTemplate>(m, "UnrecognizedTemplate", base);
    py::register_exception<EmptyCorpus>(m, "EmptyCorpus", base);
    py::register_exception<EmptyGold>(m, "EmptyGold", base);
    py::register_exception<TransportError>(m, "TransportError", base);
    py::register_exception<ProtocolError>(m, "ProtocolError", base);
    py::register_exception<MissingMetadata>(m, "MissingMetadata", base);
    py::register_exception<StrictMissingQrels>(m, "StrictMissingQrels", base);

    // ---- corpus ----
    py::class_<EntityDoc>(m, "EntityDoc")
        .def_readonly("doc_id", &EntityDoc::doc_id)
        .def_readonly("name", &EntityDoc::name)
        .def_readonly("text", &EntityDoc::text)
        .def_readonly("attributes", &EntityDoc::attributes)
        .def("__repr__", [](const EntityDoc& d) { return "<EntityDoc " + d.doc_id + ": " + d.text + ">"; });

    m.def(
        "parse_entity_text",
        [](const std::string& doc_id, const std::string& text, bool split_bare_final_and) {
            return parse_entity_text(doc_id, text, SplitterConfig{split_bare_final_and});
        },
        py::arg("doc_id"), py::arg("text"), py::arg("split_bare_final_and") = false);
    m.def(
        "render_entity_text",
        [](const std::string& name, const std::vector<std::string>& attrs) { return render_entity_text(name, attrs); },
        py::arg("name"), py::arg("attributes"));
    m.def(
        "synth_corpus",
        [](std::int64_t entities, std::int64_t attributes, double skew, std::int64_t min_attrs,
           std::int64_t max_attrs, std::uint64_t seed) {
            return synth_corpus(SynthConfig{entities, attributes, skew, min_attrs, max_attrs, seed});
        },
        py::arg("entities") = 5000, py::arg("attributes") = 200, py::arg("skew") = 1.0, py::arg("min_attrs") = 2,
        py::arg("max_attrs") = 8, py::arg("seed") = 42);
    m.def(
        "load_corpus",
        [](const std::filesystem::path& path, bool split_bare_final_and) {
            auto res = load_corpus(path, SplitterConfig{split_bare_final_and});
            return py::make_tuple(std::move(res.docs), std::move(res.problems));
        },
        py::arg("path"), py::arg("split_bare_final_and") = false,
        "Returns (docs, problems); malformed lines are skipped.");
    m.def(
        "write_corpus", [](const std::filesystem::path& p, const std::vector<EntityDoc>& d) { write_corpus(p, d); },
        py::arg("path"), py::arg("docs"));

    // ---- expressions and queries ----
    py::class_<LogicalExpr>(m, "LogicalExpr")
        .def_static("atom", &LogicalExpr::atom)
        .def_static("all_of", &LogicalExpr::all_of)
        .def_static("any_of", &LogicalExpr::any_of)
        .def_static("negate", &LogicalExpr::negate)
        .def_property_readonly("op",
                               [](const LogicalExpr& e) {
                                   switch (e.op) {
                                       case LogicalExpr::Op::Atom: return "atom";
                                       case LogicalExpr::Op::And: return "and";
                                       case LogicalExpr::Op::Or: return "or";
                                       default: return "not";
                                   }
                               })
        .def_readonly("attribute", &LogicalExpr::attribute)
        .def_readonly("children", &LogicalExpr::children)
        .def("atoms", &LogicalExpr::atoms)
        .def("__str__", &LogicalExpr::to_string)
        .def("__repr__", [](const LogicalExpr& e) { return "<LogicalExpr " + e.to_string() + ">"; })
        .def(py::self == py::self);

    m.def("parse_query_text", &parse_query_text, py::arg("text"));
    m.def(
        "render_query_text",
        [](const std::string& tmpl, const std::vector<std::string>& attrs) {
            return render_query_text(QueryTemplate{template_from_string(tmpl)}, attrs);
        },
        py::arg("template"), py::arg("attributes"));
    m.def("templates", [] {
        std::vector<std::string> out;
        for (auto k : kAllTemplates) out.emplace_back(to_string(k));
        return out;
    });

    py::class_<BenchQuery>(m, "BenchQuery")
        .def_readonly("query_id", &BenchQuery::query_id)
        .def_property_readonly("template", [](const BenchQuery& q) { return std::string(q.tmpl.name()); })
        .def_property_readonly("depth", [](const BenchQuery& q) { return q.tmpl.depth(); })
        .def_property_readonly("operator_family",
                               [](const BenchQuery& q) { return std::string(to_string(q.tmpl.operator_family())); })
        .def_readonly("attributes", &BenchQuery::attributes)
        .def_readonly("text", &BenchQuery::text)
        .def_readonly("gold", &BenchQuery::gold)
        .def_readonly("bucket", &BenchQuery::bucket)
        .def("expression", &BenchQuery::expression);

    // ---- corpus handle with both indexes ----
    py::class_<Corpus>(m, "Corpus")
        .def(py::init([](std::vector<EntityDoc> docs, double k1, double b) {
                 return std::make_unique<Corpus>(std::move(docs), Bm25Params{k1, b});
             }),
             py::arg("docs"), py::arg("k1") = 0.9, py::arg("b") = 0.4)
        .def("__len__", [](const Corpus& c) { return c.docs.size(); })
        .def_property_readonly("doc_ids", [](const Corpus& c) { return c.attrs.doc_ids(); })
        .def_property_readonly("attributes", [](const Corpus& c) { return c.attrs.attributes(); })
        .def_property_readonly("avg_doc_length", [](const Corpus& c) { return c.bm25.avg_doc_length(); })
        .def(
            "postings",
            [](const Corpus& c, const std::string& attr) {
                std::vector<std::string> out;
                for (DocNo d : c.attrs.postings(attr)) out.push_back(c.attrs.doc_id(d));
                return out;
            },
            py::arg("attribute"))
        .def("idf", [](const Corpus& c, const std::string& t) { return c.bm25.idf(t); }, py::arg("term"))
        .def(
            "gold", [](const Corpus& c, const LogicalExpr& e) { return gold_ids(e, c.attrs); }, py::arg("expr"),
            "Exact set evaluation, doc ids ascending.")
        .def(
            "generate_benchmark",
            [](const Corpus& c, int per_template, std::uint64_t seed, int threads) {
                GenConfig cfg;
                cfg.per_template_limit = per_template;
                cfg.seed = seed;
                return generate_benchmark(c.attrs, cfg, threads).queries;
            },
            py::arg("per_template") = 100, py::arg("seed") = 42, py::arg("threads") = 1)
        .def(
            "bm25_search",
            [](const Corpus& c, const std::string& text, std::size_t k) { return bm25_search(c.bm25, text, k); },
            py::arg("text"), py::arg("k") = 1000)
        .def(
            "setcomp_search",
            [](const Corpus& c, const LogicalExpr& e, std::size_t k, double alpha) {
                SetCompConfig cfg;
                cfg.alpha = alpha;
                cfg.validate();
                return setcomp_search(c.bm25, e, k, cfg);
            },
            py::arg("expr"), py::arg("k") = 1000, py::arg("alpha") = 1.0)
        .def(
            "oracle_search", [](const Corpus& c, const LogicalExpr& e) { return oracle_search(e, c.attrs); },
            py::arg("expr"))
        .def(
            "symbolic_score",
            [](const Corpus& c, const LogicalExpr& e, const std::string& doc_id, const std::string& scorer) {
                const auto it = c.lookup.find(doc_id);
                if (it == c.lookup.end()) throw py::key_error(doc_id);
                return symbolic_score(e, *it->second, PredicateScorer::parse(scorer));
            },
            py::arg("expr"), py::arg("doc_id"), py::arg("scorer") = "exact:0.05")
        .def(
            "symbolic_rerank",
            [](const Corpus& c, const LogicalExpr& e, const CandidatePool& pool, const std::string& scorer) {
                return symbolic_rerank(e, pool, c.lookup, PredicateScorer::parse(scorer));
            },
            py::arg("expr"), py::arg("pool"), py::arg("scorer") = "exact:0.05")
        .def(
            "build_pools",
            [](const Corpus& c, const std::vector<BenchQuery>& queries, const std::vector<Ranking>& bm25_run,
               int n_noise, int n_irrel, std::uint64_t seed) {
                Qrels qrels;
                for (const auto& q : queries) qrels[q.query_id].insert(q.gold.begin(), q.gold.end());
                return build_pools(queries, qrels, bm25_run, c.attrs.doc_ids(), n_noise, n_irrel, seed);
            },
            py::arg("queries"), py::arg("bm25_run"), py::arg("n_noise") = 5, py::arg("n_irrel") = 5,
            py::arg("seed") = 42);

    // ---- rankings, pools ----
    py::class_<Ranking>(m, "Ranking")
        .def_readonly("query_id", &Ranking::query_id)
        .def_readonly("run_tag", &Ranking::run_tag)
        .def_property_readonly("doc_ids",
                               [](const Ranking& r) {
                                   std::vector<std::string> out;
                                   for (const auto& e : r.entries) out.push_back(e.doc_id);
                                   return out;
                               })
        .def_property_readonly("scores",
                               [](const Ranking& r) {
                                   std::vector<double> out;
                                   for (const auto& e : r.entries) out.push_back(e.score);
                                   return out;
                               })
        .def("__len__", [](const Ranking& r) { return r.entries.size(); });

    m.def(
        "make_ranking",
        [](std::string qid, std::vector<std::pair<std::string, double>> scored, std::string tag) {
            return make_ranking(std::move(qid), std::move(scored), std::move(tag));
        },
        py::arg("query_id"), py::arg("scored"), py::arg("run_tag") = "run");

    py::class_<CandidatePool>(m, "CandidatePool")
        .def_readonly("query_id", &CandidatePool::query_id)
        .def_property_readonly("doc_ids",
                               [](const CandidatePool& p) {
                                   std::vector<std::string> out;
                                   for (const auto& e : p.candidates) out.push_back(e.doc_id);
                                   return out;
                               })
        .def_property_readonly("provenance",
                               [](const CandidatePool& p) {
                                   std::vector<std::string> out;
                                   for (const auto& e : p.candidates) out.emplace_back(to_string(e.provenance));
                                   return out;
                               })
        .def("__len__", [](const CandidatePool& p) { return p.candidates.size(); });

    // ---- metrics ----
    m.def(
        "recall_at_k", [](const Ranking& r, const std::set<std::string>& g, std::size_t k) { return recall_at_k(r, g, k); },
        py::arg("ranking"), py::arg("gold"), py::arg("k"));
    m.def(
        "ndcg_at_k", [](const Ranking& r, const std::set<std::string>& g, std::size_t k) { return ndcg_at_k(r, g, k); },
        py::arg("ranking"), py::arg("gold"), py::arg("k"));
    m.def("average_precision", &average_precision, py::arg("ranking"), py::arg("gold"));

    m.def(
        "evaluate",
        [](const std::vector<Ranking>& run, const std::map<std::string, std::set<std::string>>& qrels,
           const std::vector<int>& cutoffs, bool strict) {
            const auto report = evaluate_run(run, qrels, cutoffs, strict);
            return py::make_tuple(report.aggregates, report.per_query, report.warnings);
        },
        py::arg("run"), py::arg("qrels"), py::arg("cutoffs") = kDefaultCutoffs, py::arg("strict") = false,
        "Returns (aggregates, per_query, warnings).");
    m.def("read_qrels", &read_qrels, py::arg("path"));
    m.def("read_run", &read_run, py::arg("path"));
    m.def(
        "write_run", [](const std::filesystem::path& p, const std::vector<Ranking>& r) { write_run(p, r); },
        py::arg("path"), py::arg("rankings"));

    // ---- pipeline ----
    m.def(
        "run_pipeline",
        [](const std::filesystem::path& outdir, std::vector<std::string> stages, std::int64_t entities,
           std::int64_t attributes, int per_template, std::uint64_t seed, int threads) {
            PipelineConfig cfg;
            cfg.outdir = outdir;
            cfg.synth.n_entities = entities;
            cfg.synth.n_attributes = attributes;
            cfg.gen.per_template_limit = per_template;
            cfg.seed = seed;
            cfg.threads = threads;
            py::gil_scoped_release release;
            run_pipeline_or_throw(cfg, stages);
        },
        py::arg("outdir"), py::arg("stages") = kPipelineStages, py::arg("entities") = 5000,
        py::arg("attributes") = 200, py::arg("per_template") = 100, py::arg("seed") = 42, py::arg("threads") = 1);
}
