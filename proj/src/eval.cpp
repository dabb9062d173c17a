#include "setcomp/eval.hpp"

#include "setcomp/error.hpp"
#include "setcomp/parallel.hpp"
#include "setcomp/text.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>

namespace setcomp {

Qrels read_qrels(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open qrels file: " + path.string());
    Qrels qrels;
    std::size_t line_no = 0;
    for (std::string line; std::getline(in, line);) {
        ++line_no;
        const auto view = trim(line);
        if (view.empty()) continue;
        std::string qid, doc;
        double rel = 0.0;
        if (view.front() == '{') {
            try {
                const auto j = nlohmann::json::parse(view);
                const auto& q = j.at("query-id");
                const auto& d = j.at("corpus-id");
                qid = q.is_string() ? q.get<std::string>() : q.dump();
                doc = d.is_string() ? d.get<std::string>() : d.dump();
                rel = j.contains("score") ? j["score"].get<double>() : 1.0;
            } catch (const std::exception& e) {
                throw ParseError(path.string() + " line " + std::to_string(line_no) + ": " + e.what());
            }
        } else {
            std::istringstream fields{std::string(view)};
            std::vector<std::string> f;
            for (std::string tok; fields >> tok;) f.push_back(tok);
            try {
                if (f.size() == 4) {
                    qid = f[0];
                    doc = f[2];
                    rel = std::stod(f[3]);
                } else if (f.size() == 3) {
                    if (line_no == 1 && f[0] == "query-id") continue;  // BEIR header
                    qid = f[0];
                    doc = f[1];
                    rel = std::stod(f[2]);
                } else {
                    throw ParseError("expected 3 or 4 fields");
                }
            } catch (const std::exception& e) {
                throw ParseError(path.string() + " line " + std::to_string(line_no) + ": " + e.what());
            }
        }
        if (rel > 0.0) qrels[qid].insert(doc);
    }
    return qrels;
}

double recall_at_k(const Ranking& ranking, const std::set<std::string>& gold, std::size_t k) {
    if (gold.empty()) throw EmptyGold();
    if (k == 0) throw ConfigError("k must be >= 1");
    const auto depth = std::min(k, ranking.entries.size());
    std::size_t hits = 0;
    for (std::size_t i = 0; i < depth; ++i) hits += gold.count(ranking.entries[i].doc_id);
    return static_cast<double>(hits) / static_cast<double>(gold.size());
}

double ndcg_at_k(const Ranking& ranking, const std::set<std::string>& gold, std::size_t k) {
    if (gold.empty()) throw EmptyGold();
    if (k == 0) throw ConfigError("k must be >= 1");
    const auto depth = std::min(k, ranking.entries.size());
    double dcg = 0.0;
    for (std::size_t i = 0; i < depth; ++i) {
        if (gold.count(ranking.entries[i].doc_id)) dcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
    }
    double idcg = 0.0;
    for (std::size_t i = 0; i < std::min(k, gold.size()); ++i) idcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
    return dcg / idcg;
}

double average_precision(const Ranking& ranking, const std::set<std::string>& gold) {
    if (gold.empty()) throw EmptyGold();
    double sum = 0.0;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < ranking.entries.size(); ++i) {
        if (gold.count(ranking.entries[i].doc_id)) {
            ++hits;
            sum += static_cast<double>(hits) / static_cast<double>(i + 1);
        }
    }
    return sum / static_cast<double>(gold.size());
}

std::vector<std::string> EvalReport::metric_names() const {
    std::vector<std::string> names;
    for (int k : cutoffs) names.push_back(fmt::format("recall@{}", k));
    for (int k : cutoffs) names.push_back(fmt::format("ndcg@{}", k));
    names.emplace_back("ap");
    return names;
}

namespace {

std::map<std::string, double> means_of(const EvalReport& report, const std::vector<const std::string*>& qids) {
    std::map<std::string, double> out;
    for (const auto& name : report.metric_names()) {
        double sum = 0.0;
        for (const auto* q : qids) sum += report.per_query.at(*q).at(name);
        out[name] = qids.empty() ? 0.0 : sum / static_cast<double>(qids.size());
    }
    return out;
}

}  // namespace

EvalReport evaluate_run(std::span<const Ranking> run, const Qrels& qrels, const std::vector<int>& cutoffs,
                        bool strict, int threads) {
    if (cutoffs.empty()) throw ConfigError("at least one cutoff is required");
    for (int k : cutoffs) {
        if (k < 1) throw ConfigError("cutoffs must be >= 1");
    }
    EvalReport report;
    report.cutoffs = cutoffs;
    std::unordered_map<std::string, const Ranking*> by_query;
    for (const auto& r : run) {
        if (report.run_tag.empty()) report.run_tag = r.run_tag;
        if (qrels.count(r.query_id) == 0) {
            if (strict) throw StrictMissingQrels("run query not in qrels: " + r.query_id);
            report.warnings.push_back("run query not in qrels, skipped: " + r.query_id);
            spdlog::warn("{}", report.warnings.back());
            continue;
        }
        by_query.emplace(r.query_id, &r);
    }

    std::vector<const std::string*> qids;
    for (const auto& [qid, _] : qrels) qids.push_back(&qid);
    std::vector<std::map<std::string, double>> rows(qids.size());
    const Ranking empty;
    parallel_for(qids.size(), threads, [&](std::size_t i) {
        const auto& gold = qrels.at(*qids[i]);
        auto it = by_query.find(*qids[i]);
        const Ranking& r = it == by_query.end() ? empty : *it->second;
        auto& row = rows[i];
        for (int k : cutoffs) row[fmt::format("recall@{}", k)] = recall_at_k(r, gold, static_cast<std::size_t>(k));
        for (int k : cutoffs) row[fmt::format("ndcg@{}", k)] = ndcg_at_k(r, gold, static_cast<std::size_t>(k));
        row["ap"] = average_precision(r, gold);
    });
    for (std::size_t i = 0; i < qids.size(); ++i) report.per_query.emplace(*qids[i], std::move(rows[i]));
    report.aggregates = means_of(report, qids);
    return report;
}

EvalReport stratified_report(const EvalReport& report, const std::map<std::string, QueryMeta>& meta,
                             const std::vector<std::string>& keys) {
    EvalReport out = report;
    out.strata.clear();
    for (const auto& [qid, _] : report.per_query) {
        if (meta.count(qid) == 0) throw MissingMetadata("no template metadata for query " + qid);
    }
    for (const auto& key : keys) {
        std::map<std::string, std::vector<const std::string*>> groups;
        for (const auto& [qid, _] : report.per_query) {
            const auto& m = meta.at(qid);
            std::string value;
            if (key == "template") {
                value = m.template_name;
            } else if (key == "depth") {
                value = std::to_string(m.depth);
            } else if (key == "operator_family") {
                value = m.operator_family;
            } else {
                throw ConfigError("unknown strata key: " + key);
            }
            groups[value].push_back(&qid);
        }
        for (const auto& [value, members] : groups) {
            out.strata.push_back({key, value, members.size(), means_of(report, members)});
        }
    }
    return out;
}

void write_report_csv(const std::filesystem::path& path, const EvalReport& report,
                      const std::map<std::string, QueryMeta>& meta) {
    auto out = open_output(path, "report");
    const auto names = report.metric_names();
    out << "query_id,template,depth,operator_family";
    for (const auto& n : names) out << ',' << n;
    out << '\n';
    for (const auto& [qid, row] : report.per_query) {
        auto it = meta.find(qid);
        out << qid;
        if (it != meta.end()) {
            out << ',' << it->second.template_name << ',' << it->second.depth << ',' << it->second.operator_family;
        } else {
            out << ",,,";
        }
        for (const auto& n : names) out << ',' << fmt::format("{}", row.at(n));
        out << '\n';
    }
}

void write_strata_csv(const std::filesystem::path& path, const EvalReport& report) {
    auto out = open_output(path, "strata");
    const auto names = report.metric_names();
    out << "key,value,count";
    for (const auto& n : names) out << ',' << n;
    out << '\n';
    out << "all,all," << report.per_query.size();
    for (const auto& n : names) out << ',' << fmt::format("{}", report.aggregates.at(n));
    out << '\n';
    for (const auto& s : report.strata) {
        out << s.key << ',' << s.value << ',' << s.count;
        for (const auto& n : names) out << ',' << fmt::format("{}", s.means.at(n));
        out << '\n';
    }
}

void write_report_md(const std::filesystem::path& path, const EvalReport& report) {
    auto out = open_output(path, "report");
    const auto names = report.metric_names();
    out << "# Evaluation: " << (report.run_tag.empty() ? "run" : report.run_tag) << "\n\n";
    out << "| Template | n |";
    for (const auto& n : names) out << ' ' << n << " |";
    out << "\n|---|---:|";
    for (std::size_t i = 0; i < names.size(); ++i) out << "---:|";
    out << '\n';
    for (const auto& s : report.strata) {
        if (s.key != "template") continue;
        out << "| " << s.value << " | " << s.count << " |";
        for (const auto& n : names) out << fmt::format(" {:.4f} |", s.means.at(n));
        out << '\n';
    }
    out << "| **All** | " << report.per_query.size() << " |";
    for (const auto& n : names) out << fmt::format(" {:.4f} |", report.aggregates.at(n));
    out << '\n';

    bool header = false;
    for (const auto& s : report.strata) {
        if (s.key == "template") continue;
        if (!header) {
            out << "\n| Stratum | n |";
            for (const auto& n : names) out << ' ' << n << " |";
            out << "\n|---|---:|";
            for (std::size_t i = 0; i < names.size(); ++i) out << "---:|";
            out << '\n';
            header = true;
        }
        out << "| " << s.key << '=' << s.value << " | " << s.count << " |";
        for (const auto& n : names) out << fmt::format(" {:.4f} |", s.means.at(n));
        out << '\n';
    }
}

}  // namespace setcomp
