#pragma once

#include "setcomp/corpus.hpp"
#include "setcomp/expr.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace setcomp {

enum class TemplateKind { Atomic, Union2, Union3, Inter2, Inter3, Excl2, InterExcl3 };

inline constexpr std::array<TemplateKind, 7> kAllTemplates = {
    TemplateKind::Atomic, TemplateKind::Union2, TemplateKind::Union3,    TemplateKind::Inter2,
    TemplateKind::Inter3, TemplateKind::Excl2,  TemplateKind::InterExcl3};

enum class OperatorFamily { Atomic, Disjunction, Conjunction, Exclusion };

struct QueryTemplate {
    TemplateKind kind = TemplateKind::Atomic;

    int depth() const;
    OperatorFamily operator_family() const;
    std::string_view name() const;
    /// Expression for the template instantiated with the given attributes.
    LogicalExpr expression(std::span<const std::string> attributes) const;
};

std::string_view to_string(TemplateKind kind);
std::string_view to_string(OperatorFamily family);
TemplateKind template_from_string(std::string_view name);
OperatorFamily operator_family_from_string(std::string_view name);

/// Sorted document numbers.
using DocSet = std::vector<DocNo>;

/// Exact evaluation over posting lists. Throws UnknownAttribute for atoms
/// missing from the index.
DocSet eval_set_expr(const LogicalExpr& expr, const AttributeIndex& index);

std::string render_query_text(const QueryTemplate& tmpl, std::span<const std::string> attributes);

struct SizeBucket {
    int lo = 1;
    int hi = 200;
};

struct GenConfig {
    int per_template_limit = 100;
    std::vector<SizeBucket> buckets = {{1, 3}, {4, 10}, {11, 35}, {36, 100}, {101, 200}};
    /// 0 means per_template_limit / number of buckets.
    int per_bucket_quota = 0;
    /// 0 means 200 x per_template_limit.
    std::int64_t max_attempts = 0;
    std::uint64_t seed = 0;

    void validate() const;
    int quota() const;
    std::int64_t attempts() const;
    int min_size() const { return buckets.front().lo; }
    int max_size() const { return buckets.back().hi; }
    /// Bucket holding a gold size, or -1 when outside every bucket.
    int bucket_of(std::size_t gold_size) const;
};

struct BenchQuery {
    std::string query_id;
    QueryTemplate tmpl;
    std::vector<std::string> attributes;
    std::string text;
    std::vector<std::string> gold;  // sorted doc ids
    std::size_t gold_size = 0;
    int bucket = 0;

    LogicalExpr expression() const { return tmpl.expression(attributes); }
};

struct TemplateFill {
    TemplateKind kind = TemplateKind::Atomic;
    std::vector<int> phase1_per_bucket;
    std::vector<int> final_per_bucket;
    std::int64_t attempts_used = 0;
    int accepted = 0;
    bool under_filled = false;
};

std::vector<BenchQuery> sample_template_queries(const QueryTemplate& tmpl, const AttributeIndex& index,
                                                const GenConfig& cfg, std::mt19937_64& rng,
                                                TemplateFill* fill = nullptr);

struct Benchmark {
    std::vector<BenchQuery> queries;
    std::vector<TemplateFill> report;
};

/// Seeded substream for one template, independent of every other template.
std::mt19937_64 template_stream(std::uint64_t seed, TemplateKind kind);

Benchmark generate_benchmark(const AttributeIndex& index, const GenConfig& cfg, int threads = 1);

// ---- file formats ----------------------------------------------------------

void write_queries(const std::filesystem::path& path, std::span<const BenchQuery> queries);
/// Gold sets are left empty; attach them from qrels.
std::vector<BenchQuery> read_queries(const std::filesystem::path& path);
/// TREC qrels: "query_id 0 doc_id 1".
void write_qrels(const std::filesystem::path& path, std::span<const BenchQuery> queries);
void write_generation_report(const std::filesystem::path& path, const Benchmark& bench,
                             const GenConfig& cfg);

}  // namespace setcomp
