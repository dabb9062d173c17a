#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace setcomp {

/// Dense document number. Indexes number documents by ascending doc_id, so
/// ordering by DocNo is the same as ordering by doc_id.
using DocNo = std::uint32_t;

/// A corpus entity: "{name} likes {a1}, {a2}, ..., and {ak}."
struct EntityDoc {
    std::string doc_id;
    std::string name;
    std::string text;
    std::vector<std::string> attributes;  // sorted, unique, trimmed

    bool has_attribute(std::string_view attr) const;
};

/// Controls how the attribute list after " likes " is split.
struct SplitterConfig {
    /// Also split the final item on its last " and " when it carries no
    /// leading "and " (corpora rendered as "A, B and C.").
    bool split_bare_final_and = false;
};

EntityDoc parse_entity_text(const std::string& doc_id, std::string_view text,
                            const SplitterConfig& splitter = {});

/// Inverse of parse_entity_text for well-formed attribute lists.
std::string render_entity_text(std::string_view name, std::span<const std::string> attributes);

/// Attribute -> sorted posting list of entity numbers. Immutable after build.
class AttributeIndex {
public:
    AttributeIndex() = default;

    std::size_t doc_count() const { return doc_ids_.size(); }
    std::size_t attribute_count() const { return attributes_.size(); }

    /// Sorted attribute vocabulary.
    const std::vector<std::string>& attributes() const { return attributes_; }
    const std::vector<std::string>& doc_ids() const { return doc_ids_; }
    const std::string& doc_id(DocNo d) const { return doc_ids_.at(d); }

    bool contains(std::string_view attr) const;
    /// Empty span for unknown attributes.
    std::span<const DocNo> postings(std::string_view attr) const;
    /// Returns doc_count() when the id is absent.
    DocNo find_doc(std::string_view doc_id) const;

private:
    friend AttributeIndex build_attribute_index(std::span<const EntityDoc> corpus);

    std::vector<std::string> doc_ids_;
    std::vector<std::string> attributes_;
    std::vector<std::vector<DocNo>> lists_;  // parallel to attributes_
    std::unordered_map<std::string, std::size_t> slot_;
};

AttributeIndex build_attribute_index(std::span<const EntityDoc> corpus);

/// Generative parameters for a LIMIT-style synthetic corpus.
struct SynthConfig {
    std::int64_t n_entities = 5000;
    std::int64_t n_attributes = 200;
    double popularity_skew = 1.0;
    std::int64_t min_attrs = 2;
    std::int64_t max_attrs = 8;
    std::uint64_t seed = 42;

    void validate() const;
};

/// Attribute vocabulary used by synth_corpus; entry r has popularity rank r+1.
std::vector<std::string> synth_vocabulary(std::int64_t n_attributes, std::uint64_t seed);

std::vector<EntityDoc> synth_corpus(const SynthConfig& cfg);

struct CorpusLoadResult {
    std::vector<EntityDoc> docs;
    std::size_t skipped = 0;
    std::vector<std::string> problems;  // "line N: message"
};

/// Reads a BEIR-style JSONL corpus ({"_id", "title"?, "text"}). Malformed
/// lines are skipped and reported; a missing file raises IoError.
CorpusLoadResult load_corpus(const std::filesystem::path& path, const SplitterConfig& splitter = {},
                             int threads = 1);

void write_corpus(const std::filesystem::path& path, std::span<const EntityDoc> docs);

}  // namespace setcomp
