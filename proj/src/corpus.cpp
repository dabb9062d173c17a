#include "setcomp/corpus.hpp"

#include "setcomp/error.hpp"
#include "setcomp/parallel.hpp"
#include "setcomp/text.hpp"

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <optional>

namespace setcomp {

namespace {

constexpr std::string_view kLikes = " likes ";

void strip_trailing_period(std::string_view& s) {
    s = trim(s);
    if (!s.empty() && s.back() == '.') s.remove_suffix(1);
    s = trim(s);
}

}  // namespace

int resolve_threads(int requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("SETCOMP_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    return 1;
}

bool EntityDoc::has_attribute(std::string_view attr) const {
    return std::binary_search(attributes.begin(), attributes.end(), attr,
                              [](std::string_view a, std::string_view b) { return a < b; });
}

EntityDoc parse_entity_text(const std::string& doc_id, std::string_view text,
                            const SplitterConfig& splitter) {
    const auto marker = text.find(kLikes);
    if (marker == std::string_view::npos) {
        throw ParseError("doc " + doc_id + ": missing \" likes \" marker");
    }
    EntityDoc doc;
    doc.doc_id = doc_id;
    doc.name = std::string(trim(text.substr(0, marker)));
    doc.text = std::string(text);

    std::string_view list = text.substr(marker + kLikes.size());
    strip_trailing_period(list);

    std::vector<std::string_view> items = split(list, ", ");
    if (splitter.split_bare_final_and && !items.empty()) {
        auto last = trim(items.back());
        if (!last.starts_with("and ")) {
            const auto pos = last.rfind(" and ");
            if (pos != std::string_view::npos) {
                items.back() = last.substr(0, pos);
                items.push_back(last.substr(pos + 5));
            }
        }
    }
    for (auto item : items) {
        item = trim(item);
        if (item.starts_with("and ")) item = trim(item.substr(4));
        strip_trailing_period(item);
        if (!item.empty()) doc.attributes.emplace_back(item);
    }
    std::sort(doc.attributes.begin(), doc.attributes.end());
    doc.attributes.erase(std::unique(doc.attributes.begin(), doc.attributes.end()),
                         doc.attributes.end());
    if (doc.attributes.empty()) {
        throw ParseError("doc " + doc_id + ": empty attribute list");
    }
    return doc;
}

std::string render_entity_text(std::string_view name, std::span<const std::string> attributes) {
    std::string out(name);
    out += kLikes;
    for (std::size_t i = 0; i < attributes.size(); ++i) {
        if (i > 0) out += ", ";
        if (i > 0 && i + 1 == attributes.size()) out += "and ";
        out += attributes[i];
    }
    out += '.';
    return out;
}

bool AttributeIndex::contains(std::string_view attr) const {
    return slot_.find(std::string(attr)) != slot_.end();
}

std::span<const DocNo> AttributeIndex::postings(std::string_view attr) const {
    auto it = slot_.find(std::string(attr));
    if (it == slot_.end()) return {};
    return lists_[it->second];
}

DocNo AttributeIndex::find_doc(std::string_view doc_id) const {
    auto it = std::lower_bound(doc_ids_.begin(), doc_ids_.end(), doc_id);
    if (it == doc_ids_.end() || *it != doc_id) return static_cast<DocNo>(doc_ids_.size());
    return static_cast<DocNo>(it - doc_ids_.begin());
}

AttributeIndex build_attribute_index(std::span<const EntityDoc> corpus) {
    std::vector<const EntityDoc*> order;
    order.reserve(corpus.size());
    for (const auto& d : corpus) order.push_back(&d);
    std::sort(order.begin(), order.end(),
              [](const EntityDoc* a, const EntityDoc* b) { return a->doc_id < b->doc_id; });
    for (std::size_t i = 1; i < order.size(); ++i) {
        if (order[i]->doc_id == order[i - 1]->doc_id) throw DuplicateDocId(order[i]->doc_id);
    }

    AttributeIndex index;
    index.doc_ids_.reserve(order.size());
    std::unordered_map<std::string, std::vector<DocNo>> postings;
    for (std::size_t i = 0; i < order.size(); ++i) {
        index.doc_ids_.push_back(order[i]->doc_id);
        for (const auto& a : order[i]->attributes) {
            auto& list = postings[a];
            // attributes are unique per doc, and docs arrive in ascending order
            list.push_back(static_cast<DocNo>(i));
        }
    }
    index.attributes_.reserve(postings.size());
    for (const auto& [attr, _] : postings) index.attributes_.push_back(attr);
    std::sort(index.attributes_.begin(), index.attributes_.end());
    index.lists_.reserve(index.attributes_.size());
    for (std::size_t i = 0; i < index.attributes_.size(); ++i) {
        index.slot_.emplace(index.attributes_[i], i);
        index.lists_.push_back(std::move(postings[index.attributes_[i]]));
    }
    return index;
}

CorpusLoadResult load_corpus(const std::filesystem::path& path, const SplitterConfig& splitter,
                             int threads) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open corpus file: " + path.string());
    std::vector<std::string> lines;
    for (std::string line; std::getline(in, line);) lines.push_back(std::move(line));

    struct Slot {
        std::optional<EntityDoc> doc;
        std::string problem;
        bool blank = false;
    };
    std::vector<Slot> slots(lines.size());
    parallel_for(lines.size(), threads, [&](std::size_t i) {
        auto view = trim(lines[i]);
        if (view.empty()) {
            slots[i].blank = true;
            return;
        }
        try {
            const auto j = nlohmann::json::parse(view);
            if (!j.contains("_id") || !j.contains("text")) {
                throw ParseError("missing _id or text field");
            }
            const auto id = j["_id"].is_string() ? j["_id"].get<std::string>() : j["_id"].dump();
            slots[i].doc = parse_entity_text(id, j["text"].get<std::string>(), splitter);
        } catch (const std::exception& e) {
            slots[i].problem = "line " + std::to_string(i + 1) + ": " + e.what();
        }
    });

    CorpusLoadResult result;
    for (auto& s : slots) {
        if (s.blank) continue;
        if (s.doc) {
            result.docs.push_back(std::move(*s.doc));
        } else {
            ++result.skipped;
            spdlog::warn("{}: skipping {}", path.string(), s.problem);
            result.problems.push_back(std::move(s.problem));
        }
    }
    return result;
}

void write_corpus(const std::filesystem::path& path, std::span<const EntityDoc> docs) {
    auto out = open_output(path, "corpus file");
    for (const auto& d : docs) {
        nlohmann::ordered_json j;
        j["_id"] = d.doc_id;
        j["title"] = "";
        j["text"] = d.text;
        out << j.dump() << '\n';
    }
}

}  // namespace setcomp
