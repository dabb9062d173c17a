#pragma once

// Shared fixtures and independent reference implementations for the tests.

#include "setcomp/benchgen.hpp"
#include "setcomp/corpus.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace testing_support {

namespace fs = std::filesystem;

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
        path_ = fs::temp_directory_path() /
                ("setcomp_test_" + std::to_string(stamp) + "_" + std::to_string(counter++));
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& name) const { return path_ / name; }

private:
    fs::path path_;
};

inline std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void spit(const fs::path& p, const std::string& content) {
    std::ofstream out(p, std::ios::binary);
    out << content;
}

/// Relative path -> bytes for every regular file under root.
inline std::map<std::string, std::string> tree_contents(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (e.is_regular_file()) out[fs::relative(e.path(), root).generic_string()] = slurp(e.path());
    }
    return out;
}

/// The default 5000-entity synthetic corpus, built once per process.
inline const std::vector<setcomp::EntityDoc>& synth5000() {
    static const auto docs = [] {
        setcomp::SynthConfig cfg;
        cfg.n_entities = 5000;
        cfg.n_attributes = 200;
        cfg.seed = 42;
        return setcomp::synth_corpus(cfg);
    }();
    return docs;
}

/// Membership by reading the template's predicate formula straight off the
/// entity's attribute list. Deliberately shares nothing with eval_set_expr.
inline bool brute_force_member(setcomp::TemplateKind kind, const std::vector<std::string>& a,
                               const setcomp::EntityDoc& doc) {
    auto has = [&](std::size_t i) {
        return std::find(doc.attributes.begin(), doc.attributes.end(), a.at(i)) != doc.attributes.end();
    };
    using K = setcomp::TemplateKind;
    switch (kind) {
        case K::Atomic: return has(0);
        case K::Union2: return has(0) || has(1);
        case K::Union3: return has(0) || has(1) || has(2);
        case K::Inter2: return has(0) && has(1);
        case K::Inter3: return has(0) && has(1) && has(2);
        case K::Excl2: return has(0) && !has(1);
        case K::InterExcl3: return has(0) && has(1) && !has(2);
    }
    return false;
}

inline std::vector<std::string> brute_force_gold(setcomp::TemplateKind kind, const std::vector<std::string>& a,
                                                 const std::vector<setcomp::EntityDoc>& docs) {
    std::vector<std::string> out;
    for (const auto& d : docs) {
        if (brute_force_member(kind, a, d)) out.push_back(d.doc_id);
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace testing_support
