#include "setcomp/corpus.hpp"
#include "setcomp/error.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

namespace setcomp {

namespace {

constexpr std::array<std::string_view, 20> kOnsets = {"b",  "br", "c",  "d",  "f",  "g",  "gr",
                                                      "k",  "l",  "m",  "n",  "p",  "pr", "qu",
                                                      "r",  "s",  "st", "t",  "v",  "z"};
constexpr std::array<std::string_view, 8> kVowels = {"a", "e", "i", "o", "u", "ai", "ea", "ou"};
constexpr std::array<std::string_view, 8> kCodas = {"", "", "n", "r", "l", "s", "x", "m"};

// Words the query parser treats as connectives; never emitted as names.
const std::set<std::string> kReserved = {"And", "Or", "Not", "But", "Also", "Both", "Who", "Likes"};

std::string pseudo_word(std::mt19937_64& rng, int syllables) {
    std::uniform_int_distribution<std::size_t> on(0, kOnsets.size() - 1);
    std::uniform_int_distribution<std::size_t> vo(0, kVowels.size() - 1);
    std::uniform_int_distribution<std::size_t> co(0, kCodas.size() - 1);
    std::string w;
    for (int i = 0; i < syllables; ++i) {
        w += kOnsets[on(rng)];
        w += kVowels[vo(rng)];
    }
    w += kCodas[co(rng)];
    w[0] = static_cast<char>(w[0] - 'a' + 'A');
    return w;
}

std::string pseudo_phrase(std::mt19937_64& rng, int max_words) {
    std::uniform_int_distribution<int> words(1, max_words);
    std::uniform_int_distribution<int> syl(2, 3);
    std::string out;
    const int n = words(rng);
    for (int i = 0; i < n; ++i) {
        std::string w;
        do {
            w = pseudo_word(rng, syl(rng));
        } while (kReserved.count(w) != 0);
        if (i > 0) out += ' ';
        out += w;
    }
    return out;
}

std::string zero_pad(std::int64_t value, int width) {
    auto s = std::to_string(value);
    if (static_cast<int>(s.size()) < width) s.insert(0, width - s.size(), '0');
    return s;
}

}  // namespace

void SynthConfig::validate() const {
    if (n_entities < 1) throw ConfigError("n_entities must be >= 1");
    if (n_attributes < 1) throw ConfigError("n_attributes must be >= 1");
    if (!(popularity_skew > 0.0) || !std::isfinite(popularity_skew)) {
        throw ConfigError("popularity_skew must be a positive real");
    }
    if (min_attrs < 1 || min_attrs > max_attrs || max_attrs > n_attributes) {
        throw ConfigError("attrs_per_entity must satisfy 1 <= lo <= hi <= n_attributes");
    }
}

std::vector<std::string> synth_vocabulary(std::int64_t n_attributes, std::uint64_t seed) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0xA77Au};
    std::mt19937_64 rng(seq);
    std::set<std::string> seen;
    std::vector<std::string> vocab;
    vocab.reserve(static_cast<std::size_t>(n_attributes));
    while (static_cast<std::int64_t>(vocab.size()) < n_attributes) {
        auto phrase = pseudo_phrase(rng, 2);
        if (seen.insert(phrase).second) vocab.push_back(std::move(phrase));
    }
    return vocab;
}

std::vector<EntityDoc> synth_corpus(const SynthConfig& cfg) {
    cfg.validate();
    const auto vocab = synth_vocabulary(cfg.n_attributes, cfg.seed);
    const auto m = vocab.size();
    std::vector<double> inv_weight(m);
    for (std::size_t r = 0; r < m; ++r) {
        inv_weight[r] = std::pow(static_cast<double>(r + 1), cfg.popularity_skew);
    }

    std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32), 0xC0495u};
    std::mt19937_64 rng(seq);
    std::uniform_int_distribution<std::int64_t> count(cfg.min_attrs, cfg.max_attrs);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const int width = std::max<int>(6, static_cast<int>(std::to_string(cfg.n_entities).size()));

    std::vector<EntityDoc> docs;
    docs.reserve(static_cast<std::size_t>(cfg.n_entities));
    std::vector<double> keys(m);
    std::vector<std::size_t> order(m);
    for (std::int64_t e = 0; e < cfg.n_entities; ++e) {
        const auto k = static_cast<std::size_t>(count(rng));
        // Weighted sampling without replacement (exponential keys): drawing the
        // k largest log(u)/w is equivalent to successive weighted draws.
        for (std::size_t r = 0; r < m; ++r) {
            double u = unit(rng);
            while (u <= 0.0) u = unit(rng);
            keys[r] = std::log(u) * inv_weight[r];
        }
        std::iota(order.begin(), order.end(), 0);
        std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                          [&](std::size_t a, std::size_t b) {
                              return keys[a] != keys[b] ? keys[a] > keys[b] : a < b;
                          });
        std::vector<std::string> picked;
        picked.reserve(k);
        for (std::size_t i = 0; i < k; ++i) picked.push_back(vocab[order[i]]);

        const auto name = pseudo_phrase(rng, 1) + " " + pseudo_phrase(rng, 1);
        EntityDoc doc;
        doc.doc_id = "e" + zero_pad(e + 1, width);
        doc.name = name;
        doc.text = render_entity_text(name, picked);
        std::sort(picked.begin(), picked.end());
        doc.attributes = std::move(picked);
        docs.push_back(std::move(doc));
    }
    return docs;
}

}  // namespace setcomp
