#include "setcomp/error.hpp"
#include "setcomp/retrieval.hpp"
#include "setcomp/text.hpp"

namespace setcomp {

namespace {

constexpr std::string_view kPrefix = "Who likes ";

[[noreturn]] void reject(std::string_view text, std::string_view why) {
    throw UnrecognizedTemplate("unrecognized query \"" + std::string(text) + "\": " + std::string(why));
}

LogicalExpr atom_of(std::string_view full, std::string_view part) {
    part = trim(part);
    if (part.empty()) reject(full, "empty predicate");
    return LogicalExpr::atom(std::string(part));
}

}  // namespace

LogicalExpr parse_query_text(std::string_view text) {
    std::string_view body = trim(text);
    if (!body.starts_with(kPrefix)) reject(text, "missing \"Who likes\" prefix");
    body.remove_prefix(kPrefix.size());
    if (!body.ends_with('?')) reject(text, "missing trailing '?'");
    body.remove_suffix(1);

    using E = LogicalExpr;
    if (const auto pos = body.find(" but not "); pos != std::string_view::npos) {
        const auto head = body.substr(0, pos);
        auto excluded = E::negate(atom_of(text, body.substr(pos + 9)));
        if (const auto also = head.find(" and also "); also != std::string_view::npos) {
            return E::all_of({atom_of(text, head.substr(0, also)), atom_of(text, head.substr(also + 10)),
                              std::move(excluded)});
        }
        return E::all_of({atom_of(text, head), std::move(excluded)});
    }
    if (const auto pos = body.find(" and also both "); pos != std::string_view::npos) {
        const auto tail = body.substr(pos + 15);
        const auto mid = tail.find(" and ");
        if (mid == std::string_view::npos) reject(text, "\"both\" without a second conjunct");
        return E::all_of({atom_of(text, body.substr(0, pos)), atom_of(text, tail.substr(0, mid)),
                          atom_of(text, tail.substr(mid + 5))});
    }
    if (const auto pos = body.find(" and also "); pos != std::string_view::npos) {
        return E::all_of({atom_of(text, body.substr(0, pos)), atom_of(text, body.substr(pos + 10))});
    }
    if (body.find(" or ") != std::string_view::npos) {
        const auto parts = split(body, " or ");
        if (parts.size() > 3) reject(text, "more than three disjuncts");
        std::vector<LogicalExpr> children;
        for (auto p : parts) children.push_back(atom_of(text, p));
        return E::any_of(std::move(children));
    }
    return atom_of(text, body);
}

}  // namespace setcomp
