#include "setcomp/expr.hpp"

#include <nlohmann/json.hpp>

namespace setcomp {

LogicalExpr LogicalExpr::atom(std::string attribute) {
    LogicalExpr e;
    e.op = Op::Atom;
    e.attribute = std::move(attribute);
    return e;
}

LogicalExpr LogicalExpr::all_of(std::vector<LogicalExpr> children) {
    LogicalExpr e;
    e.op = Op::And;
    e.children = std::move(children);
    return e;
}

LogicalExpr LogicalExpr::any_of(std::vector<LogicalExpr> children) {
    LogicalExpr e;
    e.op = Op::Or;
    e.children = std::move(children);
    return e;
}

LogicalExpr LogicalExpr::negate(LogicalExpr child) {
    LogicalExpr e;
    e.op = Op::Not;
    e.children.push_back(std::move(child));
    return e;
}

std::vector<std::string> LogicalExpr::atoms() const {
    if (op == Op::Atom) return {attribute};
    std::vector<std::string> out;
    for (const auto& c : children) {
        auto sub = c.atoms();
        out.insert(out.end(), sub.begin(), sub.end());
    }
    return out;
}

std::string LogicalExpr::to_string() const {
    switch (op) {
        case Op::Atom:
            return nlohmann::json(attribute).dump();
        case Op::Not:
            return "(not " + children.front().to_string() + ")";
        case Op::And:
        case Op::Or: {
            std::string out = op == Op::And ? "(and" : "(or";
            for (const auto& c : children) out += " " + c.to_string();
            return out + ")";
        }
    }
    return {};
}

}  // namespace setcomp
