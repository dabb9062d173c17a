#pragma once

#include <string>
#include <vector>

namespace setcomp {

/// Boolean expression over attribute atoms.
struct LogicalExpr {
    enum class Op { Atom, And, Or, Not };

    Op op = Op::Atom;
    std::string attribute;  // Atom only
    std::vector<LogicalExpr> children;

    static LogicalExpr atom(std::string attribute);
    static LogicalExpr all_of(std::vector<LogicalExpr> children);
    static LogicalExpr any_of(std::vector<LogicalExpr> children);
    static LogicalExpr negate(LogicalExpr child);

    /// Atoms in left-to-right order.
    std::vector<std::string> atoms() const;
    /// S-expression form, e.g. (and "A" (not "B")).
    std::string to_string() const;

    friend bool operator==(const LogicalExpr&, const LogicalExpr&) = default;
};

}  // namespace setcomp
