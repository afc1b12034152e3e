// Physical plan tree representation plus parsing/serialization for the
// portable plan JSON schema and EXPLAIN-style documents.
#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace planrank {

struct MalformedDocumentError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct StructuralError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class OperatorKind {
    SeqScan,
    IndexScan,
    HashJoin,
    MergeJoin,
    NestedLoop,
    Sort,
    Aggregate,
    Materialize,
    Other,
};
inline constexpr int kOperatorKindCount = 9;

const char* operator_kind_name(OperatorKind k);
OperatorKind operator_kind_from_name(const std::string& name);  // unknown -> Other
bool is_join(OperatorKind k);
bool is_scan(OperatorKind k);

struct PlanNode {
    OperatorKind operator_kind = OperatorKind::Other;
    double est_cardinality = 0.0;  // rows, >= 0
    double est_cost = 0.0;         // abstract cost units, >= 0
    std::vector<std::string> table_ids;
    std::vector<PlanNode> children;  // arity <= 2

    bool operator==(const PlanNode& o) const;
};

struct PlanTree {
    std::string plan_id;
    PlanNode root;
    std::size_t node_count = 0;

    bool operator==(const PlanTree& o) const {
        return plan_id == o.plan_id && node_count == o.node_count && root == o.root;
    }
};

std::size_t count_nodes(const PlanNode& n);

struct ParseResult {
    PlanTree tree;
    std::vector<std::string> warnings;  // defaulted fields etc.
};

/// Accepts the portable schema {plan_id, op, rows, cost, tables, children}
/// or a PostgreSQL-EXPLAIN-style document ("Node Type", "Plan Rows",
/// "Total Cost", "Relation Name", "Plans", optionally wrapped in
/// [{"Plan": ...}]). Unknown operator names map to Other; missing numeric
/// fields default to 0 with a warning. Extra fields are ignored.
ParseResult parse_plan(const std::string& text);

/// Canonical serialization: fixed key order, children in stored order,
/// no insignificant whitespace. parse_plan(serialize_plan(t)) == t.
std::string serialize_plan(const PlanTree& plan);

/// JSON-value forms of the same schema, for embedding plans in larger
/// documents (dataset lines, ranking output).
nlohmann::ordered_json plan_to_json(const PlanTree& plan);
PlanTree plan_from_json(const nlohmann::json& doc, std::vector<std::string>* warnings = nullptr);

enum class ViolationKind { StructuralError, RangeError, CountError };

struct Violation {
    ViolationKind kind;
    std::string node_path;  // "root", "root.children[1]", ...
    std::string message;
};

/// Empty result iff all tree invariants hold. Violations are data, not errors.
std::vector<Violation> validate_tree(const PlanTree& plan);

}  // namespace planrank
