#include "planrank/plan_ir.hpp"

#include <array>
#include <cmath>
#include <unordered_map>

#include "json.hpp"

namespace planrank {

namespace {

constexpr std::array<const char*, kOperatorKindCount> kKindNames = {
    "SeqScan",   "IndexScan", "HashJoin",    "MergeJoin", "NestedLoop",
    "Sort",      "Aggregate", "Materialize", "Other",
};

// EXPLAIN node-type spellings seen in the wild, normalized onto the closed
// operator vocabulary.
const std::unordered_map<std::string, OperatorKind>& alias_table() {
    static const std::unordered_map<std::string, OperatorKind> table = {
        {"Seq Scan", OperatorKind::SeqScan},
        {"Index Scan", OperatorKind::IndexScan},
        {"Index Only Scan", OperatorKind::IndexScan},
        {"Bitmap Heap Scan", OperatorKind::IndexScan},
        {"Hash Join", OperatorKind::HashJoin},
        {"Merge Join", OperatorKind::MergeJoin},
        {"Nested Loop", OperatorKind::NestedLoop},
        {"Incremental Sort", OperatorKind::Sort},
        {"HashAggregate", OperatorKind::Aggregate},
        {"GroupAggregate", OperatorKind::Aggregate},
    };
    return table;
}

}  // namespace

const char* operator_kind_name(OperatorKind k) { return kKindNames[static_cast<int>(k)]; }

OperatorKind operator_kind_from_name(const std::string& name) {
    for (int i = 0; i < kOperatorKindCount; ++i)
        if (name == kKindNames[i]) return static_cast<OperatorKind>(i);
    auto it = alias_table().find(name);
    if (it != alias_table().end()) return it->second;
    return OperatorKind::Other;
}

bool is_join(OperatorKind k) {
    return k == OperatorKind::HashJoin || k == OperatorKind::MergeJoin ||
           k == OperatorKind::NestedLoop;
}

bool is_scan(OperatorKind k) {
    return k == OperatorKind::SeqScan || k == OperatorKind::IndexScan;
}

bool PlanNode::operator==(const PlanNode& o) const {
    return operator_kind == o.operator_kind && est_cardinality == o.est_cardinality &&
           est_cost == o.est_cost && table_ids == o.table_ids && children == o.children;
}

std::size_t count_nodes(const PlanNode& n) {
    std::size_t count = 1;
    for (const auto& c : n.children) count += count_nodes(c);
    return count;
}

namespace {

using nlohmann::json;

double read_number(const json& obj, const char* key, const std::string& path,
                   std::vector<std::string>& warnings) {
    if (!obj.contains(key)) {
        warnings.push_back(path + ": missing '" + key + "', defaulting to 0");
        return 0.0;
    }
    const json& v = obj.at(key);
    if (!v.is_number())
        throw MalformedDocumentError(path + ": '" + key + "' is not a number");
    return v.get<double>();
}

PlanNode parse_portable_node(const json& obj, const std::string& path,
                             std::vector<std::string>& warnings) {
    if (!obj.is_object()) throw MalformedDocumentError(path + ": plan node must be an object");
    PlanNode node;
    if (!obj.contains("op")) throw MalformedDocumentError(path + ": missing 'op'");
    if (!obj.at("op").is_string())
        throw MalformedDocumentError(path + ": 'op' must be a string");
    std::string op = obj.at("op").get<std::string>();
    node.operator_kind = operator_kind_from_name(op);
    if (node.operator_kind == OperatorKind::Other && op != "Other")
        warnings.push_back(path + ": unknown operator '" + op + "' mapped to Other");
    node.est_cardinality = read_number(obj, "rows", path, warnings);
    node.est_cost = read_number(obj, "cost", path, warnings);
    if (obj.contains("tables")) {
        if (!obj.at("tables").is_array())
            throw MalformedDocumentError(path + ": 'tables' must be an array");
        for (const auto& t : obj.at("tables")) {
            if (!t.is_string())
                throw MalformedDocumentError(path + ": table ids must be strings");
            node.table_ids.push_back(t.get<std::string>());
        }
    }
    if (obj.contains("children")) {
        if (!obj.at("children").is_array())
            throw MalformedDocumentError(path + ": 'children' must be an array");
        std::size_t i = 0;
        for (const auto& c : obj.at("children")) {
            node.children.push_back(
                parse_portable_node(c, path + ".children[" + std::to_string(i) + "]", warnings));
            ++i;
        }
    }
    if (node.children.size() > 2)
        throw StructuralError(path + ": arity " + std::to_string(node.children.size()) +
                              " exceeds 2 (pre-binarize n-ary plans)");
    if (is_join(node.operator_kind) && node.children.size() != 2)
        throw StructuralError(path + ": join node with " + std::to_string(node.children.size()) +
                              " children");
    return node;
}

PlanNode parse_explain_node(const json& obj, const std::string& path,
                            std::vector<std::string>& warnings) {
    if (!obj.is_object()) throw MalformedDocumentError(path + ": plan node must be an object");
    PlanNode node;
    if (!obj.contains("Node Type") || !obj.at("Node Type").is_string())
        throw MalformedDocumentError(path + ": missing 'Node Type'");
    std::string op = obj.at("Node Type").get<std::string>();
    node.operator_kind = operator_kind_from_name(op);
    if (node.operator_kind == OperatorKind::Other)
        warnings.push_back(path + ": unknown operator '" + op + "' mapped to Other");
    node.est_cardinality = read_number(obj, "Plan Rows", path, warnings);
    node.est_cost = read_number(obj, "Total Cost", path, warnings);
    if (obj.contains("Relation Name") && obj.at("Relation Name").is_string())
        node.table_ids.push_back(obj.at("Relation Name").get<std::string>());
    if (obj.contains("Plans")) {
        if (!obj.at("Plans").is_array())
            throw MalformedDocumentError(path + ": 'Plans' must be an array");
        std::size_t i = 0;
        for (const auto& c : obj.at("Plans")) {
            node.children.push_back(
                parse_explain_node(c, path + ".children[" + std::to_string(i) + "]", warnings));
            ++i;
        }
    }
    if (node.children.size() > 2)
        throw StructuralError(path + ": arity exceeds 2 (pre-binarize n-ary plans)");
    if (is_join(node.operator_kind) && node.children.size() != 2)
        throw StructuralError(path + ": join node with " + std::to_string(node.children.size()) +
                              " children");
    return node;
}

nlohmann::ordered_json node_to_json(const PlanNode& n) {
    nlohmann::ordered_json j;
    j["op"] = operator_kind_name(n.operator_kind);
    j["rows"] = n.est_cardinality;
    j["cost"] = n.est_cost;
    j["tables"] = n.table_ids;
    auto children = nlohmann::ordered_json::array();
    for (const auto& c : n.children) children.push_back(node_to_json(c));
    j["children"] = std::move(children);
    return j;
}

void validate_node(const PlanNode& n, const std::string& path, std::vector<Violation>& out) {
    if (!(n.est_cardinality >= 0.0) || !std::isfinite(n.est_cardinality))
        out.push_back({ViolationKind::RangeError, path, "est_cardinality must be finite and >= 0"});
    if (!(n.est_cost >= 0.0) || !std::isfinite(n.est_cost))
        out.push_back({ViolationKind::RangeError, path, "est_cost must be finite and >= 0"});
    if (n.children.size() > 2)
        out.push_back({ViolationKind::StructuralError, path, "node arity exceeds 2"});
    if (is_join(n.operator_kind) && n.children.size() != 2)
        out.push_back({ViolationKind::StructuralError, path,
                       std::string(operator_kind_name(n.operator_kind)) + " must have 2 children"});
    if (is_scan(n.operator_kind) && !n.children.empty())
        out.push_back({ViolationKind::StructuralError, path,
                       std::string(operator_kind_name(n.operator_kind)) + " must be a leaf"});
    for (std::size_t i = 0; i < n.children.size(); ++i)
        validate_node(n.children[i], path + ".children[" + std::to_string(i) + "]", out);
}

}  // namespace

PlanTree plan_from_json(const nlohmann::json& doc, std::vector<std::string>* warnings) {
    std::vector<std::string> local;
    std::vector<std::string>& warn = warnings ? *warnings : local;
    PlanTree tree;

    // EXPLAIN (FORMAT JSON) wraps the tree in [{"Plan": {...}}].
    if (doc.is_array()) {
        if (doc.empty() || !doc[0].is_object() || !doc[0].contains("Plan"))
            throw MalformedDocumentError("array document without a 'Plan' entry");
        tree.root = parse_explain_node(doc[0]["Plan"], "root", warn);
        tree.plan_id = doc[0].value("plan_id", "");
    } else if (doc.is_object() && doc.contains("Plan")) {
        tree.root = parse_explain_node(doc["Plan"], "root", warn);
        tree.plan_id = doc.value("plan_id", "");
    } else if (doc.is_object() && doc.contains("Node Type")) {
        tree.root = parse_explain_node(doc, "root", warn);
    } else if (doc.is_object() && doc.contains("op")) {
        if (doc.contains("plan_id")) {
            if (!doc.at("plan_id").is_string())
                throw MalformedDocumentError("'plan_id' must be a string");
            tree.plan_id = doc.at("plan_id").get<std::string>();
        }
        tree.root = parse_portable_node(doc, "root", warn);
    } else {
        throw MalformedDocumentError("document has neither 'op' nor 'Node Type' at the root");
    }

    tree.node_count = count_nodes(tree.root);
    return tree;
}

ParseResult parse_plan(const std::string& text) {
    json doc = json::parse(text, nullptr, false);
    if (doc.is_discarded()) throw MalformedDocumentError("input is not valid JSON");
    ParseResult result;
    result.tree = plan_from_json(doc, &result.warnings);
    return result;
}

nlohmann::ordered_json plan_to_json(const PlanTree& plan) {
    nlohmann::ordered_json j;
    j["plan_id"] = plan.plan_id;
    // node fields merge into the root object so the output parses back
    // through the portable-schema path
    nlohmann::ordered_json root = node_to_json(plan.root);
    for (auto& [key, value] : root.items()) j[key] = std::move(value);
    return j;
}

std::string serialize_plan(const PlanTree& plan) { return plan_to_json(plan).dump(); }

std::vector<Violation> validate_tree(const PlanTree& plan) {
    std::vector<Violation> out;
    validate_node(plan.root, "root", out);
    std::size_t actual = count_nodes(plan.root);
    if (plan.node_count != actual)
        out.push_back({ViolationKind::CountError, "root",
                       "node_count " + std::to_string(plan.node_count) + " != reachable " +
                           std::to_string(actual)});
    return out;
}

}  // namespace planrank
