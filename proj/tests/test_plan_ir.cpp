#include "doctest.h"
#include "planrank/dataset.hpp"
#include "planrank/plan_ir.hpp"

using namespace planrank;

TEST_CASE("single-node portable document parses") {
    auto result = parse_plan(R"({"op":"SeqScan","rows":100,"cost":10,"tables":["t1"]})");
    CHECK(result.tree.node_count == 1);
    CHECK(result.tree.root.operator_kind == OperatorKind::SeqScan);
    CHECK(result.tree.root.est_cardinality == 100.0);
    CHECK(result.tree.root.est_cost == 10.0);
    CHECK(result.tree.root.table_ids == std::vector<std::string>{"t1"});
    CHECK(result.warnings.empty());
}

TEST_CASE("three-node hash join parses") {
    auto result = parse_plan(R"({
        "plan_id":"p1","op":"HashJoin","rows":50,"cost":30,
        "children":[{"op":"SeqScan","rows":100,"cost":10,"tables":["a"]},
                    {"op":"SeqScan","rows":200,"cost":20,"tables":["b"]}]})");
    CHECK(result.tree.node_count == 3);
    CHECK(result.tree.plan_id == "p1");
    CHECK(result.tree.root.operator_kind == OperatorKind::HashJoin);
    CHECK(result.tree.root.children.size() == 2);
}

TEST_CASE("unknown operators map to Other with a warning") {
    auto result = parse_plan(R"({"op":"GatherMerge","rows":1,"cost":1})");
    CHECK(result.tree.root.operator_kind == OperatorKind::Other);
    REQUIRE(result.warnings.size() == 1);
    CHECK(result.warnings[0].find("GatherMerge") != std::string::npos);
}

TEST_CASE("missing numeric fields default to zero and warn") {
    auto result = parse_plan(R"({"op":"SeqScan"})");
    CHECK(result.tree.root.est_cardinality == 0.0);
    CHECK(result.tree.root.est_cost == 0.0);
    CHECK(result.warnings.size() == 2);
}

TEST_CASE("EXPLAIN-style documents are accepted") {
    auto result = parse_plan(R"([{"Plan":{
        "Node Type":"Hash Join","Plan Rows":10,"Total Cost":123.4,
        "Plans":[{"Node Type":"Seq Scan","Plan Rows":100,"Total Cost":11.5,
                  "Relation Name":"lineitem","Startup Cost":0.0},
                 {"Node Type":"Index Scan","Plan Rows":5,"Total Cost":8.2,
                  "Relation Name":"orders"}]}}])");
    CHECK(result.tree.node_count == 3);
    CHECK(result.tree.root.operator_kind == OperatorKind::HashJoin);
    CHECK(result.tree.root.children[0].table_ids ==
          std::vector<std::string>{"lineitem"});
    CHECK(result.tree.root.children[1].operator_kind == OperatorKind::IndexScan);
}

TEST_CASE("malformed documents raise MalformedDocument") {
    CHECK_THROWS_AS(parse_plan("not json at all {"), MalformedDocumentError);
    CHECK_THROWS_AS(parse_plan(R"({"rows":3})"), MalformedDocumentError);
    CHECK_THROWS_AS(parse_plan(R"({"op":"SeqScan","rows":"many"})"), MalformedDocumentError);
}

TEST_CASE("join with one child raises StructuralError") {
    CHECK_THROWS_AS(
        parse_plan(R"({"op":"HashJoin","rows":1,"cost":1,
                       "children":[{"op":"SeqScan","rows":1,"cost":1}]})"),
        StructuralError);
}

TEST_CASE("serialization is canonical and deterministic") {
    auto t = parse_plan(R"({"op":"SeqScan","rows":100,"cost":10,"tables":["t1"]})").tree;
    std::string a = serialize_plan(t);
    std::string b = serialize_plan(t);
    CHECK(a == b);

    // structurally equal trees serialize identically regardless of source text
    auto t2 = parse_plan(R"({  "cost": 10, "tables": ["t1"], "rows": 100, "op": "SeqScan" })").tree;
    CHECK(serialize_plan(t2) == a);
}

TEST_CASE("round-trip identity over generated plans") {
    WorkloadConfig cfg;
    cfg.num_queries = 15;
    cfg.plans_per_query_min = 4;
    cfg.plans_per_query_max = 8;
    cfg.seed = 321;
    auto sets = generate_synthetic_workload(cfg);
    int checked = 0;
    for (const auto& cs : sets)
        for (const auto& plan : cs.plans) {
            auto round = parse_plan(serialize_plan(plan));
            CHECK(round.tree == plan);
            ++checked;
        }
    CHECK(checked >= 50);
}

TEST_CASE("validate_tree reports violations with node paths") {
    PlanTree ok;
    ok.root.operator_kind = OperatorKind::SeqScan;
    ok.node_count = 1;
    CHECK(validate_tree(ok).empty());

    PlanTree bad_join;
    bad_join.root.operator_kind = OperatorKind::HashJoin;
    bad_join.root.children.push_back({OperatorKind::SeqScan, 1.0, 1.0, {}, {}});
    bad_join.node_count = 2;
    auto v1 = validate_tree(bad_join);
    REQUIRE(v1.size() == 1);
    CHECK(v1[0].kind == ViolationKind::StructuralError);
    CHECK(v1[0].node_path == "root");

    PlanTree bad_cost;
    bad_cost.root.operator_kind = OperatorKind::Sort;
    bad_cost.root.children.push_back({OperatorKind::SeqScan, 5.0, -3.0, {}, {}});
    bad_cost.node_count = 2;
    auto v2 = validate_tree(bad_cost);
    REQUIRE(v2.size() == 1);
    CHECK(v2[0].kind == ViolationKind::RangeError);
    CHECK(v2[0].node_path == "root.children[0]");

    PlanTree bad_count = ok;
    bad_count.node_count = 7;
    auto v3 = validate_tree(bad_count);
    REQUIRE(v3.size() == 1);
    CHECK(v3[0].kind == ViolationKind::CountError);
}
