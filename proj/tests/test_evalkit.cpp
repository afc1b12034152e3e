#include "doctest.h"
#include "planrank/evalkit.hpp"
#include "planrank/training.hpp"

using namespace planrank;

namespace {

// hand-built candidate set with the given mean latencies
CandidateSet hand_set(const std::string& qid, std::vector<double> means, int cbo = 0) {
    std::vector<PlanTree> plans;
    std::vector<std::vector<double>> runs;
    for (std::size_t i = 0; i < means.size(); ++i) {
        PlanTree t;
        t.plan_id = qid + "_p" + std::to_string(i);
        t.root.operator_kind = OperatorKind::SeqScan;
        t.root.est_cardinality = 10.0 * static_cast<double>(i + 1);
        t.root.est_cost = means[i];
        t.node_count = 1;
        plans.push_back(std::move(t));
        runs.push_back({means[i]});
    }
    CandidateSet cs = ingest_measurements(std::move(plans), std::move(runs), cbo);
    cs.query_id = qid;
    return cs;
}

}  // namespace

TEST_CASE("top-k accuracy against a direct count") {
    std::vector<CandidateSet> truth;
    truth.push_back(hand_set("a", {10, 20, 30, 40, 50}));
    truth.push_back(hand_set("b", {10, 20, 30, 40, 50}));
    truth.push_back(hand_set("c", {10, 20, 30, 40, 50}));

    // chosen plans with true ranks 1, 3, 5
    std::map<std::string, int> decisions{{"a", 0}, {"b", 2}, {"c", 4}};
    CHECK(top_k_accuracy(decisions, truth, 1) == doctest::Approx(100.0 / 3.0));
    CHECK(top_k_accuracy(decisions, truth, 3) == doctest::Approx(200.0 / 3.0));
    CHECK(top_k_accuracy(decisions, truth, 5) == doctest::Approx(100.0));

    // monotone in k
    for (int k = 1; k < 5; ++k)
        CHECK(top_k_accuracy(decisions, truth, k) <= top_k_accuracy(decisions, truth, k + 1));

    // all-best decisions hit 100% for every k
    std::map<std::string, int> all_best{{"a", 0}, {"b", 0}, {"c", 0}};
    for (int k = 1; k <= 5; ++k) CHECK(top_k_accuracy(all_best, truth, k) == 100.0);
}

TEST_CASE("cumulative time is the sum of chosen means") {
    std::vector<CandidateSet> truth;
    truth.push_back(hand_set("a", {10, 99}));
    truth.push_back(hand_set("b", {20, 99}));
    std::map<std::string, int> decisions{{"a", 0}, {"b", 0}};
    CHECK(cumulative_time(decisions, truth) == 30.0);
    decisions["b"] = 1;
    CHECK(cumulative_time(decisions, truth) == 109.0);
}

TEST_CASE("missing or out-of-range decisions are rejected") {
    std::vector<CandidateSet> truth;
    truth.push_back(hand_set("a", {1, 2}));
    std::map<std::string, int> missing;
    CHECK_THROWS_AS(top_k_accuracy(missing, truth, 1), MissingQueryError);
    std::map<std::string, int> bad{{"a", 7}};
    CHECK_THROWS_AS(cumulative_time(bad, truth), MissingQueryError);
}

TEST_CASE("policy comparison on a small trained model") {
    WorkloadConfig w;
    w.num_queries = 20;
    w.plans_per_query_min = 3;
    w.plans_per_query_max = 6;
    w.seed = 77;
    auto sets = generate_synthetic_workload(w);
    auto split = split_dataset(sets, 0.75, 77);

    TrainConfig cfg;
    cfg.ranker.d_model = 16;
    cfg.ranker.num_heads = 2;
    cfg.ranker.d_ff = 32;
    cfg.ranker.n_max = 16;
    cfg.epochs = 30;
    cfg.learning_rate = 1e-3;
    cfg.seed = 3;
    auto ckpt = train(split.train, cfg);

    std::vector<std::vector<double>> features;
    for (const auto& cs : split.train)
        for (const auto& plan : cs.plans) features.push_back(detector_features(ckpt, plan));
    OodTrainConfig ocfg;
    ocfg.epochs = 100;
    OodDetector det = train_detector(features, ocfg);

    SUBCASE("oracle-best dominates and hybrid matches CBO under a never-confident gate") {
        Thresholds always{0.5, 0.5, false};  // g >= 0.5 always -> first model pick
        EvalReport report = compare_policies(split.test, ckpt, det, always, 3);
        REQUIRE(report.policies.size() == 4);

        const PolicyResult* oracle = nullptr;
        const PolicyResult* hybrid = nullptr;
        const PolicyResult* model = nullptr;
        for (const auto& p : report.policies) {
            if (p.name == kPolicyOracleBest) oracle = &p;
            if (p.name == kPolicyHybrid) hybrid = &p;
            if (p.name == kPolicyModelTop1) model = &p;
        }
        REQUIRE(oracle);
        CHECK(oracle->top_1 == 100.0);
        for (const auto& p : report.policies) {
            CHECK(p.cumulative_ms >= oracle->cumulative_ms);
            CHECK(p.top_1 <= p.top_2);
            CHECK(p.top_2 <= p.top_3);
        }
        // with an always-open gate, hybrid is exactly model-top-1
        CHECK(hybrid->top_1 == model->top_1);
        CHECK(hybrid->cumulative_ms == model->cumulative_ms);
        CHECK(hybrid->fallback_count == 0);
    }

    SUBCASE("a never-confident detector makes hybrid identical to the CBO policy") {
        // tau_in above the confidence ceiling of 1.0 can't be represented;
        // instead use a detector forced to the symmetry point f = 0.5
        OodDetector fence = det;
        for (auto& [name, entry] : fence.params()) entry.value.fill(0.0);
        Thresholds th{0.9, 0.5, false};
        EvalReport report = compare_policies(split.test, ckpt, fence, th, 3);
        const PolicyResult *hybrid = nullptr, *cbo = nullptr;
        for (const auto& p : report.policies) {
            if (p.name == kPolicyHybrid) hybrid = &p;
            if (p.name == kPolicyCboSim) cbo = &p;
        }
        CHECK(hybrid->top_1 == cbo->top_1);
        CHECK(hybrid->top_3 == cbo->top_3);
        CHECK(hybrid->cumulative_ms == cbo->cumulative_ms);
        CHECK(hybrid->fallback_count == static_cast<int>(split.test.size()));
    }

    SUBCASE("report rendering and JSON are deterministic") {
        Thresholds th{0.9, 0.5, false};
        EvalReport r1 = compare_policies(split.test, ckpt, det, th, 3);
        EvalReport r2 = compare_policies(split.test, ckpt, det, th, 3);
        CHECK(report_to_json(r1).dump() == report_to_json(r2).dump());
        std::string table = render_report_table(r1);
        CHECK(table.find("model_top1") != std::string::npos);
        CHECK(table.find("oracle_best") != std::string::npos);
        auto j = report_to_json(r1);
        CHECK(j["queries"].size() == split.test.size());
        for (const auto& row : j["queries"])
            for (const auto& [name, pick] : row["picks"].items())
                CHECK(pick["regret_ms"].get<double>() >= 0.0);
    }
}
