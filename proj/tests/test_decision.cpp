#include "doctest.h"
#include "planrank/decision.hpp"

#include <limits>

using namespace planrank;

namespace {

RankedList make_ranked(std::vector<int> by_position) {
    RankedList r;
    r.by_position = by_position;
    r.permutation.assign(by_position.size(), 0);
    for (std::size_t pos = 0; pos < by_position.size(); ++pos)
        r.permutation[by_position[pos]] = static_cast<int>(pos) + 1;
    return r;
}

std::vector<std::string> ids(std::size_t n) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back("p" + std::to_string(i));
    return out;
}

// straight-line transcription of the cascading top-k selection with CBO
// fallback, kept deliberately independent of the implementation
int alg1_oracle(const std::vector<int>& by_position, const std::vector<double>& g, double tau_in,
                int k, int cbo_index) {
    int chosen = -1;
    int i = 1;
    while (i <= k && chosen == -1) {
        int plan = by_position[i - 1];
        if (g[plan] >= tau_in)
            chosen = plan;
        else
            i = i + 1;
    }
    if (chosen == -1) chosen = cbo_index;
    return chosen;
}

}  // namespace

TEST_CASE("hand-traced selection outcomes") {
    RankedList r = make_ranked({0, 1, 2});
    Thresholds th{0.9, 0.6, false};

    SUBCASE("first plan confident") {
        auto out = hybrid_select_core(r, ids(3), {0.99, 0.99, 0.99}, 2, th, 3);
        CHECK(out.source == DecisionOutcome::Source::ModelRank);
        CHECK(out.model_rank == 1);
        CHECK(out.chosen_plan_id == "p0");
        CHECK(out.trace.size() == 1);
        CHECK(out.trace[0].passed);
    }
    SUBCASE("second plan confident") {
        // g per plan index; positions check plans 0, 1, 2 in order
        auto out = hybrid_select_core(r, ids(3), {0.6, 0.95, 0.7}, 2, th, 3);
        CHECK(out.source == DecisionOutcome::Source::ModelRank);
        CHECK(out.model_rank == 2);
        CHECK(out.chosen_plan_id == "p1");
        REQUIRE(out.trace.size() == 2);
        CHECK_FALSE(out.trace[0].passed);
        CHECK(out.trace[1].passed);
    }
    SUBCASE("no plan confident falls back to the optimizer pick") {
        auto out = hybrid_select_core(r, ids(3), {0.6, 0.6, 0.6}, 2, th, 3);
        CHECK(out.source == DecisionOutcome::Source::CboFallback);
        CHECK(out.chosen_plan_id == "p2");
        CHECK(out.trace.size() == 3);
        for (const auto& t : out.trace) CHECK_FALSE(t.passed);
    }
}

TEST_CASE("selection agrees with the straight-line oracle on random cases") {
    Rng rng(31337);
    for (int trial = 0; trial < 2000; ++trial) {
        std::size_t n = 2 + rng.uniform_int(10);
        std::vector<int> perm(n);
        std::iota(perm.begin(), perm.end(), 0);
        rng.shuffle(perm);
        RankedList r = make_ranked(perm);

        std::vector<double> g(n);
        for (auto& v : g) v = 0.5 + 0.5 * rng.uniform();
        double tau_in = 0.5 + 0.5 * rng.uniform();
        int k = 1 + static_cast<int>(rng.uniform_int(n));
        int cbo = static_cast<int>(rng.uniform_int(n));
        Thresholds th{tau_in, 0.5, false};

        auto out = hybrid_select_core(r, ids(n), g, cbo, th, k);
        int want = alg1_oracle(perm, g, tau_in, k, cbo);
        CHECK(out.chosen_index == want);
        if (out.source == DecisionOutcome::Source::ModelRank)
            CHECK(perm[out.model_rank - 1] == out.chosen_index);
    }
}

TEST_CASE("boundary policies") {
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        std::size_t n = 2 + rng.uniform_int(8);
        std::vector<int> perm(n);
        std::iota(perm.begin(), perm.end(), 0);
        rng.shuffle(perm);
        RankedList r = make_ranked(perm);
        int cbo = static_cast<int>(rng.uniform_int(n));

        // always-confident detector takes the model's first choice
        auto top = hybrid_select_core(r, ids(n), std::vector<double>(n, 1.0), cbo,
                                      Thresholds{0.9, 0.5, false}, static_cast<int>(n));
        CHECK(top.source == DecisionOutcome::Source::ModelRank);
        CHECK(top.model_rank == 1);
        CHECK(top.chosen_index == perm[0]);

        // never-confident detector always falls back
        auto fb = hybrid_select_core(r, ids(n), std::vector<double>(n, 0.5), cbo,
                                     Thresholds{0.9, 0.5, false}, static_cast<int>(n));
        CHECK(fb.source == DecisionOutcome::Source::CboFallback);
        CHECK(fb.chosen_index == cbo);
    }
}

TEST_CASE("lowering tau_in never moves the selection later") {
    Rng rng(7);
    for (int trial = 0; trial < 300; ++trial) {
        std::size_t n = 3 + rng.uniform_int(6);
        std::vector<int> perm(n);
        std::iota(perm.begin(), perm.end(), 0);
        rng.shuffle(perm);
        RankedList r = make_ranked(perm);
        std::vector<double> g(n);
        for (auto& v : g) v = 0.5 + 0.5 * rng.uniform();
        int k = 1 + static_cast<int>(rng.uniform_int(n));
        int cbo = static_cast<int>(rng.uniform_int(n));

        double tau_hi = 0.6 + 0.4 * rng.uniform();
        double tau_lo = 0.5 + (tau_hi - 0.5) * rng.uniform();
        auto hi = hybrid_select_core(r, ids(n), g, cbo, Thresholds{tau_hi, 0.5, false}, k);
        auto lo = hybrid_select_core(r, ids(n), g, cbo, Thresholds{tau_lo, 0.5, false}, k);

        auto rank_of = [&](const DecisionOutcome& o) {
            return o.source == DecisionOutcome::Source::CboFallback ? static_cast<int>(n) + 1
                                                                    : o.model_rank;
        };
        CHECK(rank_of(lo) <= rank_of(hi));
    }
}

TEST_CASE("guard rails") {
    RankedList r = make_ranked({0, 1});
    Thresholds ok{0.9, 0.5, false};
    CHECK_THROWS_AS(hybrid_select_core(r, ids(2), {0.9, 0.9}, 0, ok, 0), KOutOfRangeError);
    CHECK_THROWS_AS(hybrid_select_core(r, ids(2), {0.9, 0.9}, 0, ok, 3), KOutOfRangeError);
    CHECK_THROWS_AS(hybrid_select_core(r, ids(2), {0.9, 0.9}, 5, ok, 1), KOutOfRangeError);

    Thresholds degraded{0.9, 0.5, true};
    CHECK_THROWS_AS(hybrid_select_core(r, ids(2), {0.9, 0.9}, 0, degraded, 1),
                    DegradedDetectorError);
    // explicit override allows the decision through
    auto out = hybrid_select_core(r, ids(2), {0.95, 0.2}, 0, degraded, 1, true);
    CHECK(out.model_rank == 1);
}

TEST_CASE("tie groups around the top assignment score") {
    RankedList r = make_ranked({0, 1, 2});
    NumArray s({3, 3});
    // assignment scores on the chosen diagonal: 5.0, 4.0, 1.0
    s.at(0, 0) = 5.0;
    s.at(1, 1) = 4.0;
    s.at(2, 2) = 1.0;
    ScoreMatrix scores{s};

    CHECK(resolve_ties(r, scores, 0.0) == std::vector<int>{0});
    CHECK(resolve_ties(r, scores, 1.0) == std::vector<int>{0, 1});
    CHECK(resolve_ties(r, scores, std::numeric_limits<double>::infinity()) ==
          std::vector<int>{0, 1, 2});
    CHECK_THROWS_AS(resolve_ties(r, scores, -1.0), std::invalid_argument);

    // identical top rows form a tie group of two
    NumArray dup({3, 3}, {7.0, 7.0, 0.0, 7.0, 7.0, 0.0, 0.0, 0.0, 2.0});
    RankedList rd = decode_permutation(ScoreMatrix{dup});
    auto group = resolve_ties(rd, ScoreMatrix{dup}, 0.0);
    CHECK(group == std::vector<int>{0, 1});

    CHECK(default_tie_epsilon(scores) == doctest::Approx(5e-6));
}

TEST_CASE("decision trace serializes to JSON") {
    RankedList r = make_ranked({1, 0});
    auto out = hybrid_select_core(r, ids(2), {0.2, 0.95}, 0, Thresholds{0.9, 0.5, false}, 2);
    auto j = decision_to_json(out);
    CHECK(j["source"] == "model_rank");
    CHECK(j["model_rank"] == 1);
    CHECK(j["chosen_plan_id"] == "p1");
    CHECK(j["trace"].size() == 1);
    CHECK(j["trace"][0]["passed"] == true);
}
