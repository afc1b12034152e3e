#include "doctest.h"
#include "planrank/ranker.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace planrank;

namespace {

ParamStore ranker_params(const RankerConfig& cfg, std::uint64_t seed) {
    ParamStore store;
    Rng rng(seed);
    init_ranker_params(store, cfg, rng);
    return store;
}

NumArray random_matrix(std::size_t n, std::size_t d, Rng& rng, double scale = 1.0) {
    NumArray a({n, d});
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = rng.uniform(-scale, scale);
    return a;
}

// exhaustive n! oracle; lexicographic enumeration + strict improvement keeps
// the lexicographically smallest optimum, totals summed in row order exactly
// like the decoder
std::pair<std::vector<int>, double> brute_force_decode(const NumArray& s) {
    std::size_t n = s.rows();
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::vector<int> best;
    double best_total = -std::numeric_limits<double>::infinity();
    do {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) total += s.at(i, perm[i]);
        if (total > best_total) {
            best_total = total;
            best = perm;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));
    return {best, best_total};
}

}  // namespace

TEST_CASE("ranker config validation") {
    RankerConfig bad;
    bad.d_model = 30;
    bad.num_heads = 4;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    RankerConfig ok;
    CHECK_NOTHROW(ok.validate());
    CHECK(ok.d_ff == 128);
    CHECK(ok.n_max == 32);
}

TEST_CASE("identical embeddings attend uniformly and stay identical") {
    RankerConfig cfg;
    cfg.d_model = 16;
    cfg.num_heads = 4;
    cfg.d_ff = 32;
    ParamStore params = ranker_params(cfg, 21);

    Rng rng(3);
    NumArray row({static_cast<std::size_t>(cfg.d_model)});
    for (std::size_t i = 0; i < row.size(); ++i) row[i] = rng.uniform(-1.0, 1.0);
    NumArray x({2, static_cast<std::size_t>(cfg.d_model)});
    for (std::size_t j = 0; j < row.size(); ++j) {
        x.at(0, j) = row[j];
        x.at(1, j) = row[j];
    }

    Graph g;
    std::vector<Graph::Node> attn;
    Graph::Node out = encode_context(g, params, g.constant(x), cfg, &attn);
    REQUIRE(attn.size() == 4);
    for (Graph::Node a : attn) {
        const NumArray& A = g.value(a);
        for (std::size_t i = 0; i < A.size(); ++i) CHECK(A[i] == 0.5);
    }
    const NumArray& z = g.value(out);
    for (std::size_t j = 0; j < z.cols(); ++j) CHECK(z.at(0, j) == z.at(1, j));
}

TEST_CASE("attention rows sum to one on random inputs") {
    RankerConfig cfg;
    cfg.d_model = 32;
    cfg.num_layers = 2;
    ParamStore params = ranker_params(cfg, 4);
    Rng rng(10);
    for (int trial = 0; trial < 20; ++trial) {
        std::size_t n = 2 + rng.uniform_int(10);
        Graph g;
        std::vector<Graph::Node> attn;
        encode_context(g, params, g.constant(random_matrix(n, 32, rng, 2.0)), cfg, &attn);
        REQUIRE(attn.size() == 8);
        for (Graph::Node a : attn) {
            const NumArray& A = g.value(a);
            for (std::size_t i = 0; i < A.rows(); ++i) {
                double sum = 0.0;
                for (std::size_t j = 0; j < A.cols(); ++j) sum += A.at(i, j);
                CHECK(std::abs(sum - 1.0) < 1e-10);
            }
        }
    }
}

TEST_CASE("encoder output is permutation-equivariant") {
    RankerConfig cfg;
    cfg.d_model = 16;
    cfg.d_ff = 64;
    ParamStore params = ranker_params(cfg, 51);
    Rng rng(8);
    for (int trial = 0; trial < 20; ++trial) {
        std::size_t n = 3 + rng.uniform_int(6);
        NumArray x = random_matrix(n, 16, rng);

        std::vector<std::size_t> sigma(n);
        std::iota(sigma.begin(), sigma.end(), 0);
        rng.shuffle(sigma);
        NumArray xp({n, 16});
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < 16; ++j) xp.at(sigma[i], j) = x.at(i, j);

        Graph g1, g2;
        const NumArray& z = g1.value(encode_context(g1, params, g1.constant(x), cfg));
        const NumArray& zp = g2.value(encode_context(g2, params, g2.constant(xp), cfg));
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < 16; ++j)
                CHECK(zp.at(sigma[i], j) == doctest::Approx(z.at(i, j)).epsilon(1e-12));
    }
}

TEST_CASE("score_positions masks positions past n and is deterministic") {
    RankerConfig cfg;
    cfg.d_model = 8;
    cfg.num_heads = 2;
    cfg.d_ff = 16;
    cfg.n_max = 16;
    ParamStore params = ranker_params(cfg, 33);
    Rng rng(6);
    NumArray z = random_matrix(5, 8, rng);

    Graph g1, g2;
    const NumArray& s1 = g1.value(score_positions(g1, params, g1.constant(z), cfg));
    const NumArray& s2 = g2.value(score_positions(g2, params, g2.constant(z), cfg));
    REQUIRE(s1.shape() == std::vector<std::size_t>{5, 5});
    for (std::size_t i = 0; i < s1.size(); ++i) CHECK(s1[i] == s2[i]);

    SUBCASE("zero parameters give an all-zero matrix") {
        for (auto& [name, entry] : params) entry.value.fill(0.0);
        Graph g;
        const NumArray& s = g.value(score_positions(g, params, g.constant(z), cfg));
        for (std::size_t i = 0; i < s.size(); ++i) CHECK(s[i] == 0.0);
    }

    SUBCASE("identical contextual rows give identical score rows") {
        NumArray same({4, 8});
        for (std::size_t i = 0; i < 4; ++i)
            for (std::size_t j = 0; j < 8; ++j) same.at(i, j) = z.at(0, j);
        Graph g;
        const NumArray& s = g.value(score_positions(g, params, g.constant(same), cfg));
        for (std::size_t i = 1; i < 4; ++i)
            for (std::size_t j = 0; j < 4; ++j) CHECK(s.at(i, j) == s.at(0, j));
    }

    SUBCASE("lists beyond n_max are rejected") {
        NumArray big = random_matrix(17, 8, rng);
        Graph g;
        CHECK_THROWS_AS(score_positions(g, params, g.constant(big), cfg), ListTooLongError);
        CHECK_THROWS_AS(encode_context(g, params, g.constant(big), cfg), ListTooLongError);
    }
}

TEST_CASE("decode: diagonal dominance gives the identity") {
    NumArray s({3, 3});
    for (int i = 0; i < 3; ++i) s.at(i, i) = 1.0;
    RankedList r = decode_permutation(ScoreMatrix{s});
    CHECK(r.permutation == std::vector<int>{1, 2, 3});
    CHECK(r.by_position == std::vector<int>{0, 1, 2});
}

TEST_CASE("decode: all-equal scores fall back to the identity permutation") {
    NumArray s({4, 4});
    s.fill(0.25);
    RankedList r = decode_permutation(ScoreMatrix{s});
    CHECK(r.permutation == std::vector<int>{1, 2, 3, 4});
}

TEST_CASE("decode rejects bad input") {
    NumArray nonsquare({2, 3});
    CHECK_THROWS_AS(decode_permutation(ScoreMatrix{nonsquare}), std::invalid_argument);
    NumArray bad({2, 2}, {0.0, 1.0, std::numeric_limits<double>::quiet_NaN(), 0.0});
    CHECK_THROWS_AS(decode_permutation(ScoreMatrix{bad}), NonFiniteScoresError);
}

TEST_CASE("decode matches exhaustive enumeration, ties included") {
    Rng rng(2718);
    for (int trial = 0; trial < 150; ++trial) {
        std::size_t n = 2 + rng.uniform_int(7);
        NumArray s({n, n});
        int mode = static_cast<int>(rng.uniform_int(3));
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                if (mode == 0) {
                    s.at(i, j) = rng.uniform(-1.0, 1.0);
                } else {
                    // coarse grid of exact binary fractions forces real ties
                    s.at(i, j) = 0.25 * static_cast<double>(rng.uniform_int(5));
                }
            }
        if (mode == 2 && n >= 2) {
            // duplicated rows: equal plans must land on adjacent positions
            for (std::size_t j = 0; j < n; ++j) s.at(1, j) = s.at(0, j);
        }

        RankedList got = decode_permutation(ScoreMatrix{s});
        auto [best, best_total] = brute_force_decode(s);

        double got_total = 0.0;
        for (std::size_t i = 0; i < n; ++i) got_total += s.at(i, got.permutation[i] - 1);
        CHECK(got_total == best_total);
        for (std::size_t i = 0; i < n; ++i) CHECK(got.permutation[i] == best[i] + 1);

        // permutation/by_position are mutual inverses
        for (std::size_t i = 0; i < n; ++i)
            CHECK(got.by_position[got.permutation[i] - 1] == static_cast<int>(i));
    }
}

TEST_CASE("duplicate plans receive adjacent positions") {
    // two identical rows clearly better at early positions
    NumArray s({3, 3}, {5.0, 4.0, 0.0, 5.0, 4.0, 0.0, 0.0, 0.0, 9.0});
    RankedList r = decode_permutation(ScoreMatrix{s});
    CHECK(r.permutation[0] == 1);  // first copy takes the earlier position
    CHECK(r.permutation[1] == 2);
    CHECK(r.permutation[2] == 3);
}
