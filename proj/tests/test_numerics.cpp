#include "doctest.h"
#include "planrank/numerics.hpp"
#include "planrank/rng.hpp"

#include <cmath>

using namespace planrank;

namespace {

ParamStore random_params(const std::vector<std::pair<std::string, std::vector<std::size_t>>>& spec,
                         std::uint64_t seed) {
    ParamStore store;
    Rng rng(seed);
    for (const auto& [name, shape] : spec) {
        NumArray& v = store.create(name, shape);
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = rng.uniform(-1.0, 1.0);
    }
    return store;
}

}  // namespace

TEST_CASE("softmax of a zero row is uniform") {
    Graph g;
    auto s = g.softmax_rows(g.constant(NumArray({2}, {0.0, 0.0})));
    CHECK(g.value(s)[0] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(g.value(s)[1] == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("softmax rows sum to one") {
    Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        Graph g;
        NumArray x({4, 7});
        for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.uniform(-30.0, 30.0);
        auto s = g.softmax_rows(g.constant(x));
        for (std::size_t i = 0; i < 4; ++i) {
            double row_sum = 0.0;
            for (std::size_t j = 0; j < 7; ++j) row_sum += g.value(s).at(i, j);
            CHECK(std::abs(row_sum - 1.0) < 1e-12);
        }
    }
}

TEST_CASE("matmul by the identity is the identity map") {
    Rng rng(3);
    NumArray eye({3, 3});
    for (int i = 0; i < 3; ++i) eye.at(i, i) = 1.0;
    NumArray a({3, 3});
    for (std::size_t i = 0; i < 9; ++i) a[i] = rng.uniform(-5.0, 5.0);
    Graph g;
    auto c = g.matmul(g.constant(eye), g.constant(a));
    for (std::size_t i = 0; i < 9; ++i) CHECK(g.value(c)[i] == a[i]);
}

TEST_CASE("matmul shapes: vector x matrix and matrix x vector") {
    Graph g;
    auto v = g.constant(NumArray({2}, {1.0, 2.0}));
    auto m = g.constant(NumArray({2, 3}, {1, 0, 0, 0, 1, 0}));
    auto vm = g.matmul(v, m);
    REQUIRE(g.value(vm).shape() == std::vector<std::size_t>{3});
    CHECK(g.value(vm)[0] == 1.0);
    CHECK(g.value(vm)[1] == 2.0);
    CHECK(g.value(vm)[2] == 0.0);

    auto m2 = g.constant(NumArray({2, 2}, {1, 2, 3, 4}));
    auto v2 = g.constant(NumArray({2}, {1.0, 1.0}));
    auto mv = g.matmul(m2, v2);
    CHECK(g.value(mv)[0] == 3.0);
    CHECK(g.value(mv)[1] == 7.0);

    CHECK_THROWS_AS(g.matmul(v, v2), ShapeMismatchError);
}

TEST_CASE("grad_check is exact for a quadratic") {
    ParamStore store = random_params({{"x", {5}}}, 17);
    auto fn = [](Graph& g, ParamStore& p) {
        auto x = g.param(p, "x");
        return g.sum_all(g.mul(x, x));
    };
    CHECK(grad_check(fn, store) < 1e-9);
}

TEST_CASE("grad_check flags a non-deterministic function") {
    ParamStore store = random_params({{"x", {2}}}, 5);
    int calls = 0;
    auto fn = [&calls](Graph& g, ParamStore& p) {
        ++calls;
        auto x = g.param(p, "x");
        return g.scale(g.sum_all(x), 1.0 + 1e-9 * calls);
    };
    CHECK_THROWS_AS(grad_check(fn, store), NonDeterministicFunctionError);
}

TEST_CASE("every primitive passes a finite-difference check") {
    ParamStore store = random_params(
        {{"a", {4, 3}}, {"b", {3, 5}}, {"v", {3}}, {"gain", {3}}, {"bias", {3}}, {"w", {4, 3}}},
        29);
    GradCheckOptions opt;

    SUBCASE("matmul + tanh") {
        auto fn = [](Graph& g, ParamStore& p) {
            return g.sum_all(g.tanh_op(g.matmul(g.param(p, "a"), g.param(p, "b"))));
        };
        CHECK(grad_check(fn, store, opt) < 1e-6);
    }
    SUBCASE("transpose + sigmoid") {
        auto fn = [](Graph& g, ParamStore& p) {
            return g.sum_all(g.sigmoid(g.transpose(g.param(p, "a"))));
        };
        CHECK(grad_check(fn, store, opt) < 1e-6);
    }
    SUBCASE("add with row broadcast") {
        auto fn = [](Graph& g, ParamStore& p) {
            return g.mean_all(g.tanh_op(g.add(g.param(p, "a"), g.param(p, "v"))));
        };
        CHECK(grad_check(fn, store, opt) < 1e-6);
    }
    SUBCASE("sub and mul") {
        auto fn = [](Graph& g, ParamStore& p) {
            auto d = g.sub(g.param(p, "a"), g.param(p, "w"));
            return g.sum_all(g.mul(d, d));
        };
        CHECK(grad_check(fn, store, opt) < 1e-6);
    }
    SUBCASE("softmax rows") {
        auto fn = [](Graph& g, ParamStore& p) {
            auto s = g.softmax_rows(g.param(p, "a"));
            return g.sum_all(g.mul(s, g.param(p, "w")));
        };
        CHECK(grad_check(fn, store, opt) < 1e-6);
    }
    SUBCASE("logsumexp + gather") {
        auto fn = [](Graph& g, ParamStore& p) {
            auto a = g.param(p, "a");
            auto lse = g.logsumexp_rows(a);
            auto picked = g.gather_cols(a, {0, 2, 1, 0});
            return g.sum_all(g.sub(lse, picked));
        };
        CHECK(grad_check(fn, store, opt) < 1e-6);
    }
    SUBCASE("layer norm") {
        auto fn = [](Graph& g, ParamStore& p) {
            auto y = g.layer_norm_rows(g.param(p, "a"), g.param(p, "gain"), g.param(p, "bias"));
            return g.sum_all(g.mul(y, y));
        };
        CHECK(grad_check(fn, store, opt) < 1e-5);
    }
    SUBCASE("stack, concat, slice, concat_cols, max pooling") {
        auto fn = [](Graph& g, ParamStore& p) {
            auto v = g.param(p, "v");
            auto gain = g.param(p, "gain");
            auto stacked = g.stack_rows({v, gain, g.tanh_op(v)});
            auto wide = g.concat_cols({stacked, g.scale(stacked, 0.5)});
            auto pooled = g.max_over_rows(wide);
            auto flat = g.concat({pooled, g.param(p, "bias")});
            auto top = g.slice_rows(wide, 0, 2);
            return g.add(g.sum_all(flat), g.sum_all(top));
        };
        CHECK(grad_check(fn, store, opt) < 1e-6);
    }
    SUBCASE("relu away from the kink") {
        ParamStore s2;
        NumArray& x = s2.create("x", {6});
        for (std::size_t i = 0; i < 6; ++i) x[i] = (i % 2 ? 1.0 : -1.0) * (0.5 + i);
        auto fn = [](Graph& g, ParamStore& p) {
            return g.sum_all(g.relu(g.param(p, "x")));
        };
        CHECK(grad_check(fn, s2, opt) < 1e-9);
    }
    SUBCASE("bce with logits") {
        auto fn = [](Graph& g, ParamStore& p) {
            auto z = g.matmul(g.param(p, "v"), g.transpose(g.param(p, "a")));
            return g.bce_with_logits(z, {1.0, 0.0, 1.0, 0.0});
        };
        CHECK(grad_check(fn, store, opt) < 1e-6);
    }
}

TEST_CASE("gradients accumulate across repeated parameter use") {
    ParamStore store = random_params({{"x", {3}}}, 41);
    auto fn = [](Graph& g, ParamStore& p) {
        auto x1 = g.param(p, "x");
        auto x2 = g.param(p, "x");
        return g.sum_all(g.mul(x1, x2));
    };
    CHECK(grad_check(fn, store) < 1e-8);
}

TEST_CASE("forward passes are bit-deterministic") {
    ParamStore store = random_params({{"a", {6, 6}}, {"b", {6, 6}}}, 99);
    auto run = [&]() {
        Graph g;
        auto y = g.softmax_rows(g.matmul(g.param(store, "a"), g.param(store, "b")));
        return g.value(g.sum_all(g.tanh_op(y)))[0];
    };
    double v1 = run();
    double v2 = run();
    CHECK(v1 == v2);
}

TEST_CASE("shape mismatches are rejected") {
    Graph g;
    auto a = g.constant(NumArray({2, 3}));
    auto b = g.constant(NumArray({2, 3}));
    auto v = g.constant(NumArray({2}));
    CHECK_THROWS_AS(g.matmul(a, b), ShapeMismatchError);
    CHECK_THROWS_AS(g.add(a, v), ShapeMismatchError);
    CHECK_THROWS_AS(g.logsumexp_rows(v), ShapeMismatchError);
    CHECK_THROWS_AS(g.backward(a), ShapeMismatchError);
    CHECK_THROWS_AS(g.gather_cols(a, {0, 5}), ShapeMismatchError);
}
