#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "lewis/errors.hpp"
#include "lewis/narray.hpp"
#include "lewis/rng.hpp"
#include "lewis/tape.hpp"
#include "test_helpers.hpp"

using lewis::ConfigError;
using lewis::ContractError;
using lewis::NArray;
using lewis::NumericError;
using lewis::Rng;
using lewis::Tape;
using lewis::testing::fd_check;
using lewis::testing::random_array;

namespace {

struct FdCase {
    std::string name;
    std::vector<NArray> inputs;
    lewis::testing::ScalarBuilder build;
};

// Every case ends in a weighted sum so per-element gradients are distinct;
// a plain sum would not notice transposition or index bugs.
std::vector<FdCase> make_cases(Rng rng) {
    const int r = 2 + rng.uniform_int(3);
    const int m = 2 + rng.uniform_int(3);
    const int k = 2 + rng.uniform_int(3);
    const int n = 2 + rng.uniform_int(3);
    std::vector<FdCase> cases;

    auto weighted_sum = [](Tape& t, int node, int w) { return t.sum_all(t.mul(node, w)); };

    cases.push_back({"matmul_nn",
                     {random_array(rng, {m, k}, -1, 1), random_array(rng, {k, n}, -1, 1),
                      random_array(rng, {m, n}, -1, 1)},
                     [=](Tape& t, const std::vector<int>& in) {
                         return weighted_sum(t, t.matmul(in[0], in[1]), in[2]);
                     }});
    cases.push_back({"matmul_tn",
                     {random_array(rng, {k, m}, -1, 1), random_array(rng, {k, n}, -1, 1),
                      random_array(rng, {m, n}, -1, 1)},
                     [=](Tape& t, const std::vector<int>& in) {
                         return weighted_sum(t, t.matmul(in[0], in[1], true, false), in[2]);
                     }});
    cases.push_back({"matmul_nt",
                     {random_array(rng, {m, k}, -1, 1), random_array(rng, {n, k}, -1, 1),
                      random_array(rng, {m, n}, -1, 1)},
                     [=](Tape& t, const std::vector<int>& in) {
                         return weighted_sum(t, t.matmul(in[0], in[1], false, true), in[2]);
                     }});
    cases.push_back({"add_same",
                     {random_array(rng, {r, n}, -1, 1), random_array(rng, {r, n}, -1, 1),
                      random_array(rng, {r, n}, -1, 1)},
                     [=](Tape& t, const std::vector<int>& in) {
                         return weighted_sum(t, t.add(in[0], in[1]), in[2]);
                     }});
    cases.push_back({"add_bcast",
                     {random_array(rng, {r, n}, -1, 1), random_array(rng, {n}, -1, 1),
                      random_array(rng, {r, n}, -1, 1)},
                     [=](Tape& t, const std::vector<int>& in) {
                         return weighted_sum(t, t.add(in[0], in[1]), in[2]);
                     }});
    cases.push_back({"mul_same",
                     {random_array(rng, {r, n}, -1, 1), random_array(rng, {r, n}, -1, 1),
                      random_array(rng, {r, n}, -1, 1)},
                     [=](Tape& t, const std::vector<int>& in) {
                         return weighted_sum(t, t.mul(in[0], in[1]), in[2]);
                     }});
    cases.push_back({"mul_bcast",
                     {random_array(rng, {r, n}, -1, 1), random_array(rng, {n}, -1, 1),
                      random_array(rng, {r, n}, -1, 1)},
                     [=](Tape& t, const std::vector<int>& in) {
                         return weighted_sum(t, t.mul(in[0], in[1]), in[2]);
                     }});
    cases.push_back({"scale",
                     {random_array(rng, {r, n}, -1, 1), random_array(rng, {r, n}, -1, 1)},
                     [=](Tape& t, const std::vector<int>& in) {
                         return weighted_sum(t, t.scale(in[0], -1.7), in[1]);
                     }});
    cases.push_back({"tanh",
                     {random_array(rng, {r, n}, -2, 2), random_array(rng, {r, n}, -1, 1)},
                     [=](Tape& t, const std::vector<int>& in) {
                         return weighted_sum(t, t.tanh(in[0]), in[1]);
                     }});
    cases.push_back({"sigmoid",
                     {random_array(rng, {r, n}, -2, 2), random_array(rng, {r, n}, -1, 1)},
                     [=](Tape& t, const std::vector<int>& in) {
                         return weighted_sum(t, t.sigmoid(in[0]), in[1]);
                     }});
    cases.push_back({"log",
                     {random_array(rng, {r, n}, 0.5, 1.5), random_array(rng, {r, n}, -1, 1)},
                     [=](Tape& t, const std::vector<int>& in) {
                         return weighted_sum(t, t.log(in[0]), in[1]);
                     }});
    cases.push_back({"softmax",
                     {random_array(rng, {r, n}, -2, 2), random_array(rng, {r, n}, -1, 1)},
                     [=](Tape& t, const std::vector<int>& in) {
                         return weighted_sum(t, t.softmax_last(in[0]), in[1]);
                     }});
    cases.push_back({"layer_norm",
                     {random_array(rng, {r, n}, -2, 2), random_array(rng, {r, n}, -1, 1)},
                     [=](Tape& t, const std::vector<int>& in) {
                         return weighted_sum(t, t.layer_norm_last(in[0]), in[1]);
                     }});
    cases.push_back({"concat",
                     {random_array(rng, {r, m}, -1, 1), random_array(rng, {r, n}, -1, 1),
                      random_array(rng, {r, m + n}, -1, 1)},
                     [=](Tape& t, const std::vector<int>& in) {
                         return weighted_sum(t, t.concat_last(in[0], in[1]), in[2]);
                     }});
    {
        const int off = rng.uniform_int(n);
        const int len = 1 + rng.uniform_int(n - off);
        cases.push_back({"slice",
                         {random_array(rng, {r, n}, -1, 1), random_array(rng, {r, len}, -1, 1)},
                         [=](Tape& t, const std::vector<int>& in) {
                             return weighted_sum(t, t.slice_last(in[0], off, len), in[1]);
                         }});
    }
    {
        std::vector<std::int32_t> idx(static_cast<std::size_t>(r + 2));
        for (auto& i : idx) i = rng.uniform_int(m);
        const int rows = static_cast<int>(idx.size());
        cases.push_back({"lookup",
                         {random_array(rng, {m, n}, -1, 1), random_array(rng, {rows, n}, -1, 1)},
                         [=](Tape& t, const std::vector<int>& in) {
                             return weighted_sum(t, t.lookup_rows(in[0], idx), in[1]);
                         }});
    }
    {
        std::vector<std::int32_t> idx(static_cast<std::size_t>(r));
        for (auto& i : idx) i = rng.uniform_int(n);
        cases.push_back({"gather",
                         {random_array(rng, {r, n}, -1, 1), random_array(rng, {r}, -1, 1)},
                         [=](Tape& t, const std::vector<int>& in) {
                             return weighted_sum(t, t.gather_last(in[0], idx), in[1]);
                         }});
    }
    {
        // Keep every element well away from the clamp threshold: central
        // differences are meaningless at the kink.
        NArray a({r, n});
        for (double& x : a.v) {
            const double mag = 0.2 + rng.uniform();
            x = rng.bernoulli(0.5) ? mag : -mag;
        }
        cases.push_back({"clamp_min",
                         {a, random_array(rng, {r, n}, -1, 1)},
                         [=](Tape& t, const std::vector<int>& in) {
                             return weighted_sum(t, t.clamp_min(in[0], 0.0), in[1]);
                         }});
    }
    cases.push_back({"sum_last",
                     {random_array(rng, {r, n}, -1, 1), random_array(rng, {r}, -1, 1)},
                     [=](Tape& t, const std::vector<int>& in) {
                         return weighted_sum(t, t.sum_last(in[0]), in[1]);
                     }});
    cases.push_back({"sum_all",
                     {random_array(rng, {r, n}, -1, 1)},
                     [](Tape& t, const std::vector<int>& in) { return t.sum_all(in[0]); }});
    // Recurrent-cell shape: projection, bias, normalization, nonlinearity,
    // gating, reduction — the composition the training loop actually builds.
    cases.push_back({"chain",
                     {random_array(rng, {r, k}, -1, 1), random_array(rng, {k, n}, -1, 1),
                      random_array(rng, {n}, -0.5, 0.5), random_array(rng, {k, n}, -1, 1),
                      random_array(rng, {r}, -1, 1)},
                     [=](Tape& t, const std::vector<int>& in) {
                         const int pre = t.add(t.matmul(in[0], in[1]), in[2]);
                         const int act = t.tanh(t.layer_norm_last(pre));
                         const int gate = t.sigmoid(t.matmul(in[0], in[3]));
                         return t.sum_all(t.mul(t.sum_last(t.mul(act, gate)), in[4]));
                     }});
    // The same leaf feeding several consumers must accumulate, not overwrite.
    cases.push_back({"reuse",
                     {random_array(rng, {r, n}, -1, 1)},
                     [](Tape& t, const std::vector<int>& in) {
                         return t.sum_all(t.add(t.mul(in[0], in[0]), t.scale(in[0], 0.5)));
                     }});
    return cases;
}

}  // namespace

TEST_CASE("finite differences agree with reverse mode for every op") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        for (const FdCase& c : make_cases(Rng::from_seed(seed))) {
            CAPTURE(c.name);
            CAPTURE(seed);
            CHECK(fd_check(c.inputs, c.build) < 1e-4);
        }
    }
}

TEST_CASE("softmax of a constant row is exactly uniform") {
    Tape t;
    const int y = t.softmax_last(t.leaf(NArray({1, 4})));
    for (double p : t.val(y).v) CHECK(p == 0.25);
}

TEST_CASE("matmul of ones matches the hand value") {
    Tape t;
    NArray a({2, 3});
    NArray b({3, 2});
    a.fill(1.0);
    b.fill(1.0);
    const int c = t.matmul(t.leaf(a), t.leaf(b));
    REQUIRE(t.val(c).shape == std::vector<int>{2, 2});
    for (double x : t.val(c).v) CHECK(x == 3.0);
}

TEST_CASE("layer norm output has mean 0 and variance 1") {
    Tape t;
    const int y = t.layer_norm_last(t.leaf(NArray({1, 3}, {1.0, 2.0, 3.0})));
    const NArray& out = t.val(y);
    CHECK(out.v[0] == doctest::Approx(-1.2247).epsilon(1e-4));
    CHECK(out.v[1] == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
    CHECK(out.v[2] == doctest::Approx(1.2247).epsilon(1e-4));
    double mean = (out.v[0] + out.v[1] + out.v[2]) / 3.0;
    double var = (out.v[0] * out.v[0] + out.v[1] * out.v[1] + out.v[2] * out.v[2]) / 3.0;
    CHECK(std::fabs(mean) < 1e-12);
    CHECK(var == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("hand-checked gradients") {
    SUBCASE("sum of all elements has unit gradient") {
        Tape t;
        Rng rng = Rng::from_seed(3);
        const int a = t.leaf(lewis::testing::random_array(rng, {3, 4}, -1, 1));
        t.backward(t.sum_all(a));
        for (double g : t.grad(a).v) CHECK(g == 1.0);
    }
    SUBCASE("d(x*x)/dx = 2x") {
        Tape t;
        const int x = t.leaf(NArray::scalar(2.0));
        t.backward(t.sum_all(t.mul(x, x)));
        CHECK(t.grad(x).v[0] == 4.0);
    }
    SUBCASE("clamp blocks gradient below the threshold") {
        Tape t;
        const int x = t.leaf(NArray({4}, {-1.0, -0.2, 0.3, 2.0}));
        t.backward(t.sum_all(t.clamp_min(x, 0.0)));
        const NArray& g = t.grad(x);
        CHECK(g.v[0] == 0.0);
        CHECK(g.v[1] == 0.0);
        CHECK(g.v[2] == 1.0);
        CHECK(g.v[3] == 1.0);
    }
    SUBCASE("backward is single-shot per tape") {
        Tape t;
        const int x = t.leaf(NArray::scalar(3.0));
        const int loss = t.sum_all(t.mul(x, x));
        t.backward(loss);
        CHECK(t.grad(x).v[0] == 6.0);
        CHECK_THROWS_AS(t.backward(loss), ContractError);
    }
    SUBCASE("disjoint losses combined by add differentiate independently") {
        Tape t;
        const int x = t.leaf(NArray::scalar(2.0));
        const int y = t.leaf(NArray::scalar(5.0));
        const int lx = t.sum_all(t.mul(x, x));
        const int ly = t.sum_all(t.scale(y, 3.0));
        t.backward(t.add(lx, ly));
        CHECK(t.grad(x).v[0] == 4.0);
        CHECK(t.grad(y).v[0] == 3.0);
    }
}

TEST_CASE("identical graphs produce bit-identical gradients") {
    auto run = [] {
        Rng rng = Rng::from_seed(11);
        std::vector<FdCase> cases = make_cases(rng);
        const FdCase& c = cases.back();
        Tape t;
        std::vector<int> ids;
        for (const NArray& a : c.inputs) ids.push_back(t.leaf(a));
        t.backward(c.build(t, ids));
        std::vector<double> flat;
        for (int id : ids)
            for (double g : t.grad(id).v) flat.push_back(g);
        return flat;
    };
    const auto a = run();
    const auto b = run();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("log of softmax stays finite for logits up to +-50") {
    Tape t;
    const int y = t.log(t.softmax_last(t.leaf(NArray({1, 5}, {-50.0, 0.0, 50.0, 25.0, -25.0}))));
    for (double x : t.val(y).v) CHECK(std::isfinite(x));
    t.backward(t.sum_all(y));
}

TEST_CASE("shape and domain violations throw") {
    Tape t;
    const int v2 = t.leaf(NArray({2, 3}));
    const int v3 = t.leaf(NArray({2, 4}));
    CHECK_THROWS_AS(t.matmul(v2, v3), ConfigError);
    CHECK_THROWS_AS(t.matmul(v2, v2, true, true), ConfigError);
    CHECK_THROWS_AS(t.add(v2, v3), ConfigError);
    CHECK_THROWS_AS(t.slice_last(v2, 2, 2), ConfigError);
    CHECK_THROWS_AS(t.gather_last(v2, {0, 3}), ConfigError);
    CHECK_THROWS_AS(t.lookup_rows(v2, {2}), ConfigError);
    CHECK_THROWS_AS(t.log(t.leaf(NArray::scalar(-1.0))), NumericError);
    CHECK_THROWS_AS(t.backward(v2), ContractError);
    CHECK_THROWS_AS(NArray({2, 2}, {1.0}), ConfigError);
    CHECK_THROWS_AS(NArray({0, 2}), ConfigError);
}
