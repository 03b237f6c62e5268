// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "gpn/gradcheck.hpp"
#include "gpn/rng.hpp"
#include "gpn/tensor.hpp"

using namespace gpn;

TEST_CASE("softmax basics") {
    Graph g;
    Tensor s = g.softmax(g.leaf({0.0, 0.0}, {2}));
    CHECK(s.value()[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(s.value()[1] == doctest::Approx(0.5).epsilon(1e-12));

    // rows sum to one, entries non-negative
    Rng rng(11);
    Vec x(24);
    rng.fill_uniform(x, -5, 5);
    Tensor sm = g.softmax(g.leaf(x, {4, 6}));
    for (int r = 0; r < 4; ++r) {
        double sum = 0.0;
        for (int j = 0; j < 6; ++j) {
            double v = sm.value()[r * 6 + j];
            CHECK(v >= 0.0);
            sum += v;
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    }

    // shift invariance
    Vec shifted = x;
    for (int r = 0; r < 4; ++r)
        for (int j = 0; j < 6; ++j) shifted[r * 6 + j] += 123.456;
    Tensor sm2 = g.softmax(g.leaf(shifted, {4, 6}));
    for (size_t i = 0; i < sm.value().size(); ++i)
        CHECK(std::abs(sm.value()[i] - sm2.value()[i]) < 1e-9);
}

TEST_CASE("relu and hadamard definitions") {
    Graph g;
    Tensor r = g.relu(g.leaf({-1.0, 0.0, 2.0}, {3}));
    CHECK(r.value() == Vec{0.0, 0.0, 2.0});

    Rng rng(3);
    Vec x(10);
    rng.fill_uniform(x, -2, 2);
    Tensor h = g.hadamard(g.leaf(x, {2, 5}), g.leaf(Vec(10, 1.0), {2, 5}));
    CHECK(h.value() == x);
}

TEST_CASE("backward linearity and 2x rule") {
    {
        Graph g;
        Tensor x = g.leaf({1.0, -2.0, 3.0}, {3}, true);
        Tensor loss = g.sum_all(x);
        g.backward(loss);
        CHECK(x.grad_dense() == Vec{1.0, 1.0, 1.0});
    }
    {
        Graph g;
        Tensor x = g.leaf({1.0, 2.0}, {2}, true);
        Tensor loss = g.sum_all(g.hadamard(x, x));
        g.backward(loss);
        CHECK(x.grad_dense() == Vec{2.0, 4.0});
    }
}

TEST_CASE("gradient accumulates when a tensor is used twice") {
    // loss = sum(W x) + sum(W y): dW must collect both contributions.
    Parameter w("w", {2, 2});
    Rng rng(5);
    rng.fill_uniform(w.value, -1, 1);
    Parameter x("x", {2, 1});
    rng.fill_uniform(x.value, -1, 1);
    Parameter y("y", {2, 1});
    rng.fill_uniform(y.value, -1, 1);
    auto build = [&](Graph& g) {
        Tensor wt = g.param(w);
        return g.add(g.sum_all(g.matmul(wt, g.param(x))), g.sum_all(g.matmul(wt, g.param(y))));
    };
    auto rep = grad_check(build, {&w, &x, &y}, 1e-6);
    CHECK(rep.max_rel_error < 1e-8);
}

TEST_CASE("repeated backward accumulates into parameter grads") {
    Parameter p("p", {2});
    p.value = {1.0, 2.0};
    Graph g;
    Tensor loss = g.sum_all(g.param(p));
    g.backward(loss);
    CHECK(p.grad == Vec{1.0, 1.0});
    g.backward(loss);
    CHECK(p.grad == Vec{2.0, 2.0});
}

TEST_CASE("backward rejects non-scalar loss") {
    Graph g;
    Tensor x = g.leaf({1.0, 2.0}, {2}, true);
    CHECK_THROWS_AS(g.backward(x), ShapeError);
}

TEST_CASE("shape mismatch diagnostics name the op") {
    Graph g;
    Tensor a = g.leaf(Vec(6, 0.0), {2, 3});
    Tensor b = g.leaf(Vec(6, 0.0), {2, 3});
    try {
        g.matmul(a, b);
        FAIL("expected throw");
    } catch (const ShapeError& e) {
        std::string msg = e.what();
        CHECK(msg.find("matmul") != std::string::npos);
        CHECK(msg.find("(2,3)") != std::string::npos);
    }
}

TEST_CASE("mean of identical rows is the row") {
    Graph g;
    Vec row = {1.5, -2.25, 0.125};
    Vec data;
    for (int i = 0; i < 5; ++i) data.insert(data.end(), row.begin(), row.end());
    Tensor m = g.mean_blocks(g.leaf(data, {5, 3}), 5);
    CHECK(m.value() == row);
}

TEST_CASE("attention is permutation-equivariant within a block") {
    Rng rng(17);
    int n = 6, d = 8;
    Vec x(static_cast<size_t>(n) * d);
    rng.fill_uniform(x, -1, 1);
    Graph g;
    Tensor base = g.attention(g.leaf(x, {n, d}), g.leaf(x, {n, d}), g.leaf(x, {n, d}), 2, n);

    std::vector<int> perm = {3, 0, 5, 1, 4, 2};
    Vec xp(x.size());
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) xp[i * d + j] = x[perm[i] * d + j];
    Tensor permuted =
        g.attention(g.leaf(xp, {n, d}), g.leaf(xp, {n, d}), g.leaf(xp, {n, d}), 2, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j)
            CHECK(std::abs(permuted.value()[i * d + j] - base.value()[perm[i] * d + j]) < 1e-9);
}

TEST_CASE("attention with one row reduces to identity on values") {
    Rng rng(19);
    Vec q(8), k(8), v(8);
    rng.fill_uniform(q, -1, 1);
    rng.fill_uniform(k, -1, 1);
    rng.fill_uniform(v, -1, 1);
    Graph g;
    Tensor out = g.attention(g.leaf(q, {1, 8}), g.leaf(k, {1, 8}), g.leaf(v, {1, 8}), 2, 1);
    for (int j = 0; j < 8; ++j) CHECK(out.value()[j] == doctest::Approx(v[j]).epsilon(1e-12));
}

TEST_CASE("central differences: every primitive op") {
    auto rows = gradcheck_all_ops(7);
    CHECK(rows.size() >= 18);
    for (const auto& r : rows) {
        INFO(r.op, " err=", r.max_rel_error);
        CHECK(r.pass);
    }
}

TEST_CASE("central differences: linear layer is near-exact") {
    Rng rng(23);
    Parameter w("w", {4, 3});
    rng.fill_uniform(w.value, -1, 1);
    Parameter x("x", {2, 4});
    rng.fill_uniform(x.value, -1, 1);
    Vec weigh(6);
    rng.fill_uniform(weigh, -1, 1);
    // No truncation error for a linear map, so a wide step keeps the
    // difference quotient out of the rounding regime.
    auto rep = grad_check(
        [&](Graph& g) {
            Tensor y = g.matmul(g.param(x), g.param(w));
            return g.sum_all(g.hadamard(y, g.constant(weigh, {2, 3})));
        },
        {&w, &x}, 1e-2);
    CHECK(rep.max_rel_error < 1e-10);
}

TEST_CASE("central differences: softmax cross-entropy head") {
    Rng rng(29);
    Parameter w("w", {4, 5});
    rng.fill_uniform(w.value, -1, 1);
    Parameter x("x", {3, 4});
    rng.fill_uniform(x.value, -1, 1);
    std::vector<int> targets = {2, 0, 4};
    Vec wts = {1.0 / 3, 1.0 / 3, 1.0 / 3};
    auto rep = grad_check(
        [&](Graph& g) {
            return g.weighted_nll(g.log_softmax(g.matmul(g.param(x), g.param(w))), targets, wts);
        },
        {&w, &x}, 1e-5);
    CHECK(rep.max_rel_error < 1e-6);
}

TEST_CASE("central differences: lstm cell step") {
    Rng rng(31);
    int b = 2, in = 4, hid = 3;
    Parameter x("x", {b, in}), h("h", {b, hid}), c("c", {b, hid});
    Parameter wx("wx", {in, 4 * hid}), wh("wh", {hid, 4 * hid}), bias("bias", {4 * hid});
    for (Parameter* p : {&x, &h, &c, &wx, &wh, &bias}) rng.fill_uniform(p->value, -0.7, 0.7);
    Vec wt(static_cast<size_t>(b) * 2 * hid);
    rng.fill_uniform(wt, -1, 1);
    auto rep = grad_check(
        [&](Graph& g) {
            Tensor out = g.lstm_cell(g.param(x), g.param(h), g.param(c), g.param(wx), g.param(wh),
                                     g.param(bias));
            return g.sum_all(g.hadamard(out, g.constant(wt, {b, 2 * hid})));
        },
        {&x, &h, &c, &wx, &wh, &bias}, 1e-5);
    CHECK(rep.max_rel_error < 1e-4);
}

TEST_CASE("detach blocks gradient flow") {
    Parameter p("p", {2});
    p.value = {0.5, -0.5};
    Graph g;
    Tensor t = g.param(p);
    Tensor loss = g.sum_all(g.hadamard(g.detach(t), t));
    g.backward(loss);
    // d/dp [detach(p) * p] = detach(p), so grad equals the values, not 2x.
    CHECK(p.grad == Vec{0.5, -0.5});
}

TEST_CASE("embedding rejects out-of-range indices") {
    Graph g;
    Tensor table = g.leaf(Vec(12, 0.0), {4, 3});
    CHECK_THROWS_AS(g.embedding(table, {0, 4}), ShapeError);
}

TEST_CASE("kl_rows matches closed forms and is non-negative") {
    Graph g;
    Vec ones = {1.0};
    {
        Tensor p = g.leaf({1.0, 0.0}, {1, 2});
        Tensor q = g.leaf({0.5, 0.5}, {1, 2});
        Tensor kl = g.kl_rows(p, q, ones);
        CHECK(kl.scalar() == doctest::Approx(std::log(2.0)).epsilon(1e-9));
    }
    {
        Tensor p = g.leaf({0.3, 0.7}, {1, 2});
        Tensor kl = g.kl_rows(p, p, ones);
        CHECK(std::abs(kl.scalar()) < 1e-12);
    }
    Rng rng(37);
    for (int trial = 0; trial < 50; ++trial) {
        Vec a(6), b(6);
        rng.fill_uniform(a, -3, 3);
        rng.fill_uniform(b, -3, 3);
        Tensor p = g.softmax(g.leaf(a, {1, 6}));
        Tensor q = g.softmax(g.leaf(b, {1, 6}));
        CHECK(g.kl_rows(p, q, ones).scalar() >= -1e-12);
    }
}

TEST_CASE("positional encoding restarts per block") {
    Graph g;
    int n = 4, d = 6;
    Vec zeros(static_cast<size_t>(2) * n * d, 0.0);
    Tensor pe = g.positional_encoding(g.leaf(zeros, {2 * n, d}), n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j)
            CHECK(pe.value()[i * d + j] ==
                  doctest::Approx(pe.value()[(n + i) * d + j]).epsilon(1e-12));
    // position 0: sin -> 0, cos -> 1
    CHECK(pe.value()[0] == doctest::Approx(0.0));
    CHECK(pe.value()[1] == doctest::Approx(1.0));
}
