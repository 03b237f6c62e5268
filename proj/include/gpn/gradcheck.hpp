// SPDX-License-Identifier: Apache-2.0
//
// Central-difference gradient checking against the tape's analytic gradients.
// The numeric side only ever calls the forward pass, so it stays independent
// of every backward implementation it validates.

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "gpn/common.hpp"
#include "gpn/tensor.hpp"

namespace gpn {

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::string worst_param;
    size_t worst_index = 0;
};

// `build` must construct the scalar loss from the parameters' current values;
// it is called 1 + 2*total_elements times.
inline GradCheckReport grad_check(const std::function<Tensor(Graph&)>& build,
                                  const std::vector<Parameter*>& params,
                                  double h = 1e-5) {
    require(h > 0.0, "grad_check", "step must be positive");
    for (Parameter* p : params) p->zero_grad();
    {
        Graph g;
        Tensor loss = build(g);
        require(is_finite(loss.scalar()), "grad_check", "non-finite loss at base point");
        g.backward(loss);
    }
    GradCheckReport report;
    for (Parameter* p : params) {
        for (size_t i = 0; i < p->value.size(); ++i) {
            double saved = p->value[i];
            p->value[i] = saved + h;
            double fp;
            {
                Graph g;
                fp = build(g).scalar();
            }
            p->value[i] = saved - h;
            double fm;
            {
                Graph g;
                fm = build(g).scalar();
            }
            p->value[i] = saved;
            if (!is_finite(fp) || !is_finite(fm))
                throw std::runtime_error(strcat_msg("grad_check: non-finite value at ",
                                                    p->name, "[", i, "]"));
            double numeric = (fp - fm) / (2.0 * h);
            double analytic = p->grad[i];
            double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
            double rel = std::abs(analytic - numeric) / denom;
            if (rel > report.max_rel_error) {
                report.max_rel_error = rel;
                report.worst_param = p->name;
                report.worst_index = i;
            }
        }
    }
    return report;
}

// Directional variant for large graphs. Per-element central differences on a
// scalar f of magnitude ~10 carry an irreducible rounding floor of about
// eps*|f|/(2h) ~ 1e-10, which swamps the relative error of elements whose
// true gradient sits near 1e-8. Projecting onto a random unit direction per
// parameter tensor compares two O(|grad|) quantities instead, and a wrong
// gradient component perturbs the projection with probability one.
inline GradCheckReport grad_check_directional(const std::function<Tensor(Graph&)>& build,
                                              const std::vector<Parameter*>& params,
                                              double h = 1e-5, std::uint64_t seed = 99) {
    require(h > 0.0, "grad_check", "step must be positive");
    for (Parameter* p : params) p->zero_grad();
    {
        Graph g;
        Tensor loss = build(g);
        require(is_finite(loss.scalar()), "grad_check", "non-finite loss at base point");
        g.backward(loss);
    }
    Rng rng(seed);
    GradCheckReport report;
    for (Parameter* p : params) {
        Vec dir(p->value.size());
        rng.fill_gaussian(dir, 1.0);
        double norm = 0.0;
        for (double d : dir) norm += d * d;
        norm = std::sqrt(norm);
        for (double& d : dir) d /= norm;

        double analytic = 0.0;
        for (size_t i = 0; i < p->value.size(); ++i) analytic += p->grad[i] * dir[i];

        Vec saved = p->value;
        for (size_t i = 0; i < p->value.size(); ++i) p->value[i] = saved[i] + h * dir[i];
        double fp;
        {
            Graph g;
            fp = build(g).scalar();
        }
        for (size_t i = 0; i < p->value.size(); ++i) p->value[i] = saved[i] - h * dir[i];
        double fm;
        {
            Graph g;
            fm = build(g).scalar();
        }
        p->value = saved;
        double numeric = (fp - fm) / (2.0 * h);
        double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
        double rel = std::abs(analytic - numeric) / denom;
        if (rel > report.max_rel_error) {
            report.max_rel_error = rel;
            report.worst_param = p->name;
        }
    }
    return report;
}

// Per-op gradcheck rows for the CLI table.
struct OpGradCheckRow {
    std::string op;
    double max_rel_error;
    double tolerance;
    bool pass;
};

namespace detail {

inline Parameter make_param(const std::string& name, Shape shape, Rng& rng, double lo = -0.8,
                            double hi = 0.8) {
    Parameter p(name, std::move(shape));
    rng.fill_uniform(p.value, lo, hi);
    return p;
}

// Random fixed weighting turns a tensor output into a scalar and exercises
// every output element's gradient path.
inline Tensor weigh(Graph& g, Tensor t, const Vec& w) {
    Tensor wt = g.constant(w, t.shape());
    return g.sum_all(g.hadamard(t, wt));
}

}  // namespace detail

// Runs a central-difference check on a representative instance of every
// primitive op kind. Smooth ops get the tight tolerance, ops with
// branching/max the loose one.
inline std::vector<OpGradCheckRow> gradcheck_all_ops(std::uint64_t seed = 7,
                                                     double tol_smooth = 1e-6,
                                                     double tol_kinked = 1e-4) {
    std::vector<OpGradCheckRow> rows;
    Rng rng(seed);
    auto run = [&](const std::string& op, double tol,
                   const std::function<Tensor(Graph&)>& build,
                   const std::vector<Parameter*>& params) {
        double err = grad_check(build, params, 1e-5).max_rel_error;
        rows.push_back({op, err, tol, err < tol});
    };

    {
        Rng r = rng.fork(1);
        auto a = detail::make_param("a", {3, 4}, r);
        auto b = detail::make_param("b", {4, 5}, r);
        Vec w(15);
        r.fill_uniform(w, -1, 1);
        run("matmul", tol_smooth,
            [&](Graph& g) { return detail::weigh(g, g.matmul(g.param(a), g.param(b)), w); },
            {&a, &b});
    }
    {
        Rng r = rng.fork(2);
        auto a = detail::make_param("a", {3, 4}, r);
        auto b = detail::make_param("b", {3, 4}, r);
        Vec w(12);
        r.fill_uniform(w, -1, 1);
        run("add", tol_smooth,
            [&](Graph& g) { return detail::weigh(g, g.add(g.param(a), g.param(b)), w); },
            {&a, &b});
        run("hadamard", tol_smooth,
            [&](Graph& g) { return detail::weigh(g, g.hadamard(g.param(a), g.param(b)), w); },
            {&a, &b});
    }
    {
        Rng r = rng.fork(3);
        auto a = detail::make_param("a", {3, 4}, r);
        auto b = detail::make_param("b", {4}, r);
        auto c = detail::make_param("c", {3}, r);
        Vec w(12);
        r.fill_uniform(w, -1, 1);
        run("add_rowvec", tol_smooth,
            [&](Graph& g) { return detail::weigh(g, g.add_rowvec(g.param(a), g.param(b)), w); },
            {&a, &b});
        run("mul_rowvec", tol_smooth,
            [&](Graph& g) { return detail::weigh(g, g.mul_rowvec(g.param(a), g.param(b)), w); },
            {&a, &b});
        run("mul_colvec", tol_smooth,
            [&](Graph& g) { return detail::weigh(g, g.mul_colvec(g.param(a), g.param(c)), w); },
            {&a, &c});
    }
    {
        Rng r = rng.fork(4);
        auto a = detail::make_param("a", {3, 4}, r);
        Vec w(12);
        r.fill_uniform(w, -1, 1);
        run("relu", tol_kinked,
            [&](Graph& g) { return detail::weigh(g, g.relu(g.param(a)), w); }, {&a});
        run("softmax", tol_smooth,
            [&](Graph& g) { return detail::weigh(g, g.softmax(g.param(a)), w); }, {&a});
        run("log_softmax", tol_smooth,
            [&](Graph& g) { return detail::weigh(g, g.log_softmax(g.param(a)), w); }, {&a});
        run("scale", tol_smooth,
            [&](Graph& g) { return detail::weigh(g, g.scale(g.param(a), -1.7), w); }, {&a});
        run("positional_encoding", tol_smooth,
            [&](Graph& g) { return detail::weigh(g, g.positional_encoding(g.param(a), 3), w); },
            {&a});
    }
    {
        Rng r = rng.fork(5);
        auto a = detail::make_param("a", {6, 4}, r);
        Vec w2(8);
        r.fill_uniform(w2, -1, 1);
        run("mean_blocks", tol_smooth,
            [&](Graph& g) { return detail::weigh(g, g.mean_blocks(g.param(a), 3), w2); }, {&a});
        run("sum", tol_smooth, [&](Graph& g) { return g.sum_all(g.param(a)); }, {&a});
        Vec w3(12);
        r.fill_uniform(w3, -1, 1);
        run("slice_cols", tol_smooth,
            [&](Graph& g) { return detail::weigh(g, g.slice_cols(g.param(a), 1, 3), w3); }, {&a});
        Vec w4(static_cast<size_t>(6) * 7);
        r.fill_uniform(w4, -1, 1);
        auto b = detail::make_param("b", {6, 3}, r);
        run("concat_cols", tol_smooth,
            [&](Graph& g) {
                return detail::weigh(g, g.concat_cols(g.param(a), g.param(b)), w4);
            },
            {&a, &b});
        Vec w5(static_cast<size_t>(4) * 4);
        r.fill_uniform(w5, -1, 1);
        std::vector<int> idx = {2, 0, 5, 2};  // repeated index exercises accumulation
        run("embedding", tol_smooth,
            [&](Graph& g) { return detail::weigh(g, g.embedding(g.param(a), idx), w5); }, {&a});
        Vec w6(static_cast<size_t>(12) * 4);
        r.fill_uniform(w6, -1, 1);
        auto c = detail::make_param("c", {4, 4}, r);
        run("repeat_rows", tol_smooth,
            [&](Graph& g) { return detail::weigh(g, g.repeat_rows(g.param(c), 3), w6); }, {&c});
    }
    {
        Rng r = rng.fork(9);
        auto x = detail::make_param("x", {3, 6}, r);
        auto gamma = detail::make_param("gamma", {6}, r, 0.5, 1.5);
        auto beta = detail::make_param("beta", {6}, r);
        Vec w(18);
        r.fill_uniform(w, -1, 1);
        run("layernorm_rows", tol_smooth,
            [&](Graph& g) {
                return detail::weigh(
                    g, g.layernorm_rows(g.param(x), g.param(gamma), g.param(beta)), w);
            },
            {&x, &gamma, &beta});
    }
    {
        Rng r = rng.fork(6);
        auto q = detail::make_param("q", {8, 6}, r);
        auto k = detail::make_param("k", {8, 6}, r);
        auto v = detail::make_param("v", {8, 6}, r);
        Vec w(48);
        r.fill_uniform(w, -1, 1);
        run("attention", tol_smooth,
            [&](Graph& g) {
                return detail::weigh(g, g.attention(g.param(q), g.param(k), g.param(v), 2, 4), w);
            },
            {&q, &k, &v});
    }
    {
        Rng r = rng.fork(7);
        int b = 3, in = 5, hid = 4;
        auto x = detail::make_param("x", {b, in}, r);
        auto h = detail::make_param("h", {b, hid}, r);
        auto c = detail::make_param("c", {b, hid}, r);
        auto wx = detail::make_param("wx", {in, 4 * hid}, r);
        auto wh = detail::make_param("wh", {hid, 4 * hid}, r);
        auto bias = detail::make_param("bias", {4 * hid}, r);
        Vec w(static_cast<size_t>(b) * 2 * hid);
        r.fill_uniform(w, -1, 1);
        run("lstm_cell", tol_kinked,
            [&](Graph& g) {
                return detail::weigh(g,
                                     g.lstm_cell(g.param(x), g.param(h), g.param(c), g.param(wx),
                                                 g.param(wh), g.param(bias)),
                                     w);
            },
            {&x, &h, &c, &wx, &wh, &bias});
    }
    {
        Rng r = rng.fork(8);
        auto a = detail::make_param("a", {3, 5}, r);
        std::vector<int> targets = {1, 4, 0};
        Vec weights = {0.5, 0.25, 0.25};
        run("weighted_nll", tol_smooth,
            [&](Graph& g) {
                return g.weighted_nll(g.log_softmax(g.param(a)), targets, weights);
            },
            {&a});
        auto p = detail::make_param("p", {2, 5}, r);
        auto q = detail::make_param("q", {2, 5}, r);
        Vec kw = {0.5, 0.5};
        run("kl_rows", tol_smooth,
            [&](Graph& g) {
                return g.kl_rows(g.softmax(g.param(p)), g.softmax(g.param(q)), kw);
            },
            {&p, &q});
    }
    return rows;
}

}  // namespace gpn
