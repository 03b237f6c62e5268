// SPDX-License-Identifier: Apache-2.0
//
// Dense 64-bit tensors with reverse-mode automatic differentiation.
//
// A Graph is a tape: every op records one node holding its output value and
// a closure that pushes gradients to its parents. Nodes are created in
// execution order, so the reverse of creation order is a valid topological
// order for backward. Storage is row-major, transposes materialize.
//
// Parameters live outside the tape (they persist across steps); Graph::param
// copies the current value in as a leaf and backward() accumulates the leaf
// gradient back into Parameter::grad. Repeated backward() calls accumulate.

#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "gpn/common.hpp"
#include "gpn/rng.hpp"

namespace gpn {

struct Parameter {
    std::string name;
    Shape shape;
    Vec value;
    Vec grad;

    Parameter() = default;
    Parameter(std::string n, Shape s)
        : name(std::move(n)), shape(std::move(s)) {
        value.assign(static_cast<size_t>(numel(shape)), 0.0);
        grad.assign(value.size(), 0.0);
    }

    void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
};

// Name -> parameter map with stable registration order (checkpoint layout
// and Adam slot order both follow it).
class ParamRegistry {
public:
    Parameter* add(std::string name, Shape shape) {
        require(index_.find(name) == index_.end(), "registry",
                "duplicate parameter name " + name);
        params_.push_back(std::make_unique<Parameter>(name, std::move(shape)));
        index_[params_.back()->name] = params_.size() - 1;
        return params_.back().get();
    }

    Parameter* find(const std::string& name) const {
        auto it = index_.find(name);
        return it == index_.end() ? nullptr : params_[it->second].get();
    }

    std::vector<Parameter*> all() const {
        std::vector<Parameter*> out;
        out.reserve(params_.size());
        for (auto& p : params_) out.push_back(p.get());
        return out;
    }

    size_t size() const { return params_.size(); }

    void zero_grads() {
        for (auto& p : params_) p->zero_grad();
    }

private:
    std::vector<std::unique_ptr<Parameter>> params_;
    std::unordered_map<std::string, size_t> index_;
};

inline void init_xavier_uniform(Parameter& p, Rng& rng, int fan_in, int fan_out) {
    double a = std::sqrt(6.0 / (fan_in + fan_out));
    rng.fill_uniform(p.value, -a, a);
}

inline void init_constant(Parameter& p, double v) {
    std::fill(p.value.begin(), p.value.end(), v);
}

class Graph;

struct Node {
    Shape shape;
    Vec value;
    Vec grad;  // empty until touched by backward
    bool requires_grad = false;
    Parameter* param = nullptr;        // set for parameter leaves
    std::function<void()> backward_fn; // empty for leaves

    double* gbuf() {
        if (grad.empty()) grad.assign(value.size(), 0.0);
        return grad.data();
    }
};

class Tensor {
public:
    Tensor() = default;
    Tensor(Graph* g, Node* n) : g_(g), n_(n) {}

    const Shape& shape() const { return n_->shape; }
    const Vec& value() const { return n_->value; }
    bool requires_grad() const { return n_->requires_grad; }

    // Gradient seen by the last backward pass; zeros if untouched.
    Vec grad_dense() const {
        if (n_->grad.empty()) return Vec(n_->value.size(), 0.0);
        return n_->grad;
    }

    double scalar() const {
        require(n_->value.size() == 1, "scalar", "tensor is not a scalar");
        return n_->value[0];
    }

    Node* node() const { return n_; }
    Graph* graph() const { return g_; }
    bool valid() const { return n_ != nullptr; }

private:
    Graph* g_ = nullptr;
    Node* n_ = nullptr;
};

class Graph {
public:
    // ---- leaves -------------------------------------------------------

    Tensor leaf(Vec data, Shape shape, bool requires_grad = false) {
        require(static_cast<std::int64_t>(data.size()) == numel(shape), "leaf",
                "data length " + std::to_string(data.size()) +
                    " does not match shape " + shape_str(shape));
        Node* n = new_node(std::move(shape));
        n->value = std::move(data);
        n->requires_grad = requires_grad;
        return {this, n};
    }

    Tensor constant(Vec data, Shape shape) { return leaf(std::move(data), std::move(shape), false); }

    Tensor scalar_leaf(double v) { return leaf({v}, {1}, false); }

    // Copies the parameter value onto the tape. With trainable=false the
    // leaf is a plain constant (inference paths skip all gradient work).
    Tensor param(Parameter& p, bool trainable = true) {
        Node* n = new_node(p.shape);
        n->value = p.value;
        n->requires_grad = trainable;
        if (trainable) n->param = &p;
        return {this, n};
    }

    // Leaf copy of x that blocks gradient flow.
    Tensor detach(Tensor x) {
        Node* n = new_node(x.shape());
        n->value = x.value();
        n->requires_grad = false;
        return {this, n};
    }

    // ---- arithmetic primitives ---------------------------------------

    Tensor matmul(Tensor a, Tensor b) {
        check_rank("matmul", a, 2);
        check_rank("matmul", b, 2);
        int m = a.shape()[0], k = a.shape()[1], k2 = b.shape()[0], n = b.shape()[1];
        if (k != k2)
            shape_fail("matmul", "inner dims differ ", shape_str(a.shape()), " x ",
                       shape_str(b.shape()));
        Node* out = new_node({m, n});
        out->value.assign(static_cast<size_t>(m) * n, 0.0);
        const double* A = a.value().data();
        const double* B = b.value().data();
        double* C = out->value.data();
        for (int i = 0; i < m; ++i)
            for (int p = 0; p < k; ++p) {
                double av = A[i * k + p];
                if (av == 0.0) continue;
                const double* Brow = B + static_cast<size_t>(p) * n;
                double* Crow = C + static_cast<size_t>(i) * n;
                for (int j = 0; j < n; ++j) Crow[j] += av * Brow[j];
            }
        finish(out, {a.node(), b.node()});
        Node *an = a.node(), *bn = b.node();
        out->backward_fn = [an, bn, out, m, k, n]() {
            const double* dC = out->grad.data();
            if (an->requires_grad) {
                double* dA = an->gbuf();
                const double* B = bn->value.data();
                for (int i = 0; i < m; ++i)
                    for (int p = 0; p < k; ++p) {
                        double s = 0.0;
                        const double* dCrow = dC + static_cast<size_t>(i) * n;
                        const double* Brow = B + static_cast<size_t>(p) * n;
                        for (int j = 0; j < n; ++j) s += dCrow[j] * Brow[j];
                        dA[i * k + p] += s;
                    }
            }
            if (bn->requires_grad) {
                double* dB = bn->gbuf();
                const double* A = an->value.data();
                for (int i = 0; i < m; ++i)
                    for (int p = 0; p < k; ++p) {
                        double av = A[i * k + p];
                        if (av == 0.0) continue;
                        const double* dCrow = dC + static_cast<size_t>(i) * n;
                        double* dBrow = dB + static_cast<size_t>(p) * n;
                        for (int j = 0; j < n; ++j) dBrow[j] += av * dCrow[j];
                    }
            }
        };
        return {this, out};
    }

    Tensor add(Tensor a, Tensor b) {
        check_same_shape("add", a, b);
        Node* out = new_node(a.shape());
        out->value.resize(a.value().size());
        for (size_t i = 0; i < out->value.size(); ++i)
            out->value[i] = a.value()[i] + b.value()[i];
        finish(out, {a.node(), b.node()});
        Node *an = a.node(), *bn = b.node();
        out->backward_fn = [an, bn, out]() {
            if (an->requires_grad) {
                double* dA = an->gbuf();
                for (size_t i = 0; i < out->grad.size(); ++i) dA[i] += out->grad[i];
            }
            if (bn->requires_grad) {
                double* dB = bn->gbuf();
                for (size_t i = 0; i < out->grad.size(); ++i) dB[i] += out->grad[i];
            }
        };
        return {this, out};
    }

    // a[m x n] + row vector b[n], broadcast over rows.
    Tensor add_rowvec(Tensor a, Tensor b) {
        check_rank("add_rowvec", a, 2);
        int m = a.shape()[0], n = a.shape()[1];
        if (static_cast<std::int64_t>(b.value().size()) != n)
            shape_fail("add_rowvec", "matrix ", shape_str(a.shape()), " vs vector ",
                       shape_str(b.shape()));
        Node* out = new_node(a.shape());
        out->value.resize(a.value().size());
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j)
                out->value[i * n + j] = a.value()[i * n + j] + b.value()[j];
        finish(out, {a.node(), b.node()});
        Node *an = a.node(), *bn = b.node();
        out->backward_fn = [an, bn, out, m, n]() {
            if (an->requires_grad) {
                double* dA = an->gbuf();
                for (size_t i = 0; i < out->grad.size(); ++i) dA[i] += out->grad[i];
            }
            if (bn->requires_grad) {
                double* dB = bn->gbuf();
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < n; ++j) dB[j] += out->grad[i * n + j];
            }
        };
        return {this, out};
    }

    Tensor hadamard(Tensor a, Tensor b) {
        check_same_shape("hadamard", a, b);
        Node* out = new_node(a.shape());
        out->value.resize(a.value().size());
        for (size_t i = 0; i < out->value.size(); ++i)
            out->value[i] = a.value()[i] * b.value()[i];
        finish(out, {a.node(), b.node()});
        Node *an = a.node(), *bn = b.node();
        out->backward_fn = [an, bn, out]() {
            if (an->requires_grad) {
                double* dA = an->gbuf();
                for (size_t i = 0; i < out->grad.size(); ++i)
                    dA[i] += out->grad[i] * bn->value[i];
            }
            if (bn->requires_grad) {
                double* dB = bn->gbuf();
                for (size_t i = 0; i < out->grad.size(); ++i)
                    dB[i] += out->grad[i] * an->value[i];
            }
        };
        return {this, out};
    }

    // a[m x n] * row vector b[n], broadcast over rows.
    Tensor mul_rowvec(Tensor a, Tensor b) {
        check_rank("mul_rowvec", a, 2);
        int m = a.shape()[0], n = a.shape()[1];
        if (static_cast<std::int64_t>(b.value().size()) != n)
            shape_fail("mul_rowvec", "matrix ", shape_str(a.shape()), " vs vector ",
                       shape_str(b.shape()));
        Node* out = new_node(a.shape());
        out->value.resize(a.value().size());
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j)
                out->value[i * n + j] = a.value()[i * n + j] * b.value()[j];
        finish(out, {a.node(), b.node()});
        Node *an = a.node(), *bn = b.node();
        out->backward_fn = [an, bn, out, m, n]() {
            if (an->requires_grad) {
                double* dA = an->gbuf();
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < n; ++j)
                        dA[i * n + j] += out->grad[i * n + j] * bn->value[j];
            }
            if (bn->requires_grad) {
                double* dB = bn->gbuf();
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < n; ++j)
                        dB[j] += out->grad[i * n + j] * an->value[i * n + j];
            }
        };
        return {this, out};
    }

    // a[m x n] * column vector c[m], broadcast over columns.
    Tensor mul_colvec(Tensor a, Tensor c) {
        check_rank("mul_colvec", a, 2);
        int m = a.shape()[0], n = a.shape()[1];
        if (static_cast<std::int64_t>(c.value().size()) != m)
            shape_fail("mul_colvec", "matrix ", shape_str(a.shape()), " vs vector ",
                       shape_str(c.shape()));
        Node* out = new_node(a.shape());
        out->value.resize(a.value().size());
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j)
                out->value[i * n + j] = a.value()[i * n + j] * c.value()[i];
        finish(out, {a.node(), c.node()});
        Node *an = a.node(), *cn = c.node();
        out->backward_fn = [an, cn, out, m, n]() {
            if (an->requires_grad) {
                double* dA = an->gbuf();
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < n; ++j)
                        dA[i * n + j] += out->grad[i * n + j] * cn->value[i];
            }
            if (cn->requires_grad) {
                double* dCv = cn->gbuf();
                for (int i = 0; i < m; ++i) {
                    double s = 0.0;
                    for (int j = 0; j < n; ++j)
                        s += out->grad[i * n + j] * an->value[i * n + j];
                    dCv[i] += s;
                }
            }
        };
        return {this, out};
    }

    Tensor relu(Tensor x) {
        Node* out = new_node(x.shape());
        out->value.resize(x.value().size());
        for (size_t i = 0; i < out->value.size(); ++i)
            out->value[i] = x.value()[i] > 0.0 ? x.value()[i] : 0.0;
        finish(out, {x.node()});
        Node* xn = x.node();
        out->backward_fn = [xn, out]() {
            if (!xn->requires_grad) return;
            double* dX = xn->gbuf();
            for (size_t i = 0; i < out->grad.size(); ++i)
                if (xn->value[i] > 0.0) dX[i] += out->grad[i];
        };
        return {this, out};
    }

    Tensor scale(Tensor x, double s) {
        Node* out = new_node(x.shape());
        out->value.resize(x.value().size());
        for (size_t i = 0; i < out->value.size(); ++i) out->value[i] = s * x.value()[i];
        finish(out, {x.node()});
        Node* xn = x.node();
        out->backward_fn = [xn, out, s]() {
            if (!xn->requires_grad) return;
            double* dX = xn->gbuf();
            for (size_t i = 0; i < out->grad.size(); ++i) dX[i] += s * out->grad[i];
        };
        return {this, out};
    }

    // ---- softmax family (over the last axis) --------------------------

    Tensor softmax(Tensor x) {
        auto [rows, cols] = rows_cols("softmax", x);
        Node* out = new_node(x.shape());
        out->value.resize(x.value().size());
        softmax_rows(x.value().data(), out->value.data(), rows, cols, false);
        finish(out, {x.node()});
        Node* xn = x.node();
        out->backward_fn = [xn, out, rows = rows, cols = cols]() {
            if (!xn->requires_grad) return;
            double* dX = xn->gbuf();
            for (int r = 0; r < rows; ++r) {
                const double* s = out->value.data() + static_cast<size_t>(r) * cols;
                const double* ds = out->grad.data() + static_cast<size_t>(r) * cols;
                double dot = 0.0;
                for (int j = 0; j < cols; ++j) dot += s[j] * ds[j];
                double* dx = dX + static_cast<size_t>(r) * cols;
                for (int j = 0; j < cols; ++j) dx[j] += s[j] * (ds[j] - dot);
            }
        };
        return {this, out};
    }

    Tensor log_softmax(Tensor x) {
        auto [rows, cols] = rows_cols("log_softmax", x);
        Node* out = new_node(x.shape());
        out->value.resize(x.value().size());
        softmax_rows(x.value().data(), out->value.data(), rows, cols, true);
        finish(out, {x.node()});
        Node* xn = x.node();
        out->backward_fn = [xn, out, rows = rows, cols = cols]() {
            if (!xn->requires_grad) return;
            double* dX = xn->gbuf();
            for (int r = 0; r < rows; ++r) {
                const double* lp = out->value.data() + static_cast<size_t>(r) * cols;
                const double* ds = out->grad.data() + static_cast<size_t>(r) * cols;
                double sum = 0.0;
                for (int j = 0; j < cols; ++j) sum += ds[j];
                double* dx = dX + static_cast<size_t>(r) * cols;
                for (int j = 0; j < cols; ++j) dx[j] += ds[j] - std::exp(lp[j]) * sum;
            }
        };
        return {this, out};
    }

    // ---- reductions / reshapes ----------------------------------------

    // Mean over groups of `block` consecutive rows: [g*block x n] -> [g x n].
    Tensor mean_blocks(Tensor x, int block) {
        check_rank("mean_blocks", x, 2);
        int m = x.shape()[0], n = x.shape()[1];
        if (block <= 0 || m % block != 0)
            shape_fail("mean_blocks", "rows ", m, " not divisible by block ", block);
        int g = m / block;
        Node* out = new_node({g, n});
        out->value.assign(static_cast<size_t>(g) * n, 0.0);
        for (int i = 0; i < m; ++i) {
            int gi = i / block;
            for (int j = 0; j < n; ++j)
                out->value[gi * n + j] += x.value()[i * n + j];
        }
        double inv = 1.0 / block;
        for (double& v : out->value) v *= inv;
        finish(out, {x.node()});
        Node* xn = x.node();
        out->backward_fn = [xn, out, m, n, block, inv]() {
            if (!xn->requires_grad) return;
            double* dX = xn->gbuf();
            for (int i = 0; i < m; ++i) {
                int gi = i / block;
                for (int j = 0; j < n; ++j)
                    dX[i * n + j] += out->grad[gi * n + j] * inv;
            }
        };
        return {this, out};
    }

    Tensor sum_all(Tensor x) {
        Node* out = new_node({1});
        double s = 0.0;
        for (double v : x.value()) s += v;
        out->value = {s};
        finish(out, {x.node()});
        Node* xn = x.node();
        out->backward_fn = [xn, out]() {
            if (!xn->requires_grad) return;
            double* dX = xn->gbuf();
            for (size_t i = 0; i < xn->value.size(); ++i) dX[i] += out->grad[0];
        };
        return {this, out};
    }

    Tensor concat_cols(Tensor a, Tensor b) {
        check_rank("concat_cols", a, 2);
        check_rank("concat_cols", b, 2);
        int m = a.shape()[0], p = a.shape()[1], q = b.shape()[1];
        if (b.shape()[0] != m)
            shape_fail("concat_cols", "row counts differ ", shape_str(a.shape()), " vs ",
                       shape_str(b.shape()));
        Node* out = new_node({m, p + q});
        out->value.resize(static_cast<size_t>(m) * (p + q));
        for (int i = 0; i < m; ++i) {
            for (int j = 0; j < p; ++j) out->value[i * (p + q) + j] = a.value()[i * p + j];
            for (int j = 0; j < q; ++j) out->value[i * (p + q) + p + j] = b.value()[i * q + j];
        }
        finish(out, {a.node(), b.node()});
        Node *an = a.node(), *bn = b.node();
        out->backward_fn = [an, bn, out, m, p, q]() {
            if (an->requires_grad) {
                double* dA = an->gbuf();
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < p; ++j) dA[i * p + j] += out->grad[i * (p + q) + j];
            }
            if (bn->requires_grad) {
                double* dB = bn->gbuf();
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < q; ++j)
                        dB[i * q + j] += out->grad[i * (p + q) + p + j];
            }
        };
        return {this, out};
    }

    Tensor slice_cols(Tensor x, int c0, int c1) {
        check_rank("slice_cols", x, 2);
        int m = x.shape()[0], n = x.shape()[1];
        if (!(0 <= c0 && c0 < c1 && c1 <= n))
            shape_fail("slice_cols", "range [", c0, ",", c1, ") out of ", shape_str(x.shape()));
        int w = c1 - c0;
        Node* out = new_node({m, w});
        out->value.resize(static_cast<size_t>(m) * w);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < w; ++j) out->value[i * w + j] = x.value()[i * n + c0 + j];
        finish(out, {x.node()});
        Node* xn = x.node();
        out->backward_fn = [xn, out, m, n, c0, w]() {
            if (!xn->requires_grad) return;
            double* dX = xn->gbuf();
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < w; ++j) dX[i * n + c0 + j] += out->grad[i * w + j];
        };
        return {this, out};
    }

    // Row gather: table[v x d], indices[k] -> [k x d]. Duplicate indices
    // accumulate their gradients in the table.
    Tensor embedding(Tensor table, const std::vector<int>& indices) {
        check_rank("embedding", table, 2);
        int v = table.shape()[0], d = table.shape()[1];
        for (int idx : indices)
            if (idx < 0 || idx >= v)
                shape_fail("embedding", "index ", idx, " out of table ", shape_str(table.shape()));
        int k = static_cast<int>(indices.size());
        Node* out = new_node({k, d});
        out->value.resize(static_cast<size_t>(k) * d);
        for (int i = 0; i < k; ++i)
            for (int j = 0; j < d; ++j)
                out->value[i * d + j] = table.value()[indices[i] * d + j];
        finish(out, {table.node()});
        Node* tn = table.node();
        out->backward_fn = [tn, out, indices, k, d]() {
            if (!tn->requires_grad) return;
            double* dT = tn->gbuf();
            for (int i = 0; i < k; ++i)
                for (int j = 0; j < d; ++j)
                    dT[indices[i] * d + j] += out->grad[i * d + j];
        };
        return {this, out};
    }

    // Repeat each row of a[g x n] `times` times -> [g*times x n].
    Tensor repeat_rows(Tensor a, int times) {
        check_rank("repeat_rows", a, 2);
        int g = a.shape()[0], n = a.shape()[1];
        Node* out = new_node({g * times, n});
        out->value.resize(static_cast<size_t>(g) * times * n);
        for (int r = 0; r < g * times; ++r) {
            int src = r / times;
            for (int j = 0; j < n; ++j) out->value[r * n + j] = a.value()[src * n + j];
        }
        finish(out, {a.node()});
        Node* an = a.node();
        out->backward_fn = [an, out, g, n, times]() {
            if (!an->requires_grad) return;
            double* dA = an->gbuf();
            for (int r = 0; r < g * times; ++r) {
                int src = r / times;
                for (int j = 0; j < n; ++j) dA[src * n + j] += out->grad[r * n + j];
            }
        };
        return {this, out};
    }

    // Adds the sinusoidal positional table to x, per block of `block` rows
    // (each block restarts the position index at 0).
    Tensor positional_encoding(Tensor x, int block) {
        check_rank("positional_encoding", x, 2);
        int m = x.shape()[0], d = x.shape()[1];
        if (block <= 0 || m % block != 0)
            shape_fail("positional_encoding", "rows ", m, " not divisible by block ", block);
        Vec pe = sinusoidal_table(block, d);
        Node* out = new_node(x.shape());
        out->value.resize(x.value().size());
        for (int i = 0; i < m; ++i) {
            int pos = i % block;
            for (int j = 0; j < d; ++j)
                out->value[i * d + j] = x.value()[i * d + j] + pe[pos * d + j];
        }
        finish(out, {x.node()});
        Node* xn = x.node();
        out->backward_fn = [xn, out]() {
            if (!xn->requires_grad) return;
            double* dX = xn->gbuf();
            for (size_t i = 0; i < out->grad.size(); ++i) dX[i] += out->grad[i];
        };
        return {this, out};
    }

    static Vec sinusoidal_table(int n, int d) {
        Vec pe(static_cast<size_t>(n) * d);
        for (int pos = 0; pos < n; ++pos)
            for (int j = 0; j < d; ++j) {
                double rate = std::pow(10000.0, -2.0 * (j / 2) / d);
                double ang = pos * rate;
                pe[pos * d + j] = (j % 2 == 0) ? std::sin(ang) : std::cos(ang);
            }
        return pe;
    }

    // Row-wise layer normalization with learnable gain/shift.
    Tensor layernorm_rows(Tensor x, Tensor gamma, Tensor beta, double eps = 1e-5) {
        check_rank("layernorm_rows", x, 2);
        int m = x.shape()[0], n = x.shape()[1];
        if (static_cast<int>(gamma.value().size()) != n ||
            static_cast<int>(beta.value().size()) != n)
            shape_fail("layernorm_rows", "gain/shift size vs cols ", n);
        Node* out = new_node(x.shape());
        out->value.resize(x.value().size());
        auto cache = std::make_shared<Vec>(static_cast<size_t>(m) * (n + 1));  // xhat rows + 1/std
        for (int i = 0; i < m; ++i) {
            const double* xr = x.value().data() + static_cast<size_t>(i) * n;
            double mu = 0.0;
            for (int j = 0; j < n; ++j) mu += xr[j];
            mu /= n;
            double var = 0.0;
            for (int j = 0; j < n; ++j) var += (xr[j] - mu) * (xr[j] - mu);
            var /= n;
            double inv_std = 1.0 / std::sqrt(var + eps);
            double* xhat = cache->data() + static_cast<size_t>(i) * n;
            (*cache)[static_cast<size_t>(m) * n + i] = inv_std;
            for (int j = 0; j < n; ++j) {
                xhat[j] = (xr[j] - mu) * inv_std;
                out->value[i * n + j] = xhat[j] * gamma.value()[j] + beta.value()[j];
            }
        }
        finish(out, {x.node(), gamma.node(), beta.node()});
        Node *xn = x.node(), *gn = gamma.node(), *bn = beta.node();
        out->backward_fn = [xn, gn, bn, out, cache, m, n]() {
            const double* xhat_all = cache->data();
            const double* inv_std = cache->data() + static_cast<size_t>(m) * n;
            double* dG = gn->requires_grad ? gn->gbuf() : nullptr;
            double* dB = bn->requires_grad ? bn->gbuf() : nullptr;
            double* dX = xn->requires_grad ? xn->gbuf() : nullptr;
            for (int i = 0; i < m; ++i) {
                const double* dy = out->grad.data() + static_cast<size_t>(i) * n;
                const double* xhat = xhat_all + static_cast<size_t>(i) * n;
                if (dG)
                    for (int j = 0; j < n; ++j) dG[j] += dy[j] * xhat[j];
                if (dB)
                    for (int j = 0; j < n; ++j) dB[j] += dy[j];
                if (dX) {
                    double mean_g = 0.0, mean_gx = 0.0;
                    for (int j = 0; j < n; ++j) {
                        double gdy = dy[j] * gn->value[j];
                        mean_g += gdy;
                        mean_gx += gdy * xhat[j];
                    }
                    mean_g /= n;
                    mean_gx /= n;
                    for (int j = 0; j < n; ++j) {
                        double gdy = dy[j] * gn->value[j];
                        dX[i * n + j] += (gdy - mean_g - xhat[j] * mean_gx) * inv_std[i];
                    }
                }
            }
        };
        return {this, out};
    }

    // ---- fused layers ---------------------------------------------------

    // Scaled dot-product multi-head self-attention core. q/k/v are already
    // projected, [m x d] with m a multiple of `block`; attention runs within
    // each block independently (a block is one clip's frame sequence).
    Tensor attention(Tensor q, Tensor k, Tensor v, int heads, int block) {
        check_same_shape("attention", q, k);
        check_same_shape("attention", q, v);
        check_rank("attention", q, 2);
        int m = q.shape()[0], d = q.shape()[1];
        if (block <= 0 || m % block != 0)
            shape_fail("attention", "rows ", m, " not divisible by block ", block);
        if (heads <= 0 || d % heads != 0)
            shape_fail("attention", "model dim ", d, " not divisible by heads ", heads);
        int n = block, g = m / block, dh = d / heads;
        double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

        Node* out = new_node(q.shape());
        out->value.assign(q.value().size(), 0.0);
        // attention weights cached per (group, head): g*heads matrices n x n
        auto attn = std::make_shared<Vec>(static_cast<size_t>(g) * heads * n * n, 0.0);
        const double* Q = q.value().data();
        const double* K = k.value().data();
        const double* V = v.value().data();
        for (int gi = 0; gi < g; ++gi) {
            int row0 = gi * n;
            for (int h = 0; h < heads; ++h) {
                int c0 = h * dh;
                double* A = attn->data() + (static_cast<size_t>(gi) * heads + h) * n * n;
                for (int i = 0; i < n; ++i) {
                    const double* qi = Q + static_cast<size_t>(row0 + i) * d + c0;
                    double* arow = A + static_cast<size_t>(i) * n;
                    double mx = -1e300;
                    for (int j = 0; j < n; ++j) {
                        const double* kj = K + static_cast<size_t>(row0 + j) * d + c0;
                        double s = 0.0;
                        for (int t = 0; t < dh; ++t) s += qi[t] * kj[t];
                        arow[j] = s * inv_sqrt;
                        if (arow[j] > mx) mx = arow[j];
                    }
                    double z = 0.0;
                    for (int j = 0; j < n; ++j) {
                        arow[j] = std::exp(arow[j] - mx);
                        z += arow[j];
                    }
                    for (int j = 0; j < n; ++j) arow[j] /= z;
                    double* oi = out->value.data() + static_cast<size_t>(row0 + i) * d + c0;
                    for (int j = 0; j < n; ++j) {
                        const double* vj = V + static_cast<size_t>(row0 + j) * d + c0;
                        double a = arow[j];
                        for (int t = 0; t < dh; ++t) oi[t] += a * vj[t];
                    }
                }
            }
        }
        finish(out, {q.node(), k.node(), v.node()});
        Node *qn = q.node(), *kn = k.node(), *vn = v.node();
        out->backward_fn = [qn, kn, vn, out, attn, g, n, d, dh, heads, inv_sqrt]() {
            bool need_q = qn->requires_grad, need_k = kn->requires_grad,
                 need_v = vn->requires_grad;
            if (!(need_q || need_k || need_v)) return;
            double* dQ = need_q ? qn->gbuf() : nullptr;
            double* dK = need_k ? kn->gbuf() : nullptr;
            double* dV = need_v ? vn->gbuf() : nullptr;
            const double* dO = out->grad.data();
            Vec dA(static_cast<size_t>(n) * n), dS(static_cast<size_t>(n) * n);
            for (int gi = 0; gi < g; ++gi) {
                int row0 = gi * n;
                for (int h = 0; h < heads; ++h) {
                    int c0 = h * dh;
                    const double* A = attn->data() + (static_cast<size_t>(gi) * heads + h) * n * n;
                    // dA = dO * V^T ; dV += A^T * dO
                    for (int i = 0; i < n; ++i) {
                        const double* doi = dO + static_cast<size_t>(row0 + i) * d + c0;
                        for (int j = 0; j < n; ++j) {
                            const double* vj = vn->value.data() + static_cast<size_t>(row0 + j) * d + c0;
                            double s = 0.0;
                            for (int t = 0; t < dh; ++t) s += doi[t] * vj[t];
                            dA[i * n + j] = s;
                            if (need_v) {
                                double a = A[i * n + j];
                                double* dvj = dV + static_cast<size_t>(row0 + j) * d + c0;
                                for (int t = 0; t < dh; ++t) dvj[t] += a * doi[t];
                            }
                        }
                    }
                    // softmax backward per row, then scale
                    for (int i = 0; i < n; ++i) {
                        double dot = 0.0;
                        for (int j = 0; j < n; ++j) dot += dA[i * n + j] * A[i * n + j];
                        for (int j = 0; j < n; ++j)
                            dS[i * n + j] = A[i * n + j] * (dA[i * n + j] - dot) * inv_sqrt;
                    }
                    if (need_q)
                        for (int i = 0; i < n; ++i) {
                            double* dqi = dQ + static_cast<size_t>(row0 + i) * d + c0;
                            for (int j = 0; j < n; ++j) {
                                const double* kj =
                                    kn->value.data() + static_cast<size_t>(row0 + j) * d + c0;
                                double s = dS[i * n + j];
                                for (int t = 0; t < dh; ++t) dqi[t] += s * kj[t];
                            }
                        }
                    if (need_k)
                        for (int j = 0; j < n; ++j) {
                            double* dkj = dK + static_cast<size_t>(row0 + j) * d + c0;
                            for (int i = 0; i < n; ++i) {
                                const double* qi =
                                    qn->value.data() + static_cast<size_t>(row0 + i) * d + c0;
                                double s = dS[i * n + j];
                                for (int t = 0; t < dh; ++t) dkj[t] += s * qi[t];
                            }
                        }
                }
            }
        };
        return {this, out};
    }

    // One LSTM cell step. Gate layout in wx/wh/bias columns: [i | f | g | o].
    // Returns [b x 2*hid] = next hidden || next cell; slice_cols splits it.
    Tensor lstm_cell(Tensor x, Tensor h, Tensor c, Tensor wx, Tensor wh, Tensor bias) {
        check_rank("lstm_cell", x, 2);
        check_rank("lstm_cell", h, 2);
        check_rank("lstm_cell", c, 2);
        check_rank("lstm_cell", wx, 2);
        check_rank("lstm_cell", wh, 2);
        int b = x.shape()[0], in = x.shape()[1], hid = h.shape()[1];
        if (h.shape()[0] != b || c.shape()[0] != b || c.shape()[1] != hid)
            shape_fail("lstm_cell", "state shapes ", shape_str(h.shape()), " / ",
                       shape_str(c.shape()), " do not match batch ", b, " hid ", hid);
        if (wx.shape()[0] != in || wx.shape()[1] != 4 * hid || wh.shape()[0] != hid ||
            wh.shape()[1] != 4 * hid || static_cast<int>(bias.value().size()) != 4 * hid)
            shape_fail("lstm_cell", "weight shapes ", shape_str(wx.shape()), " / ",
                       shape_str(wh.shape()), " vs in ", in, " hid ", hid);

        size_t bz = static_cast<size_t>(b);
        auto cache = std::make_shared<Vec>(bz * hid * 5);  // i,f,g,o,tanh(c')
        Node* out = new_node({b, 2 * hid});
        out->value.assign(bz * 2 * hid, 0.0);

        Vec z(bz * 4 * hid);
        const double* X = x.value().data();
        const double* H = h.value().data();
        const double* Wx = wx.value().data();
        const double* Wh = wh.value().data();
        const double* B = bias.value().data();
        for (int r = 0; r < b; ++r)
            for (int j = 0; j < 4 * hid; ++j) z[r * 4 * hid + j] = B[j];
        gemm_acc(X, Wx, z.data(), b, in, 4 * hid);
        gemm_acc(H, Wh, z.data(), b, hid, 4 * hid);

        double* ig = cache->data();
        double* fg = ig + bz * hid;
        double* gg = fg + bz * hid;
        double* og = gg + bz * hid;
        double* tc = og + bz * hid;
        const double* C = c.value().data();
        for (int r = 0; r < b; ++r)
            for (int j = 0; j < hid; ++j) {
                size_t e = static_cast<size_t>(r) * hid + j;
                const double* zr = z.data() + static_cast<size_t>(r) * 4 * hid;
                ig[e] = sigmoid(zr[j]);
                fg[e] = sigmoid(zr[hid + j]);
                gg[e] = std::tanh(zr[2 * hid + j]);
                og[e] = sigmoid(zr[3 * hid + j]);
                double cnew = fg[e] * C[e] + ig[e] * gg[e];
                tc[e] = std::tanh(cnew);
                out->value[static_cast<size_t>(r) * 2 * hid + j] = og[e] * tc[e];
                out->value[static_cast<size_t>(r) * 2 * hid + hid + j] = cnew;
            }

        finish(out, {x.node(), h.node(), c.node(), wx.node(), wh.node(), bias.node()});
        Node *xn = x.node(), *hn = h.node(), *cn = c.node(), *wxn = wx.node(),
             *whn = wh.node(), *bn = bias.node();
        out->backward_fn = [xn, hn, cn, wxn, whn, bn, out, cache, b, in, hid]() {
            size_t bz = static_cast<size_t>(b);
            const double* ig = cache->data();
            const double* fg = ig + bz * hid;
            const double* gg = fg + bz * hid;
            const double* og = gg + bz * hid;
            const double* tc = og + bz * hid;
            Vec dz(bz * 4 * hid, 0.0);
            double* dC = cn->requires_grad ? cn->gbuf() : nullptr;
            for (int r = 0; r < b; ++r)
                for (int j = 0; j < hid; ++j) {
                    size_t e = static_cast<size_t>(r) * hid + j;
                    double dh = out->grad[static_cast<size_t>(r) * 2 * hid + j];
                    double dc = out->grad[static_cast<size_t>(r) * 2 * hid + hid + j];
                    double dct = dc + dh * og[e] * (1.0 - tc[e] * tc[e]);
                    double dog = dh * tc[e];
                    double dig = dct * gg[e];
                    double dfg = dct * cn->value[e];
                    double dgg = dct * ig[e];
                    if (dC) dC[e] += dct * fg[e];
                    double* dzr = dz.data() + static_cast<size_t>(r) * 4 * hid;
                    dzr[j] = dig * ig[e] * (1.0 - ig[e]);
                    dzr[hid + j] = dfg * fg[e] * (1.0 - fg[e]);
                    dzr[2 * hid + j] = dgg * (1.0 - gg[e] * gg[e]);
                    dzr[3 * hid + j] = dog * og[e] * (1.0 - og[e]);
                }
            if (xn->requires_grad)
                gemm_acc_bt(dz.data(), wxn->value.data(), xn->gbuf(), b, 4 * hid, in);
            if (hn->requires_grad)
                gemm_acc_bt(dz.data(), whn->value.data(), hn->gbuf(), b, 4 * hid, hid);
            if (wxn->requires_grad)
                gemm_acc_at(xn->value.data(), dz.data(), wxn->gbuf(), b, in, 4 * hid);
            if (whn->requires_grad)
                gemm_acc_at(hn->value.data(), dz.data(), whn->gbuf(), b, hid, 4 * hid);
            if (bn->requires_grad) {
                double* dB = bn->gbuf();
                for (int r = 0; r < b; ++r)
                    for (int j = 0; j < 4 * hid; ++j) dB[j] += dz[r * 4 * hid + j];
            }
        };
        return {this, out};
    }

    // ---- loss primitives ------------------------------------------------

    // sum_i weights[i] * (-logp[i, targets[i]]). Weights encode batch/mask
    // normalization, so the node output is already the reduced loss.
    Tensor weighted_nll(Tensor logp, const std::vector<int>& targets, const Vec& weights) {
        check_rank("weighted_nll", logp, 2);
        int m = logp.shape()[0], k = logp.shape()[1];
        if (static_cast<int>(targets.size()) != m || weights.size() != targets.size())
            shape_fail("weighted_nll", "rows ", m, " vs targets ", targets.size(),
                       " vs weights ", weights.size());
        for (int t : targets)
            if (t < 0 || t >= k) shape_fail("weighted_nll", "target ", t, " out of range ", k);
        Node* out = new_node({1});
        double s = 0.0;
        for (int i = 0; i < m; ++i) s -= weights[i] * logp.value()[i * k + targets[i]];
        out->value = {s};
        finish(out, {logp.node()});
        Node* ln = logp.node();
        out->backward_fn = [ln, out, targets, weights, k]() {
            if (!ln->requires_grad) return;
            double* dL = ln->gbuf();
            for (size_t i = 0; i < targets.size(); ++i)
                dL[i * k + targets[i]] -= weights[i] * out->grad[0];
        };
        return {this, out};
    }

    // sum_i weights[i] * KL(p_i || q_i) over rows; probabilities clamped at
    // kProbFloor before the logs.
    static constexpr double kProbFloor = 1e-12;
    Tensor kl_rows(Tensor p, Tensor q, const Vec& weights) {
        check_same_shape("kl_rows", p, q);
        check_rank("kl_rows", p, 2);
        int m = p.shape()[0], k = p.shape()[1];
        if (static_cast<int>(weights.size()) != m)
            shape_fail("kl_rows", "rows ", m, " vs weights ", weights.size());
        Node* out = new_node({1});
        double s = 0.0;
        for (int i = 0; i < m; ++i) {
            double row = 0.0;
            for (int j = 0; j < k; ++j) {
                double pv = std::max(p.value()[i * k + j], kProbFloor);
                double qv = std::max(q.value()[i * k + j], kProbFloor);
                row += pv * (std::log(pv) - std::log(qv));
            }
            s += weights[i] * row;
        }
        out->value = {s};
        finish(out, {p.node(), q.node()});
        Node *pn = p.node(), *qn = q.node();
        out->backward_fn = [pn, qn, out, weights, m, k]() {
            double g0 = out->grad[0];
            double* dP = pn->requires_grad ? pn->gbuf() : nullptr;
            double* dQ = qn->requires_grad ? qn->gbuf() : nullptr;
            if (!dP && !dQ) return;
            for (int i = 0; i < m; ++i) {
                double w = weights[i] * g0;
                for (int j = 0; j < k; ++j) {
                    double praw = pn->value[i * k + j], qraw = qn->value[i * k + j];
                    double pv = std::max(praw, kProbFloor);
                    double qv = std::max(qraw, kProbFloor);
                    if (dP && praw > kProbFloor)
                        dP[i * k + j] += w * (std::log(pv) - std::log(qv) + 1.0);
                    if (dQ && qraw > kProbFloor) dQ[i * k + j] += w * (-pv / qv);
                }
            }
        };
        return {this, out};
    }

    // ---- backward -------------------------------------------------------

    // Reverse pass from a scalar loss. Node gradients are recomputed from
    // scratch on every call; parameter gradients accumulate across calls.
    void backward(Tensor loss) {
        require(loss.value().size() == 1, "backward",
                "loss must be scalar, got shape " + shape_str(loss.shape()));
        for (auto& n : nodes_) n->grad.clear();
        loss.node()->gbuf()[0] = 1.0;
        for (size_t i = nodes_.size(); i-- > 0;) {
            Node* n = nodes_[i].get();
            if (n->grad.empty() || !n->backward_fn || !n->requires_grad) continue;
            n->backward_fn();
        }
        for (auto& n : nodes_) {
            if (n->param && !n->grad.empty()) {
                for (size_t i = 0; i < n->grad.size(); ++i) n->param->grad[i] += n->grad[i];
            }
        }
    }

    size_t node_count() const { return nodes_.size(); }

private:
    std::vector<std::unique_ptr<Node>> nodes_;

    Node* new_node(Shape shape) {
        nodes_.push_back(std::make_unique<Node>());
        nodes_.back()->shape = std::move(shape);
        return nodes_.back().get();
    }

    static void finish(Node* out, std::initializer_list<Node*> parents) {
        bool rg = false;
        for (Node* p : parents) rg = rg || p->requires_grad;
        out->requires_grad = rg;
    }

    static void check_rank(const char* op, const Tensor& t, size_t rank) {
        if (t.shape().size() != rank)
            shape_fail(op, "expected rank ", rank, ", got ", shape_str(t.shape()));
    }

    static void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
        if (a.shape() != b.shape())
            shape_fail(op, "shape mismatch ", shape_str(a.shape()), " vs ",
                       shape_str(b.shape()));
    }

    static std::pair<int, int> rows_cols(const char* op, const Tensor& t) {
        if (t.shape().empty()) shape_fail(op, "rank-0 tensor");
        int cols = t.shape().back();
        int rows = static_cast<int>(numel(t.shape()) / cols);
        return {rows, cols};
    }

    static double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

    static void softmax_rows(const double* x, double* out, int rows, int cols, bool log_form) {
        for (int r = 0; r < rows; ++r) {
            const double* xr = x + static_cast<size_t>(r) * cols;
            double* yr = out + static_cast<size_t>(r) * cols;
            double mx = xr[0];
            for (int j = 1; j < cols; ++j) mx = std::max(mx, xr[j]);
            double z = 0.0;
            for (int j = 0; j < cols; ++j) z += std::exp(xr[j] - mx);
            if (log_form) {
                double lz = std::log(z);
                for (int j = 0; j < cols; ++j) yr[j] = xr[j] - mx - lz;
            } else {
                for (int j = 0; j < cols; ++j) yr[j] = std::exp(xr[j] - mx) / z;
            }
        }
    }

    // C[m x n] += A[m x k] * B[k x n]
    static void gemm_acc(const double* A, const double* B, double* C, int m, int k, int n) {
        for (int i = 0; i < m; ++i)
            for (int p = 0; p < k; ++p) {
                double av = A[static_cast<size_t>(i) * k + p];
                if (av == 0.0) continue;
                const double* Brow = B + static_cast<size_t>(p) * n;
                double* Crow = C + static_cast<size_t>(i) * n;
                for (int j = 0; j < n; ++j) Crow[j] += av * Brow[j];
            }
    }

    // C[m x n] += A[m x k] * B^T, B stored [n x k]
    static void gemm_acc_bt(const double* A, const double* B, double* C, int m, int k, int n) {
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) {
                const double* Arow = A + static_cast<size_t>(i) * k;
                const double* Brow = B + static_cast<size_t>(j) * k;
                double s = 0.0;
                for (int p = 0; p < k; ++p) s += Arow[p] * Brow[p];
                C[static_cast<size_t>(i) * n + j] += s;
            }
    }

    // C[k x n] += A^T * B, A stored [m x k], B stored [m x n]
    static void gemm_acc_at(const double* A, const double* B, double* C, int m, int k, int n) {
        for (int i = 0; i < m; ++i)
            for (int p = 0; p < k; ++p) {
                double av = A[static_cast<size_t>(i) * k + p];
                if (av == 0.0) continue;
                const double* Brow = B + static_cast<size_t>(i) * n;
                double* Crow = C + static_cast<size_t>(p) * n;
                for (int j = 0; j < n; ++j) Crow[j] += av * Brow[j];
            }
    }
};

}  // namespace gpn
