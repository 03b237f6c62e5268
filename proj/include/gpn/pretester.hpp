// SPDX-License-Identifier: Apache-2.0
//
// Pretester: answer the generated question from its embedding, then apply
// the target consistency loss against both the gold answer and the answer
// proposal, and compose the total training loss.

#pragma once

#include <cmath>
#include <optional>
#include <string>

#include <json.hpp>

#include "gpn/config.hpp"
#include "gpn/encoder.hpp"
#include "gpn/tensor.hpp"

namespace gpn {

class Pretester {
public:
    Pretester(const ModelConfig& cfg, ParamRegistry& reg, Rng& rng) {
        int d = cfg.d_model;
        w1_ = reg.add("pt.w_al1", {d, d});
        init_xavier_uniform(*w1_, rng, d, d);
        w2_ = reg.add("pt.w_al2", {d, cfg.answer_size});
        init_xavier_uniform(*w2_, rng, d, cfg.answer_size);
        if (cfg.use_projection_bias) {
            b1_ = reg.add("pt.b_al1", {d});
            b2_ = reg.add("pt.b_al2", {cfg.answer_size});
        }
    }

    // Answering layer on the question embedding -> answer-sheet logits.
    Tensor answer_logits(Graph& g, Tensor q_emb, bool trainable = true) const {
        Tensor hidden = g.relu(linear(g, q_emb, *w1_, b1_, trainable));
        return linear(g, hidden, *w2_, b2_, trainable);
    }

private:
    Parameter *w1_ = nullptr, *b1_ = nullptr, *w2_ = nullptr, *b2_ = nullptr;
};

// Batch-mean KL between row distributions; `leading` takes the first slot of
// the divergence.
inline Tensor consistency_loss(Graph& g, Tensor leading, Tensor trailing) {
    int rows = leading.shape()[0];
    Vec w(static_cast<size_t>(rows), 1.0 / rows);
    return g.kl_rows(leading, trailing, w);
}

// L_tc = lambda_c * L_c + lambda_a * L_ans, with the weights on the simplex.
inline Tensor target_consistency_loss(Graph& g, Tensor l_c, Tensor l_ans, double lambda_c,
                                      double lambda_a) {
    require(lambda_c >= 0.0 && lambda_a >= 0.0 && std::abs(lambda_c + lambda_a - 1.0) < 1e-12,
            "target_consistency_loss", "lambda_c + lambda_a must equal 1");
    return g.add(g.scale(l_c, lambda_c), g.scale(l_ans, lambda_a));
}

inline Tensor total_loss(Graph& g, Tensor l_tc, Tensor l_qg, Tensor l_ap) {
    if (l_tc.valid()) return g.add(g.add(l_tc, l_qg), l_ap);
    return g.add(l_qg, l_ap);
}

// The five components plus their exact composition. Pretester fields are
// absent when the module is ablated.
struct LossReport {
    double l_qg = 0.0;
    double l_ap = 0.0;
    double l_total = 0.0;
    double perplexity = 1.0;
    bool has_pretester = false;
    double l_ans = 0.0;
    double l_c = 0.0;
    double l_tc = 0.0;
    double lambda_c = 0.0;
    double lambda_a = 0.0;

    // Bitwise identities: the report must reproduce the graph's arithmetic.
    bool composition_exact() const {
        if (has_pretester) {
            if (l_tc != lambda_c * l_c + lambda_a * l_ans) return false;
            if (l_total != l_tc + l_qg + l_ap) return false;
        } else {
            if (l_total != l_qg + l_ap) return false;
        }
        return true;
    }

    bool finite() const {
        bool ok = is_finite(l_qg) && is_finite(l_ap) && is_finite(l_total);
        if (has_pretester) ok = ok && is_finite(l_ans) && is_finite(l_c) && is_finite(l_tc);
        return ok;
    }

    nlohmann::json to_json(std::int64_t step = -1) const {
        nlohmann::json j;
        if (step >= 0) j["step"] = step;
        j["l_qg"] = l_qg;
        j["l_ap"] = l_ap;
        if (has_pretester) {
            j["l_ans"] = l_ans;
            j["l_c"] = l_c;
            j["l_tc"] = l_tc;
        }
        j["l_total"] = l_total;
        j["perplexity"] = perplexity;
        return j;
    }
};

}  // namespace gpn
