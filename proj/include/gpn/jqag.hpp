// SPDX-License-Identifier: Apache-2.0
//
// Joint question-answer generation: the answer selector proposes a
// distribution over the closed answer set from the clip embedding, and the
// two-layer LSTM decoder emits the question conditioned on the clip
// embedding gated by the embedded answer proposal.

#pragma once

#include <string>
#include <vector>

#include "gpn/config.hpp"
#include "gpn/encoder.hpp"
#include "gpn/tensor.hpp"
#include "gpn/vocab.hpp"

namespace gpn {

// Lowest index wins ties.
inline int select_answer(const Vec& probs) {
    require(!probs.empty(), "select_answer", "empty distribution");
    int best = 0;
    for (size_t i = 1; i < probs.size(); ++i)
        if (probs[i] > probs[best]) best = static_cast<int>(i);
    return best;
}

// Mean cross-entropy over the batch from raw logits.
inline Tensor mean_cross_entropy(Graph& g, Tensor logits, const std::vector<int>& targets) {
    Vec w(targets.size(), 1.0 / static_cast<double>(targets.size()));
    return g.weighted_nll(g.log_softmax(logits), targets, w);
}

class AnswerSelector {
public:
    AnswerSelector(const ModelConfig& cfg, ParamRegistry& reg, Rng& rng) : cfg_(&cfg) {
        int d = cfg.d_model;
        w1_ = reg.add("jqag.w_ag1", {d, d});
        init_xavier_uniform(*w1_, rng, d, d);
        w2_ = reg.add("jqag.w_ag2", {d, cfg.answer_size});
        init_xavier_uniform(*w2_, rng, d, cfg.answer_size);
        if (cfg.use_projection_bias) {
            b1_ = reg.add("jqag.b_ag1", {d});
            b2_ = reg.add("jqag.b_ag2", {cfg.answer_size});
        }
    }

    Tensor propose_logits(Graph& g, Tensor v_final, bool trainable = true) const {
        Tensor hidden = g.relu(linear(g, v_final, *w1_, b1_, trainable));
        return linear(g, hidden, *w2_, b2_, trainable);
    }

private:
    const ModelConfig* cfg_;
    Parameter *w1_ = nullptr, *b1_ = nullptr, *w2_ = nullptr, *b2_ = nullptr;
};

// Padded teacher-forcing batch. Sequences arrive EOS-terminated without BOS;
// inputs are the BOS-shifted copies, PAD fills beyond each length.
struct TokenBatch {
    int batch = 0;
    int max_len = 0;
    std::vector<int> inputs;   // [batch x max_len]
    std::vector<int> targets;  // [batch x max_len]
    std::vector<int> lengths;

    static TokenBatch from_sequences(const std::vector<std::vector<int>>& qs) {
        TokenBatch tb;
        tb.batch = static_cast<int>(qs.size());
        require(tb.batch > 0, "token_batch", "empty batch");
        for (const auto& q : qs) {
            require(!q.empty(), "token_batch", "empty target sequence");
            tb.max_len = std::max(tb.max_len, static_cast<int>(q.size()));
        }
        tb.inputs.assign(static_cast<size_t>(tb.batch) * tb.max_len, kPad);
        tb.targets.assign(static_cast<size_t>(tb.batch) * tb.max_len, kPad);
        tb.lengths.resize(qs.size());
        for (int i = 0; i < tb.batch; ++i) {
            const auto& q = qs[static_cast<size_t>(i)];
            tb.lengths[i] = static_cast<int>(q.size());
            tb.inputs[static_cast<size_t>(i) * tb.max_len] = kBos;
            for (size_t t = 0; t < q.size(); ++t) {
                tb.targets[static_cast<size_t>(i) * tb.max_len + t] = q[t];
                if (t + 1 < q.size())
                    tb.inputs[static_cast<size_t>(i) * tb.max_len + t + 1] = q[t];
            }
        }
        return tb;
    }

    std::vector<int> step_inputs(int t) const {
        std::vector<int> out(static_cast<size_t>(batch));
        for (int i = 0; i < batch; ++i) out[i] = inputs[static_cast<size_t>(i) * max_len + t];
        return out;
    }

    std::vector<int> step_targets(int t) const {
        std::vector<int> out(static_cast<size_t>(batch));
        for (int i = 0; i < batch; ++i) out[i] = targets[static_cast<size_t>(i) * max_len + t];
        return out;
    }
};

class QuestionDecoder {
public:
    struct State {
        std::vector<Tensor> h;  // per layer, [b x d]
        std::vector<Tensor> c;
        int batch = 0;
    };

    QuestionDecoder(const ModelConfig& cfg, ParamRegistry& reg, Rng& rng) : cfg_(&cfg) {
        int d = cfg.d_model;
        word_emb_ = reg.add("jqag.word_emb", {cfg.vocab_size, d});
        init_xavier_uniform(*word_emb_, rng, cfg.vocab_size, d);
        w_ae_ = reg.add("jqag.w_ae", {cfg.answer_size, d});
        init_xavier_uniform(*w_ae_, rng, cfg.answer_size, d);
        layers_.resize(static_cast<size_t>(cfg.lstm_layers));
        for (int l = 0; l < cfg.lstm_layers; ++l) {
            std::string pre = "jqag.lstm" + std::to_string(l) + ".";
            auto& L = layers_[static_cast<size_t>(l)];
            L.wx = reg.add(pre + "wx", {d, 4 * d});
            init_xavier_uniform(*L.wx, rng, d, 4 * d);
            L.wh = reg.add(pre + "wh", {d, 4 * d});
            init_xavier_uniform(*L.wh, rng, d, 4 * d);
            L.bias = reg.add(pre + "bias", {4 * d});
        }
        w_out_ = reg.add("jqag.w_out", {d, cfg.vocab_size});
        init_xavier_uniform(*w_out_, rng, d, cfg.vocab_size);
        if (cfg.use_projection_bias) b_out_ = reg.add("jqag.b_out", {cfg.vocab_size});
    }

    // H_0 = clip embedding gated by the embedded soft answer proposal. The
    // full distribution goes through the embedding, keeping the path from
    // question loss back into the selector differentiable.
    State init_state(Graph& g, Tensor v_final, Tensor answer_proposal,
                     bool trainable = true) const {
        int b = v_final.shape()[0], d = cfg_->d_model;
        Tensor answer_code = g.matmul(answer_proposal, g.param(*w_ae_, trainable));
        Tensor h0 = g.hadamard(v_final, answer_code);
        State st;
        st.batch = b;
        for (int l = 0; l < cfg_->lstm_layers; ++l) {
            bool seeded = l == 0 || cfg_->h0_both_layers;
            st.h.push_back(seeded ? h0
                                  : g.constant(Vec(static_cast<size_t>(b) * d, 0.0), {b, d}));
            st.c.push_back(g.constant(Vec(static_cast<size_t>(b) * d, 0.0), {b, d}));
        }
        return st;
    }

    // One decode step; returns output logits [b x |V|] and the next state.
    std::pair<Tensor, State> step(Graph& g, const std::vector<int>& prev_tokens,
                                  const State& state, bool trainable = true) const {
        require(static_cast<int>(prev_tokens.size()) == state.batch, "decode_step",
                "token count does not match state batch");
        int d = cfg_->d_model;
        Tensor x = g.embedding(g.param(*word_emb_, trainable), prev_tokens);
        State next;
        next.batch = state.batch;
        for (size_t l = 0; l < layers_.size(); ++l) {
            const auto& L = layers_[l];
            Tensor packed = g.lstm_cell(x, state.h[l], state.c[l], g.param(*L.wx, trainable),
                                        g.param(*L.wh, trainable), g.param(*L.bias, trainable));
            Tensor h = g.slice_cols(packed, 0, d);
            Tensor c = g.slice_cols(packed, d, 2 * d);
            next.h.push_back(h);
            next.c.push_back(c);
            x = h;
        }
        Tensor logits = linear(g, x, *w_out_, b_out_, trainable);
        return {logits, std::move(next)};
    }

    struct TeacherForced {
        Tensor l_qg;                      // scalar: mean over examples of
                                          // per-token mean NLL
        Tensor q_emb;                     // [b x d] top hidden at each
                                          // example's final step
        std::vector<Tensor> step_logits;  // max_len entries of [b x |V|]
    };

    TeacherForced teacher_forced(Graph& g, const State& state0, const TokenBatch& tb,
                                 bool trainable = true) const {
        int b = tb.batch;
        State st = state0;
        TeacherForced out;
        Tensor l_qg;
        Tensor q_emb;
        for (int t = 0; t < tb.max_len; ++t) {
            auto [logits, next] = step(g, tb.step_inputs(t), st, trainable);
            st = std::move(next);
            out.step_logits.push_back(logits);
            Vec weights(static_cast<size_t>(b), 0.0);
            Vec last_mask(static_cast<size_t>(b), 0.0);
            bool any_last = false;
            for (int i = 0; i < b; ++i) {
                if (t < tb.lengths[i]) weights[i] = 1.0 / (static_cast<double>(b) * tb.lengths[i]);
                if (t == tb.lengths[i] - 1) {
                    last_mask[i] = 1.0;
                    any_last = true;
                }
            }
            Tensor nll = g.weighted_nll(g.log_softmax(logits), tb.step_targets(t), weights);
            l_qg = l_qg.valid() ? g.add(l_qg, nll) : nll;
            if (any_last) {
                Tensor picked = g.mul_colvec(st.h.back(), g.constant(last_mask, {b}));
                q_emb = q_emb.valid() ? g.add(q_emb, picked) : picked;
            }
        }
        out.l_qg = l_qg;
        out.q_emb = q_emb;
        return out;
    }

    struct GreedyResult {
        std::vector<std::vector<int>> tokens;  // EOS-terminated unless capped
        Vec q_emb;                             // [b x d] copied at emission of the final token
    };

    GreedyResult greedy(Graph& g, const State& state0, int max_len) const {
        require(max_len >= 1, "greedy", "max_len must be >= 1");
        int b = state0.batch, d = cfg_->d_model;
        GreedyResult res;
        res.tokens.assign(static_cast<size_t>(b), {});
        res.q_emb.assign(static_cast<size_t>(b) * d, 0.0);
        std::vector<int> prev(static_cast<size_t>(b), kBos);
        std::vector<bool> done(static_cast<size_t>(b), false);
        State st = state0;
        for (int t = 0; t < max_len; ++t) {
            auto [logits, next] = step(g, prev, st, /*trainable=*/false);
            st = std::move(next);
            const Vec& lv = logits.value();
            const Vec& hv = st.h.back().value();
            bool all_done = true;
            for (int i = 0; i < b; ++i) {
                if (done[i]) continue;
                int best = 0;
                const double* row = lv.data() + static_cast<size_t>(i) * cfg_->vocab_size;
                for (int j = 1; j < cfg_->vocab_size; ++j)
                    if (row[j] > row[best]) best = j;
                res.tokens[static_cast<size_t>(i)].push_back(best);
                prev[i] = best;
                if (best == kEos || t == max_len - 1) {
                    done[i] = true;
                    std::copy(hv.begin() + static_cast<size_t>(i) * d,
                              hv.begin() + static_cast<size_t>(i + 1) * d,
                              res.q_emb.begin() + static_cast<size_t>(i) * d);
                }
                all_done = all_done && done[i];
            }
            if (all_done) break;
        }
        return res;
    }

private:
    struct LstmLayer {
        Parameter *wx = nullptr, *wh = nullptr, *bias = nullptr;
    };

    const ModelConfig* cfg_;
    Parameter* word_emb_ = nullptr;
    Parameter* w_ae_ = nullptr;
    std::vector<LstmLayer> layers_;
    Parameter* w_out_ = nullptr;
    Parameter* b_out_ = nullptr;
};

}  // namespace gpn
