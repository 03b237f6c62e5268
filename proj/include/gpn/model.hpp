// SPDX-License-Identifier: Apache-2.0
//
// Full generator-pretester model: encoder -> answer selector -> question
// decoder -> pretester, with one scalar loss node per component and the
// composed total for backward.

#pragma once

#include <memory>
#include <optional>
#include <vector>

#include "gpn/config.hpp"
#include "gpn/encoder.hpp"
#include "gpn/jqag.hpp"
#include "gpn/pretester.hpp"
#include "gpn/synthdata.hpp"
#include "gpn/tensor.hpp"

namespace gpn {

class GpnModel {
public:
    GpnModel(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
        cfg_.validate();
        Rng rng = Rng(seed).fork(stream_salt("init"));
        encoder_ = std::make_unique<Encoder>(cfg_, registry_, rng);
        selector_ = std::make_unique<AnswerSelector>(cfg_, registry_, rng);
        decoder_ = std::make_unique<QuestionDecoder>(cfg_, registry_, rng);
        if (cfg_.enable_pretester)
            pretester_ = std::make_unique<Pretester>(cfg_, registry_, rng);
    }

    // Submodules keep pointers into cfg_, so the model stays put.
    GpnModel(const GpnModel&) = delete;
    GpnModel& operator=(const GpnModel&) = delete;

    const ModelConfig& config() const { return cfg_; }
    ParamRegistry& params() { return registry_; }
    const ParamRegistry& params() const { return registry_; }
    const Encoder& encoder() const { return *encoder_; }
    const AnswerSelector& selector() const { return *selector_; }
    const QuestionDecoder& decoder() const { return *decoder_; }

    struct BatchInputs {
        Tensor frame;   // [b*frames x frame_dim]
        Tensor object;  // [b*frames x object_dim]
        std::vector<int> types;
        std::vector<int> answers;
        std::vector<std::vector<int>> questions;
        int batch = 0;
    };

    BatchInputs gather_batch(Graph& g, const Corpus& corpus,
                             const std::vector<int>& example_indices) const {
        int b = static_cast<int>(example_indices.size());
        require(b > 0, "gather_batch", "empty batch");
        size_t frame_row = static_cast<size_t>(cfg_.frames) * cfg_.frame_dim;
        size_t object_row = static_cast<size_t>(cfg_.frames) * cfg_.object_dim;
        Vec frames(static_cast<size_t>(b) * frame_row);
        Vec objects(static_cast<size_t>(b) * object_row);
        BatchInputs in;
        in.batch = b;
        for (int i = 0; i < b; ++i) {
            const SynthExample& e = corpus.examples.at(static_cast<size_t>(example_indices[i]));
            const VideoFeatures& vf = corpus.features_for(e.scene_id);
            std::copy(vf.frame_features.begin(), vf.frame_features.end(),
                      frames.begin() + static_cast<size_t>(i) * frame_row);
            std::copy(vf.object_features.begin(), vf.object_features.end(),
                      objects.begin() + static_cast<size_t>(i) * object_row);
            in.types.push_back(e.question_type);
            in.answers.push_back(e.a_tgt);
            in.questions.push_back(e.q_tgt);
        }
        in.frame = g.leaf(std::move(frames), {b * cfg_.frames, cfg_.frame_dim});
        in.object = g.leaf(std::move(objects), {b * cfg_.frames, cfg_.object_dim});
        return in;
    }

    struct ForwardOutputs {
        Tensor v_final;
        Tensor ap_probs;
        Tensor q_emb;
        Tensor aq_probs;
        Tensor l_qg, l_ap, l_ans, l_c, l_tc, l_total;
        double lambda_c = 0.0, lambda_a = 0.0;
        bool has_pretester = false;

        LossReport report() const {
            LossReport r;
            r.l_qg = l_qg.scalar();
            r.l_ap = l_ap.scalar();
            r.perplexity = std::exp(r.l_qg);
            r.l_total = l_total.scalar();
            r.has_pretester = has_pretester;
            if (has_pretester) {
                r.l_ans = l_ans.scalar();
                r.l_c = l_c.scalar();
                r.l_tc = l_tc.scalar();
                r.lambda_c = lambda_c;
                r.lambda_a = lambda_a;
            }
            return r;
        }
    };

    // Teacher-forced training pass over a batch of corpus examples.
    ForwardOutputs train_forward(Graph& g, const Corpus& corpus,
                                 const std::vector<int>& example_indices,
                                 bool trainable = true) const {
        BatchInputs in = gather_batch(g, corpus, example_indices);
        return forward_from_inputs(g, in, trainable);
    }

    ForwardOutputs forward_from_inputs(Graph& g, const BatchInputs& in,
                                       bool trainable = true) const {
        ForwardOutputs out;
        out.v_final = encoder_->forward(g, in.frame, in.object, in.types, trainable);
        Tensor ap_logits = selector_->propose_logits(g, out.v_final, trainable);
        out.ap_probs = g.softmax(ap_logits);
        out.l_ap = mean_cross_entropy(g, ap_logits, in.answers);

        auto state = decoder_->init_state(g, out.v_final, out.ap_probs, trainable);
        TokenBatch tb = TokenBatch::from_sequences(in.questions);
        auto tf = decoder_->teacher_forced(g, state, tb, trainable);
        out.l_qg = tf.l_qg;
        out.q_emb = tf.q_emb;

        if (cfg_.enable_pretester) {
            out.has_pretester = true;
            out.lambda_c = cfg_.lambda_c;
            out.lambda_a = cfg_.lambda_a;
            Tensor aq_logits = pretester_->answer_logits(g, out.q_emb, trainable);
            out.aq_probs = g.softmax(aq_logits);
            out.l_ans = mean_cross_entropy(g, aq_logits, in.answers);
            Tensor proposal =
                cfg_.detach_proposal ? g.detach(out.ap_probs) : out.ap_probs;
            Tensor leading = cfg_.kl_direction == KlDirection::kPretesterToProposal
                                 ? out.aq_probs
                                 : proposal;
            Tensor trailing = cfg_.kl_direction == KlDirection::kPretesterToProposal
                                  ? proposal
                                  : out.aq_probs;
            out.l_c = consistency_loss(g, leading, trailing);
            out.l_tc = target_consistency_loss(g, out.l_c, out.l_ans, cfg_.lambda_c,
                                               cfg_.lambda_a);
        }
        out.l_total = total_loss(g, out.l_tc, out.l_qg, out.l_ap);
        return out;
    }

    struct Generated {
        std::int64_t scene_id = 0;
        int question_type = 0;
        std::vector<int> question;  // EOS-terminated token ids
        int answer_id = 0;
        Vec answer_probs;
        double proposal_entropy = 0.0;
    };

    // Greedy QA-pair generation for one scene/type. No gradients.
    Generated generate(const Corpus& corpus, std::int64_t scene_id, int question_type,
                       int max_len = 0) const {
        Graph g;
        const VideoFeatures& vf = corpus.features_for(scene_id);
        Tensor frame = g.leaf(vf.frame_features, {cfg_.frames, cfg_.frame_dim});
        Tensor object = g.leaf(vf.object_features, {cfg_.frames, cfg_.object_dim});
        Tensor v_final = encoder_->forward(g, frame, object, {question_type}, false);
        Tensor ap = g.softmax(selector_->propose_logits(g, v_final, false));

        Generated res;
        res.scene_id = scene_id;
        res.question_type = question_type;
        res.answer_probs = ap.value();
        res.answer_id = select_answer(res.answer_probs);
        for (double p : res.answer_probs)
            if (p > 0.0) res.proposal_entropy -= p * std::log(p);

        auto state = decoder_->init_state(g, v_final, ap, false);
        auto greedy =
            decoder_->greedy(g, state, max_len > 0 ? max_len : cfg_.max_question_len);
        res.question = greedy.tokens[0];
        return res;
    }

    // Proposal-head answer for one scene/type (no decoding).
    int propose_answer_id(const Corpus& corpus, std::int64_t scene_id, int question_type) const {
        Graph g;
        const VideoFeatures& vf = corpus.features_for(scene_id);
        Tensor frame = g.leaf(vf.frame_features, {cfg_.frames, cfg_.frame_dim});
        Tensor object = g.leaf(vf.object_features, {cfg_.frames, cfg_.object_dim});
        Tensor v_final = encoder_->forward(g, frame, object, {question_type}, false);
        Tensor ap = g.softmax(selector_->propose_logits(g, v_final, false));
        return select_answer(ap.value());
    }

private:
    ModelConfig cfg_;
    ParamRegistry registry_;
    std::unique_ptr<Encoder> encoder_;
    std::unique_ptr<AnswerSelector> selector_;
    std::unique_ptr<QuestionDecoder> decoder_;
    std::unique_ptr<Pretester> pretester_;
};

}  // namespace gpn
