// SPDX-License-Identifier: Apache-2.0
//
// Video encoder: fuse the frame and object streams with an elementwise
// product, gate by the question-type controller column, run the stacked
// multi-head self-attention layers over the frame axis, mean-pool and
// project twice to the clip embedding.

#pragma once

#include <string>
#include <vector>

#include "gpn/config.hpp"
#include "gpn/tensor.hpp"

namespace gpn {

// matmul plus optional bias; the bias parameter may be null.
inline Tensor linear(Graph& g, Tensor x, Parameter& w, Parameter* b, bool trainable) {
    Tensor out = g.matmul(x, g.param(w, trainable));
    if (b) out = g.add_rowvec(out, g.param(*b, trainable));
    return out;
}

class Encoder {
public:
    Encoder(const ModelConfig& cfg, ParamRegistry& reg, Rng& rng) : cfg_(&cfg) {
        int d = cfg.d_model;
        if (cfg.use_frame_features) {
            w_proj_ = reg.add("enc.w_proj", {cfg.frame_dim, d});
            init_xavier_uniform(*w_proj_, rng, cfg.frame_dim, d);
            if (cfg.use_projection_bias) b_proj_ = reg.add("enc.b_proj", {d});
        }
        if (cfg.use_object_features && cfg.needs_object_projection()) {
            w_oproj_ = reg.add("enc.w_oproj", {cfg.object_dim, d});
            init_xavier_uniform(*w_oproj_, rng, cfg.object_dim, d);
            if (cfg.use_projection_bias) b_oproj_ = reg.add("enc.b_oproj", {d});
        }
        if (cfg.enable_controller) {
            // The controller gates multiplicatively, so its columns start at
            // the neutral element instead of Xavier noise.
            controller_ = reg.add("enc.controller", {cfg.num_types, d});
            init_constant(*controller_, 1.0);
        }
        layers_.resize(static_cast<size_t>(cfg.sa_layers));
        for (int l = 0; l < cfg.sa_layers; ++l) {
            auto& L = layers_[static_cast<size_t>(l)];
            std::string pre = "enc.sa" + std::to_string(l) + ".";
            auto add_mat = [&](const char* tag) {
                Parameter* p = reg.add(pre + tag, {d, d});
                init_xavier_uniform(*p, rng, d, d);
                return p;
            };
            L.wq = add_mat("wq");
            L.wk = add_mat("wk");
            L.wv = add_mat("wv");
            L.wo = add_mat("wo");
            if (cfg.use_projection_bias) {
                // No key bias: a shared offset on every key cancels inside the
                // row softmax, leaving a parameter with an identically zero
                // gradient.
                L.bq = reg.add(pre + "bq", {d});
                L.bv = reg.add(pre + "bv", {d});
                L.bo = reg.add(pre + "bo", {d});
            }
            if (cfg.transformer_residual) {
                L.ln_gamma = reg.add(pre + "ln_gamma", {d});
                init_constant(*L.ln_gamma, 1.0);
                L.ln_beta = reg.add(pre + "ln_beta", {d});
            }
        }
        w_pool1_ = reg.add("enc.w_pool1", {d, d});
        init_xavier_uniform(*w_pool1_, rng, d, d);
        w_pool2_ = reg.add("enc.w_pool2", {d, d});
        init_xavier_uniform(*w_pool2_, rng, d, d);
        if (cfg.use_projection_bias) {
            b_pool1_ = reg.add("enc.b_pool1", {d});
            b_pool2_ = reg.add("enc.b_pool2", {d});
        }
    }

    // frame: [b*frames x frame_dim], object: [b*frames x object_dim].
    // Produces the fused per-frame sequence [b*frames x d].
    Tensor fuse_features(Graph& g, Tensor frame, Tensor object, bool trainable = true) const {
        if (frame.valid() && object.valid() &&
            frame.shape()[0] != object.shape()[0])
            shape_fail("fuse_features", "frame rows ", shape_str(frame.shape()),
                       " vs object rows ", shape_str(object.shape()));
        Tensor frame_path, object_path;
        if (cfg_->use_frame_features)
            frame_path = linear(g, frame, *w_proj_, b_proj_, trainable);
        if (cfg_->use_object_features)
            object_path = cfg_->needs_object_projection()
                              ? linear(g, object, *w_oproj_, b_oproj_, trainable)
                              : object;
        if (frame_path.valid() && object_path.valid())
            return g.hadamard(frame_path, object_path);
        return frame_path.valid() ? frame_path : object_path;
    }

    // Gates every frame row of example i by the controller column for its
    // question type.
    Tensor apply_controller(Graph& g, Tensor vs, const std::vector<int>& types,
                            bool trainable = true) const {
        if (!cfg_->enable_controller) return vs;
        for (int t : types)
            require(t >= 0 && t < cfg_->num_types, "apply_controller",
                    "type index " + std::to_string(t) + " out of range");
        Tensor cols = g.embedding(g.param(*controller_, trainable), types);  // [b x d]
        Tensor gates = g.repeat_rows(cols, cfg_->frames);                    // [b*frames x d]
        return g.hadamard(vs, gates);
    }

    // Positional encoding then the self-attention stack; returns the last
    // layer's output [b*frames x d].
    Tensor encode(Graph& g, Tensor v_src, bool trainable = true) const {
        Tensor v = cfg_->use_positional_encoding
                       ? g.positional_encoding(v_src, cfg_->frames)
                       : v_src;
        for (const auto& L : layers_) {
            Tensor q = linear(g, v, *L.wq, L.bq, trainable);
            Tensor k = linear(g, v, *L.wk, nullptr, trainable);
            Tensor val = linear(g, v, *L.wv, L.bv, trainable);
            Tensor attn = g.attention(q, k, val, cfg_->heads, cfg_->frames);
            Tensor out = linear(g, attn, *L.wo, L.bo, trainable);
            if (cfg_->transformer_residual)
                out = g.layernorm_rows(g.add(v, out), g.param(*L.ln_gamma, trainable),
                                       g.param(*L.ln_beta, trainable));
            v = out;
        }
        return v;
    }

    // Mean-pool the frame axis and apply the two-layer projection.
    Tensor clip_embedding(Graph& g, Tensor v_last, bool trainable = true) const {
        Tensor pooled = g.mean_blocks(v_last, cfg_->frames);  // [b x d]
        Tensor hidden = g.relu(linear(g, pooled, *w_pool1_, b_pool1_, trainable));
        return linear(g, hidden, *w_pool2_, b_pool2_, trainable);
    }

    // Full pipeline to the clip embedding [b x d].
    Tensor forward(Graph& g, Tensor frame, Tensor object, const std::vector<int>& types,
                   bool trainable = true) const {
        Tensor vs = fuse_features(g, frame, object, trainable);
        Tensor src = apply_controller(g, vs, types, trainable);
        return clip_embedding(g, encode(g, src, trainable), trainable);
    }

    Parameter* controller() const { return controller_; }
    Parameter* frame_projection() const { return w_proj_; }

private:
    struct SaLayer {
        Parameter *wq = nullptr, *bq = nullptr;
        Parameter *wk = nullptr;
        Parameter *wv = nullptr, *bv = nullptr;
        Parameter *wo = nullptr, *bo = nullptr;
        Parameter *ln_gamma = nullptr, *ln_beta = nullptr;
    };

    const ModelConfig* cfg_;
    Parameter* w_proj_ = nullptr;
    Parameter* b_proj_ = nullptr;
    Parameter* w_oproj_ = nullptr;
    Parameter* b_oproj_ = nullptr;
    Parameter* controller_ = nullptr;
    std::vector<SaLayer> layers_;
    Parameter* w_pool1_ = nullptr;
    Parameter* b_pool1_ = nullptr;
    Parameter* w_pool2_ = nullptr;
    Parameter* b_pool2_ = nullptr;
};

}  // namespace gpn
