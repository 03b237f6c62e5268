// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include <json.hpp>

#include "gpn/common.hpp"
#include "gpn/vocab.hpp"

namespace gpn {

// Direction of the consistency KL term. The default puts the pretester's
// answer sheet in the leading slot: KL(A_Q || A_P).
enum class KlDirection { kPretesterToProposal, kProposalToPretester };

inline std::string kl_direction_name(KlDirection d) {
    return d == KlDirection::kPretesterToProposal ? "qp" : "pq";
}

inline KlDirection kl_direction_from(const std::string& s) {
    if (s == "qp") return KlDirection::kPretesterToProposal;
    if (s == "pq") return KlDirection::kProposalToPretester;
    throw std::invalid_argument("kl_direction must be 'qp' or 'pq', got " + s);
}

struct ModelConfig {
    int d_model = 256;
    int sa_layers = 2;
    int heads = 4;
    int lstm_layers = 2;
    int frames = 20;
    int frame_dim = 2048;
    int object_dim = 256;
    int vocab_size = 200;
    int answer_size = kAnswerSize;
    int num_types = kNumQuestionTypes;
    int max_question_len = 12;

    bool use_positional_encoding = true;
    bool transformer_residual = false;
    bool use_projection_bias = true;
    bool h0_both_layers = true;

    // ablation switches
    bool enable_pretester = true;
    bool enable_controller = true;
    bool use_frame_features = true;
    bool use_object_features = true;
    bool detach_proposal = false;
    KlDirection kl_direction = KlDirection::kPretesterToProposal;

    double lambda_c = 0.25;
    double lambda_a = 0.75;

    void validate() const {
        require(d_model > 0 && d_model % heads == 0, "config",
                "d_model must be a positive multiple of heads");
        require(sa_layers >= 1 && lstm_layers >= 1, "config", "layer counts must be >= 1");
        require(use_frame_features || use_object_features, "config",
                "at least one feature stream must stay enabled");
        require(lambda_c >= 0.0 && lambda_a >= 0.0 && std::abs(lambda_c + lambda_a - 1.0) < 1e-12,
                "config", "lambda_c + lambda_a must equal 1");
        require(max_question_len >= 1, "config", "max_question_len must be >= 1");
    }

    bool needs_object_projection() const { return d_model != object_dim; }

    nlohmann::json to_json() const {
        return {{"d_model", d_model},
                {"sa_layers", sa_layers},
                {"heads", heads},
                {"lstm_layers", lstm_layers},
                {"frames", frames},
                {"frame_dim", frame_dim},
                {"object_dim", object_dim},
                {"vocab_size", vocab_size},
                {"answer_size", answer_size},
                {"num_types", num_types},
                {"max_question_len", max_question_len},
                {"use_positional_encoding", use_positional_encoding},
                {"transformer_residual", transformer_residual},
                {"use_projection_bias", use_projection_bias},
                {"h0_both_layers", h0_both_layers},
                {"enable_pretester", enable_pretester},
                {"enable_controller", enable_controller},
                {"use_frame_features", use_frame_features},
                {"use_object_features", use_object_features},
                {"detach_proposal", detach_proposal},
                {"kl_direction", kl_direction_name(kl_direction)},
                {"lambda_c", lambda_c},
                {"lambda_a", lambda_a}};
    }

    static ModelConfig from_json(const nlohmann::json& j) {
        ModelConfig c;
        c.d_model = j.value("d_model", c.d_model);
        c.sa_layers = j.value("sa_layers", c.sa_layers);
        c.heads = j.value("heads", c.heads);
        c.lstm_layers = j.value("lstm_layers", c.lstm_layers);
        c.frames = j.value("frames", c.frames);
        c.frame_dim = j.value("frame_dim", c.frame_dim);
        c.object_dim = j.value("object_dim", c.object_dim);
        c.vocab_size = j.value("vocab_size", c.vocab_size);
        c.answer_size = j.value("answer_size", c.answer_size);
        c.num_types = j.value("num_types", c.num_types);
        c.max_question_len = j.value("max_question_len", c.max_question_len);
        c.use_positional_encoding = j.value("use_positional_encoding", c.use_positional_encoding);
        c.transformer_residual = j.value("transformer_residual", c.transformer_residual);
        c.use_projection_bias = j.value("use_projection_bias", c.use_projection_bias);
        c.h0_both_layers = j.value("h0_both_layers", c.h0_both_layers);
        c.enable_pretester = j.value("enable_pretester", c.enable_pretester);
        c.enable_controller = j.value("enable_controller", c.enable_controller);
        c.use_frame_features = j.value("use_frame_features", c.use_frame_features);
        c.use_object_features = j.value("use_object_features", c.use_object_features);
        c.detach_proposal = j.value("detach_proposal", c.detach_proposal);
        c.kl_direction = kl_direction_from(j.value("kl_direction", std::string("qp")));
        c.lambda_c = j.value("lambda_c", c.lambda_c);
        c.lambda_a = j.value("lambda_a", c.lambda_a);
        c.validate();
        return c;
    }
};

}  // namespace gpn
