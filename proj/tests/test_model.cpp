// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "gpn/adam.hpp"
#include "gpn/gradcheck.hpp"
#include "gpn/model.hpp"

using namespace gpn;

namespace {

ModelConfig toy_cfg(int d = 4) {
    ModelConfig cfg;
    cfg.d_model = d;
    cfg.heads = 2;
    cfg.sa_layers = 1;
    cfg.frames = 3;
    cfg.frame_dim = 6;
    cfg.object_dim = d;
    cfg.vocab_size = 12;
    cfg.answer_size = 4;
    cfg.num_types = 3;
    cfg.max_question_len = 6;
    return cfg;
}

Corpus toy_corpus(const ModelConfig& cfg, int scenes, std::uint64_t seed) {
    Corpus c;
    c.corpus_seed = seed;
    Rng r(seed);
    for (int i = 0; i < scenes; ++i) {
        LatentScene s;
        s.scene_id = i;
        s.objects = {{static_cast<int>(r.below(16)), static_cast<int>(r.below(8)),
                      static_cast<int>(r.below(8))}};
        s.scene_tag = static_cast<int>(r.below(4));
        VideoFeatures vf;
        vf.frames = cfg.frames;
        vf.frame_features.resize(static_cast<size_t>(cfg.frames) * cfg.frame_dim);
        vf.object_features.resize(static_cast<size_t>(cfg.frames) * cfg.object_dim);
        r.fill_uniform(vf.frame_features, -1, 1);
        r.fill_uniform(vf.object_features, -1, 1);
        c.scene_index[i] = static_cast<int>(c.scenes.size());
        c.scenes.push_back(s);
        c.features.push_back(std::move(vf));
        SynthExample e;
        e.scene_id = i;
        e.question_type = static_cast<int>(r.below(cfg.num_types));
        int len = 2 + static_cast<int>(r.below(3));
        for (int t = 0; t < len; ++t)
            e.q_tgt.push_back(4 + static_cast<int>(r.below(cfg.vocab_size - 4)));
        e.q_tgt.push_back(kEos);
        e.a_tgt = static_cast<int>(r.below(cfg.answer_size));
        c.examples.push_back(std::move(e));
    }
    return c;
}

}  // namespace

TEST_CASE("full loss graph matches central differences on a 4-dim toy model") {
    ModelConfig cfg = toy_cfg(4);
    GpnModel model(cfg, 41);
    Corpus corpus = toy_corpus(cfg, 3, 51);
    std::vector<int> batch = {0, 1, 2};
    auto rep = grad_check(
        [&](Graph& g) { return model.train_forward(g, corpus, batch).l_total; },
        model.params().all(), 1e-5);
    INFO("worst ", rep.worst_param, "[", rep.worst_index, "] err ", rep.max_rel_error);
    CHECK(rep.max_rel_error < 1e-4);
}

TEST_CASE("gradient-flow audit: every registered parameter is reached") {
    // Wide enough that a fully dead ReLU layer cannot occur by chance.
    ModelConfig cfg = toy_cfg(8);
    GpnModel model(cfg, 43);
    Corpus corpus = toy_corpus(cfg, 8, 53);
    Graph g;
    auto out = model.train_forward(g, corpus, {0, 1, 2, 3, 4, 5, 6, 7});
    g.backward(out.l_total);
    for (Parameter* p : model.params().all()) {
        double norm = 0.0;
        for (double v : p->grad) norm += v * v;
        INFO("parameter ", p->name);
        CHECK(norm > 0.0);
    }
}

TEST_CASE("ablation flags silence exactly their subgraphs") {
    ModelConfig cfg = toy_cfg(8);
    cfg.enable_controller = false;
    GpnModel model(cfg, 47);
    CHECK(model.params().find("enc.controller") == nullptr);
    Corpus corpus = toy_corpus(cfg, 8, 59);
    Graph g;
    auto out = model.train_forward(g, corpus, {0, 1, 2, 3, 4, 5, 6, 7});
    g.backward(out.l_total);
    for (Parameter* p : model.params().all()) {
        double norm = 0.0;
        for (double v : p->grad) norm += v * v;
        INFO("parameter ", p->name);
        CHECK(norm > 0.0);
    }
}

TEST_CASE("teacher-forced question loss falls during memorization") {
    for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
        ModelConfig cfg = toy_cfg(8);
        GpnModel model(cfg, seed);
        Corpus corpus = toy_corpus(cfg, 1, 61 + seed);
        Adam opt(model.params().all(), AdamConfig{1e-3, 0.9, 0.999, 1e-8});
        Vec history;
        for (int step = 0; step <= 100; ++step) {
            opt.zero_grads();
            Graph g;
            auto out = model.train_forward(g, corpus, {0});
            history.push_back(out.l_qg.scalar());
            g.backward(out.l_total);
            opt.step();
        }
        // strict decrease across the first hundred steps
        int violations = 0;
        for (size_t i = 1; i < history.size(); ++i)
            if (history[i] >= history[i - 1]) ++violations;
        INFO("seed ", seed, " violations ", violations, " first ", history.front(), " last ",
             history.back());
        CHECK(violations == 0);
        CHECK(history.back() < history.front());
    }
}

TEST_CASE("greedy generation is deterministic and EOS-terminated") {
    ModelConfig cfg = toy_cfg(8);
    GpnModel model(cfg, 71);
    Corpus corpus = toy_corpus(cfg, 2, 67);
    auto a = model.generate(corpus, 0, 1);
    auto b = model.generate(corpus, 0, 1);
    CHECK(a.question == b.question);
    CHECK(a.answer_id == b.answer_id);
    CHECK(a.question.size() <= static_cast<size_t>(cfg.max_question_len));
    CHECK(a.proposal_entropy >= 0.0);
    double sum = 0.0;
    for (double p : a.answer_probs) sum += p;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("question embedding reflects the decoded tokens") {
    ModelConfig cfg = toy_cfg(8);
    GpnModel model(cfg, 73);
    Corpus corpus = toy_corpus(cfg, 2, 79);
    Graph g;
    Corpus alt = corpus;
    alt.examples[0].q_tgt = {5, 6, 7, kEos};
    Corpus alt2 = corpus;
    alt2.examples[0].q_tgt = {8, 9, kEos};
    auto a = model.train_forward(g, alt, {0});
    auto b = model.train_forward(g, alt2, {0});
    CHECK(a.q_emb.value() != b.q_emb.value());
}
