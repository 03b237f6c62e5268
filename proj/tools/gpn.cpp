// SPDX-License-Identifier: Apache-2.0
//
// Command-line entry point. Subcommands:
//   gen-data   render synthetic corpora (train/val/test) to .gpnc files
//   train      run the training loop, logging losses and checkpoints
//   eval       evaluate a checkpoint on a corpus split
//   generate   emit QA pairs for a corpus split as JSON lines
//   gradcheck  central-difference audit of every op and the full loss graph
//   ablate     multi-seed variant comparison table
//
// Exit codes: 0 success, 2 config error, 3 data error, 4 numerical failure
// (aborted run or gradcheck over tolerance), 1 anything else.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "gpn/cli_config.hpp"
#include "gpn/gradcheck.hpp"
#include "gpn/metrics.hpp"
#include "gpn/model.hpp"
#include "gpn/trainer.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

struct CliError {
    int code;
    std::string message;
};

gpn::RunConfig build_config(const std::string& config_path,
                            const std::vector<std::string>& overrides) {
    try {
        gpn::RunConfig cfg;
        if (!config_path.empty()) cfg.load_file(config_path);
        for (const auto& kv : overrides) cfg.set_override(kv);
        return cfg;
    } catch (const std::exception& e) {
        throw CliError{kExitConfig, e.what()};
    }
}

std::string prepare_out_dir(const gpn::RunConfig& cfg) {
    std::string dir = cfg.out_dir();
    std::filesystem::create_directories(dir);
    cfg.write_resolved(dir + "/resolved-config.cfg");
    return dir;
}

gpn::Corpus load_split(const gpn::RunConfig& cfg, const std::string& split) {
    try {
        return cfg.split_corpus(split);
    } catch (const std::exception& e) {
        throw CliError{kExitData, e.what()};
    }
}

int cmd_gen_data(const gpn::RunConfig& cfg) {
    std::string dir = prepare_out_dir(cfg);
    for (const char* split : {"train", "val", "test"}) {
        gpn::Corpus c = load_split(cfg, split);
        std::string path = dir + "/" + split + ".gpnc";
        gpn::write_corpus(c, path);
        std::printf("%s: %zu scenes, %zu examples -> %s\n", split, c.scenes.size(),
                    c.examples.size(), path.c_str());
    }
    return 0;
}

int cmd_train(const gpn::RunConfig& cfg) {
    gpn::TrainConfig tc;
    try {
        tc = cfg.train_config();
    } catch (const std::exception& e) {
        throw CliError{kExitConfig, e.what()};
    }
    prepare_out_dir(cfg);
    gpn::Corpus train_c = load_split(cfg, "train");
    gpn::Corpus val_c = load_split(cfg, "val");
    try {
        auto outcome = gpn::train(tc, train_c, val_c);
        const auto& rec = outcome.record;
        std::printf("trained %zu steps; best validation %.6f at step %lld\n", rec.steps.size(),
                    rec.best_val, static_cast<long long>(rec.best_step));
        std::printf("final losses: %s\n", rec.steps.back().to_json().dump().c_str());
        std::printf("artifacts in %s\n", tc.run_dir.c_str());
        return 0;
    } catch (const gpn::NumericalAbort& e) {
        std::fprintf(stderr, "numerical abort at step %lld; last finite: %s\n",
                     static_cast<long long>(e.step), e.last_finite.to_json().dump().c_str());
        return kExitNumeric;
    }
}

std::string checkpoint_or_default(const gpn::RunConfig& cfg, const std::string& key,
                                  const std::string& dir) {
    std::string path = cfg.str(key);
    if (path.empty()) path = dir + "/checkpoint-best.gpn";
    return path;
}

int cmd_eval(const gpn::RunConfig& cfg) {
    std::string dir = prepare_out_dir(cfg);
    std::string ck_path = checkpoint_or_default(cfg, "eval.checkpoint", dir);
    gpn::Corpus corpus = load_split(cfg, cfg.str("eval.split"));
    gpn::EvalReport rep;
    try {
        rep = gpn::evaluate_checkpoint(ck_path, corpus);
    } catch (const std::exception& e) {
        throw CliError{kExitData, e.what()};
    }
    std::ofstream(dir + "/eval-report.json") << rep.to_json().dump(2) << "\n";
    std::ofstream(dir + "/eval-report.txt") << rep.text();
    std::cout << rep.text();
    return 0;
}

int cmd_generate(const gpn::RunConfig& cfg) {
    std::string dir = prepare_out_dir(cfg);
    std::string ck_path = checkpoint_or_default(cfg, "generate.checkpoint", dir);
    gpn::Corpus corpus = load_split(cfg, cfg.str("generate.split"));
    try {
        gpn::Checkpoint ck = gpn::load_checkpoint(ck_path);
        gpn::require(ck.meta.contains("vocab_hash") &&
                         ck.meta["vocab_hash"] == gpn::vocab().hash(),
                     "generate", "vocabulary mismatch between checkpoint and build");
        gpn::ModelConfig mc = gpn::ModelConfig::from_json(ck.meta["config"]["model"]);
        gpn::GpnModel model(mc, 0);
        gpn::apply_checkpoint(ck, model.params());

        std::string path = dir + "/qa-pairs.jsonl";
        std::ofstream out(path);
        int written = 0;
        for (const auto& e : corpus.examples) {
            auto gen = model.generate(corpus, e.scene_id, e.question_type);
            nlohmann::json j = {{"clip_id", gen.scene_id},
                                {"question_type", gen.question_type},
                                {"question_tokens", gen.question},
                                {"question_text", gpn::vocab().text(gen.question)},
                                {"answer_id", gen.answer_id},
                                {"answer_text", gpn::vocab().answer_word(gen.answer_id)},
                                {"answer_proposal_entropy", gen.proposal_entropy}};
            out << j.dump() << "\n";
            ++written;
        }
        std::printf("wrote %d QA pairs to %s\n", written, path.c_str());
        return 0;
    } catch (const CliError&) {
        throw;
    } catch (const std::exception& e) {
        throw CliError{kExitData, e.what()};
    }
}

int cmd_gradcheck(const gpn::RunConfig& cfg) {
    std::string dir = prepare_out_dir(cfg);
    auto rows = gpn::gradcheck_all_ops(static_cast<std::uint64_t>(7));

    // full loss graph on a small model: d_model 16, 8 answers, 30 words
    gpn::ModelConfig mc;
    mc.d_model = 16;
    mc.heads = 4;
    mc.sa_layers = 2;
    mc.frames = 5;
    mc.frame_dim = 24;
    mc.object_dim = 16;
    mc.vocab_size = 30;
    mc.answer_size = 8;
    mc.num_types = 5;
    mc.validate();
    gpn::GpnModel model(mc, 2024);
    gpn::Corpus corpus;
    {
        gpn::Rng r(515);
        for (int i = 0; i < 2; ++i) {
            gpn::LatentScene s;
            s.scene_id = i;
            s.objects = {{static_cast<int>(r.below(16)), static_cast<int>(r.below(8)),
                          static_cast<int>(r.below(8))}};
            s.scene_tag = static_cast<int>(r.below(4));
            gpn::VideoFeatures vf;
            vf.frames = mc.frames;
            vf.frame_features.resize(static_cast<size_t>(mc.frames) * mc.frame_dim);
            vf.object_features.resize(static_cast<size_t>(mc.frames) * mc.object_dim);
            r.fill_uniform(vf.frame_features, -1, 1);
            r.fill_uniform(vf.object_features, -1, 1);
            corpus.scene_index[i] = i;
            corpus.scenes.push_back(s);
            corpus.features.push_back(std::move(vf));
            gpn::SynthExample e;
            e.scene_id = i;
            e.question_type = static_cast<int>(r.below(mc.num_types));
            for (int t = 0; t < 4; ++t)
                e.q_tgt.push_back(4 + static_cast<int>(r.below(mc.vocab_size - 4)));
            e.q_tgt.push_back(gpn::kEos);
            e.a_tgt = static_cast<int>(r.below(mc.answer_size));
            corpus.examples.push_back(std::move(e));
        }
    }
    auto rep = gpn::grad_check_directional(
        [&](gpn::Graph& g) { return model.train_forward(g, corpus, {0, 1}).l_total; },
        model.params().all(), 1e-5);
    rows.push_back({"full_loss_graph", rep.max_rel_error, 1e-4, rep.max_rel_error < 1e-4});

    nlohmann::json out = nlohmann::json::array();
    bool all_pass = true;
    std::printf("%-22s %-14s %-10s %s\n", "op", "max_rel_error", "tolerance", "status");
    for (const auto& row : rows) {
        std::printf("%-22s %-14.3e %-10.0e %s\n", row.op.c_str(), row.max_rel_error,
                    row.tolerance, row.pass ? "ok" : "FAIL");
        out.push_back({{"op", row.op},
                       {"max_rel_error", row.max_rel_error},
                       {"tolerance", row.tolerance},
                       {"pass", row.pass}});
        all_pass = all_pass && row.pass;
    }
    std::ofstream(dir + "/gradcheck.json") << out.dump(2) << "\n";
    return all_pass ? 0 : kExitNumeric;
}

int cmd_ablate(const gpn::RunConfig& cfg) {
    gpn::TrainConfig tc;
    std::vector<gpn::AblationVariant> variants;
    int seeds = 0, workers = 0;
    try {
        tc = cfg.train_config();
        seeds = static_cast<int>(cfg.integer("ablate.seeds"));
        workers = static_cast<int>(cfg.integer("ablate.workers"));
        std::string names = cfg.str("ablate.variants");
        if (names == "default") {
            variants = gpn::default_ablation_grid();
        } else if (!names.empty()) {
            std::istringstream ss(names);
            std::string name;
            while (std::getline(ss, name, ',')) variants.push_back(gpn::find_variant(name));
        }
    } catch (const std::exception& e) {
        throw CliError{kExitConfig, e.what()};
    }
    std::string dir = prepare_out_dir(cfg);
    gpn::Corpus train_c = load_split(cfg, "train");
    gpn::Corpus eval_c = load_split(cfg, cfg.str("ablate.eval_split"));
    gpn::AblationTable table = gpn::ablate(tc, variants, seeds, train_c, eval_c, workers);
    std::ofstream(dir + "/ablation.json") << table.to_json().dump(2) << "\n";
    std::ofstream(dir + "/ablation.txt") << table.text();
    std::cout << table.text();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"generator-pretester video question-answer generation"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;

    auto* gen_data = app.add_subcommand("gen-data", "render synthetic corpora");
    auto* train = app.add_subcommand("train", "run the training loop");
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    auto* generate = app.add_subcommand("generate", "emit QA pairs as JSON lines");
    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference audit");
    auto* ablate = app.add_subcommand("ablate", "multi-seed variant comparison");
    for (CLI::App* sub : {gen_data, train, eval, generate, gradcheck, ablate}) {
        sub->add_option("--config", config_path, "key=value config file")->expected(1);
        sub->add_option("--set", overrides, "override, e.g. --set model.d_model=64");
    }

    CLI11_PARSE(app, argc, argv);

    try {
        gpn::RunConfig cfg = build_config(config_path, overrides);
        if (gen_data->parsed()) return cmd_gen_data(cfg);
        if (train->parsed()) return cmd_train(cfg);
        if (eval->parsed()) return cmd_eval(cfg);
        if (generate->parsed()) return cmd_generate(cfg);
        if (gradcheck->parsed()) return cmd_gradcheck(cfg);
        if (ablate->parsed()) return cmd_ablate(cfg);
        std::fprintf(stderr, "no subcommand\n");
        return 1;
    } catch (const CliError& e) {
        std::fprintf(stderr, "error: %s\n", e.message.c_str());
        return e.code;
    } catch (const gpn::NumericalAbort& e) {
        std::fprintf(stderr, "numerical abort: %s\n", e.what());
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
