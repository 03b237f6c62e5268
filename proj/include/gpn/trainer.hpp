// SPDX-License-Identifier: Apache-2.0
//
// Training loop with validation-driven best-checkpoint tracking, greedy
// evaluation over a corpus, and the multi-seed ablation harness. One run is
// strictly sequential and a pure function of its seed; the harness farms
// variant x seed jobs across threads and merges deterministically by key.

#pragma once

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "gpn/adam.hpp"
#include "gpn/checkpoint.hpp"
#include "gpn/metrics.hpp"
#include "gpn/model.hpp"
#include "gpn/synthdata.hpp"

namespace gpn {

struct TrainConfig {
    ModelConfig model;
    std::uint64_t seed = 1;
    int batch_size = 32;
    int max_steps = 1000;
    int validate_every = 100;
    int max_val_examples = 512;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    // synthetic corpus; ignored when explicit paths are set
    std::uint64_t corpus_seed = 7;
    int train_scenes = 200;
    int val_scenes = 50;
    double noise_sigma = 0.1;
    std::string train_corpus_path;
    std::string val_corpus_path;

    std::string run_dir;  // artifacts land here when non-empty

    void validate() const {
        model.validate();
        require(batch_size >= 1, "train_config", "batch_size must be >= 1");
        require(max_steps >= validate_every && validate_every >= 1, "train_config",
                "need max_steps >= validate_every >= 1");
        require(learning_rate > 0.0, "train_config", "learning_rate must be positive");
    }

    nlohmann::json to_json() const {
        nlohmann::json j = {{"seed", seed},
                            {"batch_size", batch_size},
                            {"max_steps", max_steps},
                            {"validate_every", validate_every},
                            {"max_val_examples", max_val_examples},
                            {"learning_rate", learning_rate},
                            {"beta1", beta1},
                            {"beta2", beta2},
                            {"epsilon", epsilon},
                            {"corpus_seed", corpus_seed},
                            {"train_scenes", train_scenes},
                            {"val_scenes", val_scenes},
                            {"noise_sigma", noise_sigma},
                            {"train_corpus_path", train_corpus_path},
                            {"val_corpus_path", val_corpus_path}};
        j["model"] = model.to_json();
        return j;
    }
};

// Loss went non-finite; carries the failing step and the last good report.
struct NumericalAbort : std::runtime_error {
    std::int64_t step;
    LossReport last_finite;
    NumericalAbort(std::int64_t s, LossReport last)
        : std::runtime_error("non-finite loss at step " + std::to_string(s)),
          step(s),
          last_finite(last) {}
};

struct RunRecord {
    struct Validation {
        std::int64_t step;
        double val_total;
        bool improved;
    };

    std::vector<LossReport> steps;
    std::vector<Validation> validations;
    std::int64_t best_step = -1;
    double best_val = std::numeric_limits<double>::infinity();

    void write_jsonl(const std::string& path) const {
        std::ofstream f(path);
        require(f.good(), "run_record", "cannot open " + path);
        for (size_t i = 0; i < steps.size(); ++i)
            f << steps[i].to_json(static_cast<std::int64_t>(i + 1)).dump() << "\n";
        for (const auto& v : validations) {
            nlohmann::json j = {{"validation", true},
                                {"step", v.step},
                                {"val_total", v.val_total},
                                {"improved", v.improved}};
            f << j.dump() << "\n";
        }
    }
};

struct TrainOutcome {
    std::unique_ptr<GpnModel> model;  // holds the FINAL parameters
    RunRecord record;
    std::string best_checkpoint_blob;  // encoded checkpoint at the best validation
    std::string final_checkpoint_blob;

    void restore_best() {
        require(!best_checkpoint_blob.empty(), "train_outcome", "no best checkpoint recorded");
        apply_checkpoint(decode_checkpoint(best_checkpoint_blob), model->params());
    }
};

inline Corpus load_or_build_corpus(const std::string& path, std::uint64_t corpus_seed,
                                   std::int64_t first_id, int scenes, double noise_sigma) {
    if (!path.empty()) return read_corpus(path);
    return build_corpus(corpus_seed, first_id, scenes, noise_sigma);
}

// Mean teacher-forced total loss over (a capped prefix of) the corpus.
inline double validation_loss(const GpnModel& model, const Corpus& corpus, int batch_size,
                              int max_examples) {
    int n = std::min<int>(static_cast<int>(corpus.examples.size()), max_examples);
    require(n > 0, "validation", "empty validation corpus");
    double total = 0.0;
    int batches = 0;
    for (int start = 0; start < n; start += batch_size) {
        std::vector<int> idx;
        for (int i = start; i < std::min(n, start + batch_size); ++i) idx.push_back(i);
        Graph g;
        total += model.train_forward(g, corpus, idx, /*trainable=*/false).l_total.scalar();
        ++batches;
    }
    return total / batches;
}

inline TrainOutcome train(const TrainConfig& cfg, const Corpus& train_corpus,
                          const Corpus& val_corpus) {
    cfg.validate();
    require(!train_corpus.examples.empty(), "train", "training corpus has no examples");
    TrainOutcome out;
    out.model = std::make_unique<GpnModel>(cfg.model, cfg.seed);
    GpnModel& model = *out.model;
    Adam opt(model.params().all(),
             AdamConfig{cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon});
    Rng order_rng = Rng(cfg.seed).fork(stream_salt("batch-order"));

    nlohmann::json meta = {{"config", cfg.to_json()}, {"vocab_hash", vocab().hash()}};

    std::vector<int> order(train_corpus.examples.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    size_t cursor = order.size();  // forces a shuffle on first use

    LossReport last_finite;
    for (int step = 1; step <= cfg.max_steps; ++step) {
        std::vector<int> batch;
        batch.reserve(static_cast<size_t>(cfg.batch_size));
        for (int k = 0; k < cfg.batch_size; ++k) {
            if (cursor >= order.size()) {
                order_rng.shuffle(order);
                cursor = 0;
            }
            batch.push_back(order[cursor++]);
        }
        opt.zero_grads();
        Graph g;
        auto fwd = model.train_forward(g, train_corpus, batch);
        LossReport report = fwd.report();
        if (!report.finite()) throw NumericalAbort(step, last_finite);
        last_finite = report;
        g.backward(fwd.l_total);
        opt.step();
        out.record.steps.push_back(report);

        if (step % cfg.validate_every == 0) {
            double val = validation_loss(model, val_corpus, cfg.batch_size,
                                         cfg.max_val_examples);
            bool improved = val < out.record.best_val;
            if (improved) {
                out.record.best_val = val;
                out.record.best_step = step;
                meta["step"] = step;
                out.best_checkpoint_blob = encode_checkpoint(model.params().all(), meta);
            }
            out.record.validations.push_back({step, val, improved});
        }
    }
    meta["step"] = cfg.max_steps;
    out.final_checkpoint_blob = encode_checkpoint(model.params().all(), meta);
    if (out.best_checkpoint_blob.empty()) out.best_checkpoint_blob = out.final_checkpoint_blob;

    if (!cfg.run_dir.empty()) {
        std::filesystem::create_directories(cfg.run_dir);
        out.record.write_jsonl(cfg.run_dir + "/run-record.jsonl");
        std::ofstream best(cfg.run_dir + "/checkpoint-best.gpn", std::ios::binary);
        best.write(out.best_checkpoint_blob.data(),
                   static_cast<std::streamsize>(out.best_checkpoint_blob.size()));
        std::ofstream fin(cfg.run_dir + "/checkpoint-final.gpn", std::ios::binary);
        fin.write(out.final_checkpoint_blob.data(),
                  static_cast<std::streamsize>(out.final_checkpoint_blob.size()));
    }
    return out;
}

inline TrainOutcome train(const TrainConfig& cfg) {
    Corpus train_corpus =
        load_or_build_corpus(cfg.train_corpus_path, cfg.corpus_seed, 0, cfg.train_scenes,
                             cfg.noise_sigma);
    Corpus val_corpus =
        load_or_build_corpus(cfg.val_corpus_path, cfg.corpus_seed, cfg.train_scenes,
                             cfg.val_scenes, cfg.noise_sigma);
    return train(cfg, train_corpus, val_corpus);
}

// ---- evaluation ----------------------------------------------------------

// Greedy generation per example (steered by the example's question type),
// text metrics against the gold question, proposal accuracy, oracle
// answerability, and teacher-forced token accuracy.
inline EvalReport evaluate(const GpnModel& model, const Corpus& corpus) {
    require(!corpus.examples.empty(), "evaluate", "empty corpus");
    EvalReport rep;
    rep.examples = static_cast<int>(corpus.examples.size());

    std::vector<Sentence> cands, refs;
    std::vector<int> proposed, gold, types;
    std::vector<GeneratedPair> pairs;
    for (const auto& e : corpus.examples) {
        auto gen = model.generate(corpus, e.scene_id, e.question_type);
        cands.push_back(vocab().decode(gen.question));
        refs.push_back(vocab().decode(e.q_tgt));
        proposed.push_back(gen.answer_id);
        gold.push_back(e.a_tgt);
        types.push_back(e.question_type);
        pairs.push_back({e.scene_id, e.question_type, gen.question, gen.answer_id});
    }
    rep.bleu = bleu_n(cands, refs, 1);
    rep.bleu4 = bleu_n(cands, refs, 4);
    rep.rouge_l = rouge_l(cands, refs);
    rep.cider = cider(cands, refs);
    rep.accuracy = qa_accuracy(proposed, gold, types);
    rep.answerability = answerability_report(
        pairs, [&](std::int64_t id) -> const LatentScene& { return corpus.scene_for(id); });

    // teacher-forced next-token accuracy over non-pad positions
    long long hits = 0, total = 0;
    const int eval_batch = 32;
    for (int start = 0; start < rep.examples; start += eval_batch) {
        std::vector<int> idx;
        for (int i = start; i < std::min(rep.examples, start + eval_batch); ++i)
            idx.push_back(i);
        Graph g;
        auto in = model.gather_batch(g, corpus, idx);
        Tensor v_final = model.encoder().forward(g, in.frame, in.object, in.types, false);
        Tensor ap = g.softmax(model.selector().propose_logits(g, v_final, false));
        TokenBatch tb = TokenBatch::from_sequences(in.questions);
        auto state = model.decoder().init_state(g, v_final, ap, false);
        auto tf = model.decoder().teacher_forced(g, state, tb, false);
        for (int t = 0; t < tb.max_len; ++t) {
            const Vec& lv = tf.step_logits[static_cast<size_t>(t)].value();
            for (int i = 0; i < tb.batch; ++i) {
                if (t >= tb.lengths[i]) continue;
                const double* row = lv.data() +
                                    static_cast<size_t>(i) * model.config().vocab_size;
                int best = 0;
                for (int j = 1; j < model.config().vocab_size; ++j)
                    if (row[j] > row[best]) best = j;
                if (best == tb.targets[static_cast<size_t>(i) * tb.max_len + t]) ++hits;
                ++total;
            }
        }
    }
    rep.token_accuracy = total == 0 ? 0.0 : static_cast<double>(hits) / total;
    return rep;
}

// Loads a checkpoint file, rebuilds the model it describes, and evaluates.
inline EvalReport evaluate_checkpoint(const std::string& checkpoint_path, const Corpus& corpus) {
    Checkpoint ck = load_checkpoint(checkpoint_path);
    require(ck.meta.contains("vocab_hash") && ck.meta["vocab_hash"] == vocab().hash(),
            "evaluate", "vocabulary mismatch between checkpoint and build");
    ModelConfig mc = ModelConfig::from_json(ck.meta["config"]["model"]);
    GpnModel model(mc, 0);
    apply_checkpoint(ck, model.params());
    return evaluate(model, corpus);
}

// ---- ablation harness ------------------------------------------------------

struct AblationVariant {
    std::string name;
    std::function<void(TrainConfig&)> apply;
};

// The standard grid: module removals plus the consistency-weight sweep.
inline std::vector<AblationVariant> default_ablation_grid() {
    std::vector<AblationVariant> v;
    v.push_back({"no_pretester", [](TrainConfig& c) { c.model.enable_pretester = false; }});
    v.push_back({"no_controller", [](TrainConfig& c) { c.model.enable_controller = false; }});
    v.push_back(
        {"no_frame_features", [](TrainConfig& c) { c.model.use_frame_features = false; }});
    v.push_back(
        {"no_object_features", [](TrainConfig& c) { c.model.use_object_features = false; }});
    for (double lc : {1.0, 0.75, 0.5, 0.25, 0.0}) {
        std::string name = "lambda_c_" + std::to_string(static_cast<int>(lc * 100));
        v.push_back({name, [lc](TrainConfig& c) {
                         c.model.lambda_c = lc;
                         c.model.lambda_a = 1.0 - lc;
                     }});
    }
    return v;
}

inline AblationVariant find_variant(const std::string& name) {
    for (auto& v : default_ablation_grid())
        if (v.name == name) return v;
    throw std::invalid_argument("unknown ablation variant: " + name);
}

struct AblationCell {
    bool ok = false;
    EvalReport report;
    std::string error;
};

struct AblationTable {
    std::vector<std::string> variant_names;  // "base" first
    std::vector<std::uint64_t> seeds;
    std::map<std::pair<std::string, std::uint64_t>, AblationCell> cells;

    static double median(std::vector<double> v) {
        require(!v.empty(), "ablation", "no values for median");
        std::sort(v.begin(), v.end());
        size_t n = v.size();
        return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
    }

    std::map<std::string, double> medians(const std::string& variant) const {
        std::vector<double> bleu4s, ciders, qa, ans, tok;
        for (auto seed : seeds) {
            auto it = cells.find({variant, seed});
            if (it == cells.end() || !it->second.ok) continue;
            const EvalReport& r = it->second.report;
            bleu4s.push_back(r.bleu4);
            ciders.push_back(r.cider);
            qa.push_back(r.accuracy.overall);
            ans.push_back(r.answerability.answerable_match);
            tok.push_back(r.token_accuracy);
        }
        if (bleu4s.empty()) return {};
        return {{"bleu4", median(bleu4s)},
                {"cider", median(ciders)},
                {"qa_accuracy", median(qa)},
                {"answerable_match", median(ans)},
                {"token_accuracy", median(tok)}};
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["seeds"] = seeds;
        j["cells"] = nlohmann::json::array();
        for (const auto& [key, cell] : cells) {
            nlohmann::json c = {{"variant", key.first}, {"seed", key.second}, {"ok", cell.ok}};
            if (cell.ok)
                c["report"] = cell.report.to_json();
            else
                c["error"] = cell.error;
            j["cells"].push_back(c);
        }
        j["medians"] = nlohmann::json::object();
        nlohmann::json base_med;
        for (const auto& name : variant_names) {
            auto med = medians(name);
            nlohmann::json m(med);
            if (name == "base") base_med = m;
            j["medians"][name] = m;
        }
        j["deltas_vs_base"] = nlohmann::json::object();
        for (const auto& name : variant_names) {
            if (name == "base") continue;
            auto med = medians(name);
            nlohmann::json d = nlohmann::json::object();
            for (const auto& [k, v] : med)
                if (base_med.contains(k)) d[k] = v - base_med[k].get<double>();
            j["deltas_vs_base"][name] = d;
        }
        return j;
    }

    std::string text() const {
        std::ostringstream os;
        os << std::left;
        os.width(22);
        os << "variant";
        for (const char* col :
             {"bleu4", "cider", "qa_accuracy", "answerable", "token_acc"}) {
            os.width(13);
            os << col;
        }
        os << "\n";
        for (const auto& name : variant_names) {
            auto med = medians(name);
            os.width(22);
            os << name;
            if (med.empty()) {
                os << "FAILED";
            } else {
                for (const char* key :
                     {"bleu4", "cider", "qa_accuracy", "answerable_match", "token_accuracy"}) {
                    os.width(13);
                    os << med.at(key);
                }
            }
            os << "\n";
        }
        return os.str();
    }
};

// Runs base plus each variant over n_seeds seeds (fixed 1..n), in parallel,
// and evaluates every trained model on the shared held-out corpus.
inline AblationTable ablate(const TrainConfig& base, const std::vector<AblationVariant>& variants,
                            int n_seeds, const Corpus& train_corpus, const Corpus& eval_corpus,
                            int workers = 0) {
    require(n_seeds >= 3, "ablate", "n_seeds must be >= 3 for meaningful medians");
    AblationTable table;
    table.variant_names.push_back("base");
    for (const auto& v : variants) table.variant_names.push_back(v.name);
    for (int s = 1; s <= n_seeds; ++s) table.seeds.push_back(static_cast<std::uint64_t>(s));

    struct Job {
        std::string variant;
        std::uint64_t seed;
        TrainConfig cfg;
    };
    std::vector<Job> jobs;
    for (const auto& name : table.variant_names) {
        for (auto seed : table.seeds) {
            TrainConfig cfg = base;
            cfg.seed = seed;
            cfg.run_dir.clear();  // harness jobs never write files
            if (name != "base") {
                for (const auto& v : variants)
                    if (v.name == name) v.apply(cfg);
            }
            jobs.push_back({name, seed, std::move(cfg)});
        }
    }

    if (workers <= 0)
        workers = std::max(1u, std::thread::hardware_concurrency());
    std::atomic<size_t> next{0};
    std::mutex mu;
    auto worker = [&]() {
        for (;;) {
            size_t i = next.fetch_add(1);
            if (i >= jobs.size()) return;
            const Job& job = jobs[i];
            AblationCell cell;
            try {
                TrainOutcome outcome = train(job.cfg, train_corpus, eval_corpus);
                outcome.restore_best();
                cell.report = evaluate(*outcome.model, eval_corpus);
                cell.ok = true;
            } catch (const std::exception& e) {
                cell.error = e.what();
            }
            std::lock_guard<std::mutex> lock(mu);
            table.cells[{job.variant, job.seed}] = std::move(cell);
        }
    };
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    return table;
}

}  // namespace gpn
