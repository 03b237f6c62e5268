// SPDX-License-Identifier: Apache-2.0
//
// Flat key=value run configuration with [section] sugar:
//
//   [model]
//   d_model = 64        # becomes model.d_model
//
// Keys are closed-world: anything outside the schema is rejected, naming the
// key. Overrides (--set key=value) win over file values, file values win
// over defaults. Every run writes the fully resolved map next to its
// artifacts so it can be reproduced exactly.

#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "gpn/common.hpp"
#include "gpn/trainer.hpp"

namespace gpn {

class RunConfig {
public:
    RunConfig() {
        set_default("run.name", "run");
        set_default("run.dir", "runs");
        set_default("seed", "1");

        set_default("data.corpus_seed", "7");
        set_default("data.train_scenes", "200");
        set_default("data.val_scenes", "50");
        set_default("data.test_scenes", "50");
        set_default("data.noise_sigma", "0.1");
        set_default("data.train_path", "");
        set_default("data.val_path", "");
        set_default("data.test_path", "");

        set_default("model.d_model", "256");
        set_default("model.sa_layers", "2");
        set_default("model.heads", "4");
        set_default("model.lstm_layers", "2");
        set_default("model.max_question_len", "12");
        set_default("model.positional_encoding", "true");
        set_default("model.residual", "false");
        set_default("model.use_bias", "true");
        set_default("model.h0_both_layers", "true");
        set_default("model.pretester", "true");
        set_default("model.controller", "true");
        set_default("model.frame_features", "true");
        set_default("model.object_features", "true");
        set_default("model.detach_proposal", "false");
        set_default("model.kl_direction", "qp");
        set_default("model.lambda_c", "0.25");
        set_default("model.lambda_a", "0.75");

        set_default("train.batch_size", "32");
        set_default("train.max_steps", "1000");
        set_default("train.validate_every", "100");
        set_default("train.max_val_examples", "512");
        set_default("train.learning_rate", "1e-3");
        set_default("train.beta1", "0.9");
        set_default("train.beta2", "0.999");
        set_default("train.epsilon", "1e-8");

        set_default("eval.checkpoint", "");
        set_default("eval.split", "test");
        set_default("generate.checkpoint", "");
        set_default("generate.split", "test");
        set_default("ablate.seeds", "3");
        set_default("ablate.variants", "default");
        set_default("ablate.workers", "0");
        set_default("ablate.eval_split", "test");
    }

    void load_file(const std::string& path) {
        std::ifstream f(path);
        require(f.good(), "config", "cannot open config file " + path);
        std::string line, section;
        int lineno = 0;
        while (std::getline(f, line)) {
            ++lineno;
            std::string s = strip(line);
            if (s.empty() || s[0] == '#' || s[0] == ';') continue;
            if (s.front() == '[' && s.back() == ']') {
                section = strip(s.substr(1, s.size() - 2));
                continue;
            }
            auto eq = s.find('=');
            require(eq != std::string::npos, "config",
                    strcat_msg("line ", lineno, ": expected key = value, got '", s, "'"));
            std::string key = strip(s.substr(0, eq));
            std::string value = strip(s.substr(eq + 1));
            if (!section.empty()) key = section + "." + key;
            set(key, value);
        }
    }

    // "key=value" override, e.g. from --set.
    void set_override(const std::string& kv) {
        auto eq = kv.find('=');
        require(eq != std::string::npos, "config", "override must be key=value, got " + kv);
        set(strip(kv.substr(0, eq)), strip(kv.substr(eq + 1)));
    }

    void set(const std::string& key, const std::string& value) {
        require(values_.count(key) > 0, "config", "unknown config key: " + key);
        values_[key] = value;
    }

    const std::string& str(const std::string& key) const {
        auto it = values_.find(key);
        require(it != values_.end(), "config", "unknown config key: " + key);
        return it->second;
    }

    bool flag(const std::string& key) const {
        const std::string& v = str(key);
        if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
        if (v == "false" || v == "0" || v == "no" || v == "off") return false;
        throw ShapeError("config: key " + key + " expects a boolean, got '" + v + "'");
    }

    long long integer(const std::string& key) const {
        try {
            size_t pos = 0;
            long long v = std::stoll(str(key), &pos);
            require(pos == str(key).size(), "config", "trailing junk in " + key);
            return v;
        } catch (const ShapeError&) {
            throw;
        } catch (...) {
            throw ShapeError("config: key " + key + " expects an integer, got '" + str(key) +
                             "'");
        }
    }

    double real(const std::string& key) const {
        try {
            size_t pos = 0;
            double v = std::stod(str(key), &pos);
            require(pos == str(key).size(), "config", "trailing junk in " + key);
            return v;
        } catch (const ShapeError&) {
            throw;
        } catch (...) {
            throw ShapeError("config: key " + key + " expects a number, got '" + str(key) + "'");
        }
    }

    std::string out_dir() const { return str("run.dir") + "/" + str("run.name"); }

    ModelConfig model_config() const {
        ModelConfig m;
        m.d_model = static_cast<int>(integer("model.d_model"));
        m.sa_layers = static_cast<int>(integer("model.sa_layers"));
        m.heads = static_cast<int>(integer("model.heads"));
        m.lstm_layers = static_cast<int>(integer("model.lstm_layers"));
        m.max_question_len = static_cast<int>(integer("model.max_question_len"));
        m.vocab_size = vocab().size();
        m.answer_size = kAnswerSize;
        m.num_types = kNumQuestionTypes;
        m.use_positional_encoding = flag("model.positional_encoding");
        m.transformer_residual = flag("model.residual");
        m.use_projection_bias = flag("model.use_bias");
        m.h0_both_layers = flag("model.h0_both_layers");
        m.enable_pretester = flag("model.pretester");
        m.enable_controller = flag("model.controller");
        m.use_frame_features = flag("model.frame_features");
        m.use_object_features = flag("model.object_features");
        m.detach_proposal = flag("model.detach_proposal");
        m.kl_direction = kl_direction_from(str("model.kl_direction"));
        m.lambda_c = real("model.lambda_c");
        m.lambda_a = real("model.lambda_a");
        m.validate();
        return m;
    }

    TrainConfig train_config() const {
        TrainConfig t;
        t.model = model_config();
        t.seed = static_cast<std::uint64_t>(integer("seed"));
        t.batch_size = static_cast<int>(integer("train.batch_size"));
        t.max_steps = static_cast<int>(integer("train.max_steps"));
        t.validate_every = static_cast<int>(integer("train.validate_every"));
        t.max_val_examples = static_cast<int>(integer("train.max_val_examples"));
        t.learning_rate = real("train.learning_rate");
        t.beta1 = real("train.beta1");
        t.beta2 = real("train.beta2");
        t.epsilon = real("train.epsilon");
        t.corpus_seed = static_cast<std::uint64_t>(integer("data.corpus_seed"));
        t.train_scenes = static_cast<int>(integer("data.train_scenes"));
        t.val_scenes = static_cast<int>(integer("data.val_scenes"));
        t.noise_sigma = real("data.noise_sigma");
        t.train_corpus_path = str("data.train_path");
        t.val_corpus_path = str("data.val_path");
        t.run_dir = out_dir();
        t.validate();
        return t;
    }

    // Scene-id ranges for the three synthetic splits.
    std::pair<std::int64_t, int> split_range(const std::string& split) const {
        int train_n = static_cast<int>(integer("data.train_scenes"));
        int val_n = static_cast<int>(integer("data.val_scenes"));
        int test_n = static_cast<int>(integer("data.test_scenes"));
        if (split == "train") return {0, train_n};
        if (split == "val") return {train_n, val_n};
        if (split == "test") return {static_cast<std::int64_t>(train_n) + val_n, test_n};
        throw ShapeError("config: unknown split '" + split + "'");
    }

    Corpus split_corpus(const std::string& split) const {
        std::string path;
        if (split == "train") path = str("data.train_path");
        if (split == "val") path = str("data.val_path");
        if (split == "test") path = str("data.test_path");
        if (!path.empty()) return read_corpus(path);
        auto [first, count] = split_range(split);
        return build_corpus(static_cast<std::uint64_t>(integer("data.corpus_seed")), first,
                            count, real("data.noise_sigma"));
    }

    // Full resolved dump; loading this file reproduces the run exactly.
    void write_resolved(const std::string& path) const {
        std::ofstream f(path);
        require(f.good(), "config", "cannot write " + path);
        for (const auto& [k, v] : values_) f << k << " = " << v << "\n";
    }

    const std::map<std::string, std::string>& entries() const { return values_; }

private:
    static std::string strip(const std::string& s) {
        size_t a = s.find_first_not_of(" \t\r\n");
        if (a == std::string::npos) return "";
        size_t b = s.find_last_not_of(" \t\r\n");
        return s.substr(a, b - a + 1);
    }

    void set_default(const std::string& key, const std::string& value) {
        values_[key] = value;
    }

    std::map<std::string, std::string> values_;
};

}  // namespace gpn
