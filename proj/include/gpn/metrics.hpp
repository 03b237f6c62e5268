// SPDX-License-Identifier: Apache-2.0
//
// Question-generation metrics over whitespace token sequences, one reference
// per candidate:
//   bleu_n   corpus-level modified n-gram precision with brevity penalty and
//            a geometric mean over orders 1..max_n. Optional smoothing adds
//            one to the numerator and denominator of orders with zero
//            matches; unsmoothed, any zero order zeroes the score.
//   rouge_l  mean per-pair LCS F-measure, F = (1+b)PR / (R + bP) with b=1.2.
//   cider    mean per-pair cosine similarity of TF-IDF n-gram vectors,
//            averaged over orders 1..4 and scaled by 10. TF is the raw
//            n-gram count, IDF is log(N / max(1, df)) with df counted over
//            the reference corpus; an empty vector has cosine 0.
// Plus exact-match QA accuracy per question type and the oracle-backed
// answerability report.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "gpn/common.hpp"
#include "gpn/synthdata.hpp"

namespace gpn {

using Sentence = std::vector<std::string>;

namespace ngram {

// n-grams joined with '\x1f' so they can key a hash map.
inline std::unordered_map<std::string, int> counts(const Sentence& s, int n) {
    std::unordered_map<std::string, int> out;
    if (static_cast<int>(s.size()) < n) return out;
    for (size_t i = 0; i + n <= s.size(); ++i) {
        std::string key = s[i];
        for (int k = 1; k < n; ++k) {
            key += '\x1f';
            key += s[i + k];
        }
        ++out[key];
    }
    return out;
}

}  // namespace ngram

inline double bleu_n(const std::vector<Sentence>& candidates,
                     const std::vector<Sentence>& references, int max_n, bool smooth = false) {
    require(!candidates.empty(), "bleu", "empty corpus");
    require(candidates.size() == references.size(), "bleu",
            "candidate/reference count mismatch");
    require(max_n >= 1, "bleu", "max_n must be >= 1");
    double log_sum = 0.0;
    for (int n = 1; n <= max_n; ++n) {
        long long matched = 0, total = 0;
        for (size_t i = 0; i < candidates.size(); ++i) {
            auto cand = ngram::counts(candidates[i], n);
            auto ref = ngram::counts(references[i], n);
            for (const auto& [key, count] : cand) {
                total += count;
                auto it = ref.find(key);
                if (it != ref.end()) matched += std::min(count, it->second);
            }
        }
        if (smooth && matched == 0) {
            ++matched;
            ++total;
        }
        if (matched == 0 || total == 0) return 0.0;
        log_sum += std::log(static_cast<double>(matched) / static_cast<double>(total));
    }
    long long cand_len = 0, ref_len = 0;
    for (size_t i = 0; i < candidates.size(); ++i) {
        cand_len += static_cast<long long>(candidates[i].size());
        ref_len += static_cast<long long>(references[i].size());
    }
    if (cand_len == 0) return 0.0;
    double bp = cand_len >= ref_len
                    ? 1.0
                    : std::exp(1.0 - static_cast<double>(ref_len) / cand_len);
    return bp * std::exp(log_sum / max_n);
}

inline int lcs_length(const Sentence& a, const Sentence& b) {
    std::vector<int> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (size_t i = 1; i <= a.size(); ++i) {
        for (size_t j = 1; j <= b.size(); ++j)
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

constexpr double kRougeBetaSq = 1.2;

inline double rouge_l(const std::vector<Sentence>& candidates,
                      const std::vector<Sentence>& references) {
    require(!candidates.empty(), "rouge_l", "empty corpus");
    require(candidates.size() == references.size(), "rouge_l",
            "candidate/reference count mismatch");
    double sum = 0.0;
    for (size_t i = 0; i < candidates.size(); ++i) {
        const Sentence& c = candidates[i];
        const Sentence& r = references[i];
        if (c.empty() || r.empty()) continue;
        int lcs = lcs_length(c, r);
        if (lcs == 0) continue;
        double prec = static_cast<double>(lcs) / c.size();
        double rec = static_cast<double>(lcs) / r.size();
        sum += (1.0 + kRougeBetaSq) * prec * rec / (rec + kRougeBetaSq * prec);
    }
    return sum / candidates.size();
}

inline double cider(const std::vector<Sentence>& candidates,
                    const std::vector<Sentence>& references) {
    require(!candidates.empty(), "cider", "empty corpus");
    require(candidates.size() == references.size(), "cider",
            "candidate/reference count mismatch");
    const int kOrders = 4;
    double n_docs = static_cast<double>(references.size());
    std::array<std::unordered_map<std::string, int>, kOrders> df;
    for (const auto& r : references)
        for (int n = 1; n <= kOrders; ++n)
            for (const auto& [key, count] : ngram::counts(r, n)) ++df[n - 1][key];

    auto tfidf = [&](const Sentence& s, int n) {
        std::unordered_map<std::string, double> vec;
        for (const auto& [key, count] : ngram::counts(s, n)) {
            auto it = df[n - 1].find(key);
            double d = it == df[n - 1].end() ? 0.0 : it->second;
            vec[key] = count * std::log(n_docs / std::max(1.0, d));
        }
        return vec;
    };

    double total = 0.0;
    for (size_t i = 0; i < candidates.size(); ++i) {
        double pair_score = 0.0;
        for (int n = 1; n <= kOrders; ++n) {
            auto cv = tfidf(candidates[i], n);
            auto rv = tfidf(references[i], n);
            double dot = 0.0, cn = 0.0, rn = 0.0;
            for (const auto& [key, v] : cv) {
                cn += v * v;
                auto it = rv.find(key);
                if (it != rv.end()) dot += v * it->second;
            }
            for (const auto& [key, v] : rv) rn += v * v;
            if (cn > 0.0 && rn > 0.0) pair_score += dot / (std::sqrt(cn) * std::sqrt(rn));
        }
        total += pair_score / kOrders;
    }
    return 10.0 * total / candidates.size();
}

// ---- QA accuracy -------------------------------------------------------------

struct QaAccuracy {
    double overall = 0.0;
    std::map<int, double> per_type;
    std::map<int, int> per_type_count;

    nlohmann::json to_json() const {
        nlohmann::json types = nlohmann::json::object();
        for (const auto& [t, acc] : per_type)
            types[std::to_string(t)] = {{"accuracy", acc},
                                        {"count", per_type_count.at(t)}};
        return {{"overall", overall}, {"per_type", types}};
    }
};

inline QaAccuracy qa_accuracy(const std::vector<int>& predicted, const std::vector<int>& gold,
                              const std::vector<int>& types) {
    require(predicted.size() == gold.size() && gold.size() == types.size(), "qa_accuracy",
            "aligned lists required");
    require(!predicted.empty(), "qa_accuracy", "empty corpus");
    QaAccuracy acc;
    std::map<int, int> hit;
    for (size_t i = 0; i < predicted.size(); ++i) {
        ++acc.per_type_count[types[i]];
        if (predicted[i] == gold[i]) {
            ++hit[types[i]];
            acc.overall += 1.0;
        }
    }
    acc.overall /= static_cast<double>(predicted.size());
    for (const auto& [t, n] : acc.per_type_count)
        acc.per_type[t] = static_cast<double>(hit[t]) / n;
    return acc;
}

// ---- answerability -----------------------------------------------------------

struct GeneratedPair {
    std::int64_t scene_id;
    int question_type;
    std::vector<int> question;  // token ids
    int answer_id;
};

// Verdict fractions over generated pairs. "answerable_match" means the
// oracle answers the generated question and agrees with the model's answer;
// "qa_mismatch" means it answers but disagrees.
struct AnswerabilityReport {
    double answerable_match = 0.0;
    double qa_mismatch = 0.0;
    double unanswerable = 0.0;
    double malformed = 0.0;
    int count = 0;

    double answerable() const { return answerable_match + qa_mismatch; }

    nlohmann::json to_json() const {
        return {{"answerable_match", answerable_match},
                {"qa_mismatch", qa_mismatch},
                {"unanswerable", unanswerable},
                {"malformed", malformed},
                {"count", count}};
    }
};

template <typename SceneLookup>
AnswerabilityReport answerability_report(const std::vector<GeneratedPair>& pairs,
                                         const SceneLookup& scene_for) {
    require(!pairs.empty(), "answerability_report", "no generated pairs");
    AnswerabilityReport rep;
    rep.count = static_cast<int>(pairs.size());
    for (const auto& p : pairs) {
        const LatentScene& scene = scene_for(p.scene_id);
        OracleVerdict v = oracle_answer(scene, p.question);
        switch (v.kind) {
            case OracleVerdict::kAnswer:
                if (v.answer_id == p.answer_id)
                    rep.answerable_match += 1.0;
                else
                    rep.qa_mismatch += 1.0;
                break;
            case OracleVerdict::kUnanswerable:
                rep.unanswerable += 1.0;
                break;
            case OracleVerdict::kMalformed:
                rep.malformed += 1.0;
                break;
        }
    }
    rep.answerable_match /= rep.count;
    rep.qa_mismatch /= rep.count;
    rep.unanswerable /= rep.count;
    rep.malformed /= rep.count;
    return rep;
}

// ---- combined evaluation report ----------------------------------------------

struct EvalReport {
    double bleu = 0.0;
    double bleu4 = 0.0;
    double rouge_l = 0.0;
    double cider = 0.0;
    QaAccuracy accuracy;
    AnswerabilityReport answerability;
    double token_accuracy = 0.0;  // teacher-forced next-token accuracy
    int examples = 0;

    nlohmann::json to_json() const {
        return {{"bleu", bleu},
                {"bleu4", bleu4},
                {"rouge_l", rouge_l},
                {"cider", cider},
                {"qa_accuracy", accuracy.to_json()},
                {"answerability", answerability.to_json()},
                {"token_accuracy", token_accuracy},
                {"examples", examples}};
    }

    std::string text() const {
        std::ostringstream os;
        os << "examples          " << examples << "\n";
        os << "bleu              " << bleu << "\n";
        os << "bleu4             " << bleu4 << "\n";
        os << "rouge_l           " << rouge_l << "\n";
        os << "cider             " << cider << "\n";
        os << "qa_accuracy       " << accuracy.overall << "\n";
        for (const auto& [t, acc] : accuracy.per_type)
            os << "  type " << t << "          " << acc << " (" << accuracy.per_type_count.at(t)
               << ")\n";
        os << "token_accuracy    " << token_accuracy << "\n";
        os << "answerable_match  " << answerability.answerable_match << "\n";
        os << "qa_mismatch       " << answerability.qa_mismatch << "\n";
        os << "unanswerable      " << answerability.unanswerable << "\n";
        os << "malformed         " << answerability.malformed << "\n";
        return os.str();
    }
};

}  // namespace gpn
