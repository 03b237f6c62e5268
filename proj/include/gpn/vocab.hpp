// SPDX-License-Identifier: Apache-2.0
//
// Fixed vocabularies for the synthetic corpus: a 200-word question
// vocabulary (indices 0-3 reserved for PAD/BOS/EOS/UNK) and a closed
// 32-way answer set.

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "gpn/common.hpp"
#include "gpn/rng.hpp"

namespace gpn {

constexpr int kPad = 0;
constexpr int kBos = 1;
constexpr int kEos = 2;
constexpr int kUnk = 3;

constexpr int kNumCategories = 16;
constexpr int kNumColors = 8;
constexpr int kNumActions = 8;
constexpr int kNumSceneTags = 4;
constexpr int kNumQuestionTypes = 5;
constexpr int kMaxObjects = 5;
// Count answers cover 1..4; a category with five instances is not askable
// as a count question (no fifth count token fits the closed answer set).
constexpr int kMaxCountAnswer = 4;

enum QuestionType {
    kTypeWhatObject = 0,  // "what is the <color> object ?" -> category
    kTypeWhatColor = 1,   // "what color is the <category> ?" -> color
    kTypeCount = 2,       // "how many <category> are there ?" -> count
    kTypeYesNo = 3,       // "is there a <category> ?" -> yes/no
    kTypeScene = 4,       // "is it day or night ?" -> day/night
};

inline const std::array<std::string, kNumCategories>& category_words() {
    static const std::array<std::string, kNumCategories> w = {
        "dog",   "cat",   "bird",  "horse", "sheep", "cow",    "car",   "bus",
        "bike",  "truck", "ball",  "kite",  "chair", "table",  "phone", "laptop"};
    return w;
}

inline const std::array<std::string, kNumColors>& color_words() {
    static const std::array<std::string, kNumColors> w = {
        "red", "blue", "green", "yellow", "black", "white", "orange", "purple"};
    return w;
}

inline const std::array<std::string, kNumActions>& action_words() {
    static const std::array<std::string, kNumActions> w = {
        "running", "sleeping", "jumping", "eating", "flying", "rolling", "spinning", "waiting"};
    return w;
}

inline const std::array<std::string, kNumSceneTags>& scene_tag_words() {
    static const std::array<std::string, kNumSceneTags> w = {"day", "night", "indoor", "outdoor"};
    return w;
}

// Answer id layout: [0,16) categories, [16,24) colors, [24,28) counts "1".."4",
// 28 yes, 29 no, 30 day, 31 night. Exactly 32 closed answers.
constexpr int kAnswerSize = 32;
constexpr int kAnswerCategoryBase = 0;
constexpr int kAnswerColorBase = 16;
constexpr int kAnswerCountBase = 24;
constexpr int kAnswerYes = 28;
constexpr int kAnswerNo = 29;
constexpr int kAnswerDay = 30;
constexpr int kAnswerNight = 31;

class Vocabulary {
public:
    Vocabulary() {
        add("<pad>");
        add("<bos>");
        add("<eos>");
        add("<unk>");
        for (const char* w : {"what", "is", "the", "object", "color", "how", "many", "are",
                              "there", "a", "it", "or", "?"})
            add(w);
        for (const auto& w : category_words()) add(w);
        for (const auto& w : color_words()) add(w);
        for (const auto& w : action_words()) add(w);
        for (const auto& w : scene_tag_words()) add(w);
        for (const char* w : {"1", "2", "3", "4", "5", "yes", "no"}) add(w);
        // Filler entries pad the vocabulary out to 200 words; they never
        // appear in templates, mimicking the long tail of a real vocab.
        static const char* extra[] = {
            "about",  "above",  "after",   "again",  "against", "along",  "always", "animal",
            "around", "away",   "basket",  "because","before",  "behind", "below",  "beside",
            "between","big",    "bright",  "camera", "city",    "close",  "cloud",  "cold",
            "come",   "corner", "dark",    "deep",   "did",     "do",     "does",   "down",
            "during", "early",  "east",    "edge",   "empty",   "end",    "evening","ever",
            "every",  "far",    "fast",    "few",    "field",   "find",   "first",  "floor",
            "fly",    "follow", "for",     "from",   "front",   "full",   "game",   "go",
            "good",   "grass",  "ground",  "group",  "happen",  "hard",   "has",    "have",
            "he",     "her",    "here",    "high",   "him",     "his",    "hold",   "home",
            "house",  "in",     "inside",  "into",   "its",     "just",   "keep",   "kind",
            "large",  "last",   "late",    "left",   "light",   "like",   "little", "long",
            "look",   "low",    "made",    "make",   "man",     "middle", "more",   "most",
            "move",   "much",   "near",    "new",    "next",    "not",    "now",    "of",
            "off",    "on",     "one",     "only",   "open",    "other",  "out",    "outside",
            "over",   "part",   "people",  "place",  "play",    "point",  "right",  "room",
            "round",  "same",   "see",     "she",    "short",   "show",   "side",   "sit",
            "sky",    "slow",   "small",   "some",   "soon",    "stand",  "start",  "stop",
            "street", "sun",    "take",    "tall",   "that",    "them",   "then",   "they",
            "this",   "third",  "through", "to",     "top",     "turn",   "twice",  "under",
            "up",     "use",    "very",    "walk",   "wall",    "warm",   "water",  "way"};
        for (const char* w : extra) {
            if (size() >= 200) break;
            add(w);
        }
        require(size() == 200, "vocab", "expected 200 words, got " + std::to_string(size()));

        answers_.resize(kAnswerSize);
        for (int c = 0; c < kNumCategories; ++c) answers_[kAnswerCategoryBase + c] = category_words()[c];
        for (int c = 0; c < kNumColors; ++c) answers_[kAnswerColorBase + c] = color_words()[c];
        for (int n = 0; n < kMaxCountAnswer; ++n)
            answers_[kAnswerCountBase + n] = std::to_string(n + 1);
        answers_[kAnswerYes] = "yes";
        answers_[kAnswerNo] = "no";
        answers_[kAnswerDay] = "day";
        answers_[kAnswerNight] = "night";
        for (int i = 0; i < kAnswerSize; ++i) answer_index_[answers_[i]] = i;
    }

    int size() const { return static_cast<int>(words_.size()); }
    int answer_size() const { return kAnswerSize; }

    int id(const std::string& w) const {
        auto it = index_.find(w);
        return it == index_.end() ? kUnk : it->second;
    }

    const std::string& word(int id) const { return words_.at(static_cast<size_t>(id)); }

    const std::string& answer_word(int id) const { return answers_.at(static_cast<size_t>(id)); }

    int answer_id(const std::string& w) const {
        auto it = answer_index_.find(w);
        require(it != answer_index_.end(), "vocab", "unknown answer " + w);
        return it->second;
    }

    std::vector<int> encode(const std::vector<std::string>& tokens) const {
        std::vector<int> out;
        out.reserve(tokens.size());
        for (const auto& t : tokens) out.push_back(id(t));
        return out;
    }

    // Words only; PAD/BOS/EOS/UNK dropped.
    std::vector<std::string> decode(const std::vector<int>& ids) const {
        std::vector<std::string> out;
        for (int i : ids)
            if (i > kUnk && i < size()) out.push_back(word(i));
        return out;
    }

    std::string text(const std::vector<int>& ids) const {
        std::string s;
        for (const auto& w : decode(ids)) {
            if (!s.empty()) s += ' ';
            s += w;
        }
        return s;
    }

    std::uint64_t hash() const {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        auto mix = [&h](const std::string& s) {
            for (char c : s) {
                h ^= static_cast<unsigned char>(c);
                h *= 0x100000001b3ULL;
            }
            h ^= 0x7c;
            h *= 0x100000001b3ULL;
        };
        for (const auto& w : words_) mix(w);
        for (const auto& w : answers_) mix(w);
        return h;
    }

private:
    void add(const std::string& w) {
        require(index_.find(w) == index_.end(), "vocab", "duplicate word " + w);
        index_[w] = static_cast<int>(words_.size());
        words_.push_back(w);
    }

    std::vector<std::string> words_;
    std::unordered_map<std::string, int> index_;
    std::vector<std::string> answers_;
    std::unordered_map<std::string, int> answer_index_;
};

inline const Vocabulary& vocab() {
    static const Vocabulary v;
    return v;
}

}  // namespace gpn
