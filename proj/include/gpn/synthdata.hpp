// SPDX-License-Identifier: Apache-2.0
//
// Synthetic corpus: latent scenes with known ground truth, rendered to
// frame/object feature tensors with the production shapes (20 x 2048 and
// 20 x 256), template QA pairs per question type, and a brute-force oracle
// that answers any template question against the latent scene.
//
// Everything is a pure function of (corpus_seed, scene_id), so corpora are
// reproducible and train/test splits are disjoint scene-id ranges.

#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "gpn/common.hpp"
#include "gpn/rng.hpp"
#include "gpn/vocab.hpp"

namespace gpn {

constexpr int kFrames = 20;
constexpr int kFrameDim = 2048;
constexpr int kObjectDim = 256;

struct SceneObject {
    int category;  // [0, 16)
    int color;     // [0, 8)
    int action;    // [0, 8)
};

struct LatentScene {
    std::int64_t scene_id = 0;
    std::vector<SceneObject> objects;  // 1..5
    int scene_tag = 0;                 // index into scene_tag_words()

    std::array<int, kNumCategories> category_counts() const {
        std::array<int, kNumCategories> c{};
        for (const auto& o : objects) ++c[o.category];
        return c;
    }

    std::array<int, kNumColors> color_counts() const {
        std::array<int, kNumColors> c{};
        for (const auto& o : objects) ++c[o.color];
        return c;
    }
};

inline Rng scene_rng(std::uint64_t corpus_seed, std::int64_t scene_id, const char* stream) {
    Rng base(corpus_seed ^ 0x5851f42d4c957f2dULL);
    return base.fork(static_cast<std::uint64_t>(scene_id) * 0x9e3779b97f4a7c15ULL ^
                     stream_salt(stream));
}

inline LatentScene gen_scene(std::uint64_t corpus_seed, std::int64_t scene_id) {
    Rng rng = scene_rng(corpus_seed, scene_id, "scene");
    LatentScene s;
    s.scene_id = scene_id;
    int n = 1 + static_cast<int>(rng.below(kMaxObjects));
    s.objects.resize(static_cast<size_t>(n));
    for (auto& o : s.objects) {
        o.category = static_cast<int>(rng.below(kNumCategories));
        o.color = static_cast<int>(rng.below(kNumColors));
        o.action = static_cast<int>(rng.below(kNumActions));
    }
    s.scene_tag = static_cast<int>(rng.below(kNumSceneTags));
    return s;
}

// ---- deterministic QA targets -------------------------------------------
//
// Each question type resolves to at most one (slot word, answer) pair per
// scene, so the gold answer is a function of scene content alone and the
// answer proposal head has a well-posed target.

// Lowest color id whose objects all share one category -> (color, category).
inline std::optional<std::pair<int, int>> what_object_target(const LatentScene& s) {
    for (int c = 0; c < kNumColors; ++c) {
        int cat = -1;
        bool present = false, pure = true;
        for (const auto& o : s.objects)
            if (o.color == c) {
                if (!present) {
                    present = true;
                    cat = o.category;
                } else if (o.category != cat) {
                    pure = false;
                }
            }
        if (present && pure) return std::make_pair(c, cat);
    }
    return std::nullopt;
}

// Lowest category id whose instances all share one color -> (category, color).
inline std::optional<std::pair<int, int>> what_color_target(const LatentScene& s) {
    for (int k = 0; k < kNumCategories; ++k) {
        int col = -1;
        bool present = false, pure = true;
        for (const auto& o : s.objects)
            if (o.category == k) {
                if (!present) {
                    present = true;
                    col = o.color;
                } else if (o.color != col) {
                    pure = false;
                }
            }
        if (present && pure) return std::make_pair(k, col);
    }
    return std::nullopt;
}

// Most frequent category (ties to the lowest id) -> (category, count),
// askable only while the count fits the closed answer set.
inline std::optional<std::pair<int, int>> count_target(const LatentScene& s) {
    auto counts = s.category_counts();
    int best = -1, best_count = 0;
    for (int k = 0; k < kNumCategories; ++k)
        if (counts[k] > best_count) {
            best = k;
            best_count = counts[k];
        }
    if (best < 0 || best_count > kMaxCountAnswer) return std::nullopt;
    return std::make_pair(best, best_count);
}

// Even object count asks about the lowest present category (answer yes),
// odd asks about the lowest absent one (answer no).
inline std::pair<int, bool> yes_no_target(const LatentScene& s) {
    auto counts = s.category_counts();
    bool even = s.objects.size() % 2 == 0;
    for (int k = 0; k < kNumCategories; ++k) {
        bool present = counts[k] > 0;
        if (present == even) return {k, even};
    }
    return {0, even};  // unreachable: <= 5 objects over 16 categories
}

inline std::optional<int> scene_target(const LatentScene& s) {
    if (s.scene_tag == 0 || s.scene_tag == 1) return s.scene_tag;
    return std::nullopt;
}

// ---- question templates ---------------------------------------------------

inline std::vector<int> encode_terminated(const std::vector<std::string>& words) {
    std::vector<int> ids = vocab().encode(words);
    ids.push_back(kEos);
    return ids;
}

// Fills the type's template against the scene. nullopt when the type is not
// applicable (caller retries with another type).
inline std::optional<std::pair<std::vector<int>, int>> gen_qa(const LatentScene& s,
                                                              int question_type) {
    switch (question_type) {
        case kTypeWhatObject: {
            auto t = what_object_target(s);
            if (!t) return std::nullopt;
            return std::make_pair(
                encode_terminated({"what", "is", "the", color_words()[t->first], "object", "?"}),
                kAnswerCategoryBase + t->second);
        }
        case kTypeWhatColor: {
            auto t = what_color_target(s);
            if (!t) return std::nullopt;
            return std::make_pair(
                encode_terminated(
                    {"what", "color", "is", "the", category_words()[t->first], "?"}),
                kAnswerColorBase + t->second);
        }
        case kTypeCount: {
            auto t = count_target(s);
            if (!t) return std::nullopt;
            return std::make_pair(
                encode_terminated({"how", "many", category_words()[t->first], "are", "there", "?"}),
                kAnswerCountBase + t->second - 1);
        }
        case kTypeYesNo: {
            auto [cat, yes] = yes_no_target(s);
            return std::make_pair(encode_terminated({"is", "there", "a", category_words()[cat], "?"}),
                                  yes ? kAnswerYes : kAnswerNo);
        }
        case kTypeScene: {
            auto t = scene_target(s);
            if (!t) return std::nullopt;
            return std::make_pair(encode_terminated({"is", "it", "day", "or", "night", "?"}),
                                  *t == 0 ? kAnswerDay : kAnswerNight);
        }
        default:
            require(false, "gen_qa", "invalid question type " + std::to_string(question_type));
    }
    return std::nullopt;
}

// ---- oracle ----------------------------------------------------------------

struct OracleVerdict {
    enum Kind { kAnswer, kUnanswerable, kMalformed } kind;
    int answer_id = -1;  // valid when kind == kAnswer

    static OracleVerdict answer(int id) { return {kAnswer, id}; }
    static OracleVerdict unanswerable() { return {kUnanswerable, -1}; }
    static OracleVerdict malformed() { return {kMalformed, -1}; }
};

inline int find_word(const std::string& w, const auto& list) {
    for (size_t i = 0; i < list.size(); ++i)
        if (list[i] == w) return static_cast<int>(i);
    return -1;
}

// Brute-force evaluation of a template question against the latent scene.
// Non-template word sequences are malformed; template questions whose
// referent is absent or ambiguous are unanswerable.
inline OracleVerdict oracle_answer(const LatentScene& s, const std::vector<int>& question) {
    std::vector<std::string> w = vocab().decode(question);
    auto is = [&](size_t i, const char* t) { return w[i] == t; };

    if (w.size() == 6 && is(0, "what") && is(1, "is") && is(2, "the") && is(4, "object") &&
        is(5, "?")) {
        int c = find_word(w[3], color_words());
        if (c < 0) return OracleVerdict::malformed();
        int cat = -1;
        bool present = false, pure = true;
        for (const auto& o : s.objects)
            if (o.color == c) {
                if (!present) {
                    present = true;
                    cat = o.category;
                } else if (o.category != cat) {
                    pure = false;
                }
            }
        if (!present || !pure) return OracleVerdict::unanswerable();
        return OracleVerdict::answer(kAnswerCategoryBase + cat);
    }
    if (w.size() == 6 && is(0, "what") && is(1, "color") && is(2, "is") && is(3, "the") &&
        is(5, "?")) {
        int k = find_word(w[4], category_words());
        if (k < 0) return OracleVerdict::malformed();
        int col = -1;
        bool present = false, pure = true;
        for (const auto& o : s.objects)
            if (o.category == k) {
                if (!present) {
                    present = true;
                    col = o.color;
                } else if (o.color != col) {
                    pure = false;
                }
            }
        if (!present || !pure) return OracleVerdict::unanswerable();
        return OracleVerdict::answer(kAnswerColorBase + col);
    }
    if (w.size() == 6 && is(0, "how") && is(1, "many") && is(3, "are") && is(4, "there") &&
        is(5, "?")) {
        int k = find_word(w[2], category_words());
        if (k < 0) return OracleVerdict::malformed();
        int count = s.category_counts()[k];
        if (count < 1 || count > kMaxCountAnswer) return OracleVerdict::unanswerable();
        return OracleVerdict::answer(kAnswerCountBase + count - 1);
    }
    if (w.size() == 5 && is(0, "is") && is(1, "there") && is(2, "a") && is(4, "?")) {
        int k = find_word(w[3], category_words());
        if (k < 0) return OracleVerdict::malformed();
        return OracleVerdict::answer(s.category_counts()[k] > 0 ? kAnswerYes : kAnswerNo);
    }
    if (w.size() == 6 && is(0, "is") && is(1, "it") && is(2, "day") && is(3, "or") &&
        is(4, "night") && is(5, "?")) {
        if (s.scene_tag == 0) return OracleVerdict::answer(kAnswerDay);
        if (s.scene_tag == 1) return OracleVerdict::answer(kAnswerNight);
        return OracleVerdict::unanswerable();
    }
    return OracleVerdict::malformed();
}

// ---- renderer ---------------------------------------------------------------

// Scene descriptor fed to the frozen random projection. Every answer the
// task can ask for is a linear readout of this vector, which is what makes
// the learnability thresholds properties of the construction.
namespace desc {
constexpr int kTagOffset = 0;
constexpr int kCatCountOffset = 4;
constexpr int kColorCountOffset = kCatCountOffset + kNumCategories;
constexpr int kCatColorOffset = kColorCountOffset + kNumColors;
constexpr int kAnswerOffset = kCatColorOffset + kNumCategories * kNumColors;
constexpr int kParityOffset = kAnswerOffset + kNumQuestionTypes * kAnswerSize;
constexpr int kSlotOffset = kParityOffset + 1;
// slot one-hots: what-object color (8), then category slots for
// what-color / count / yes-no (16 each)
constexpr int kStaticDim = kSlotOffset + kNumColors + 3 * kNumCategories;
constexpr int kPhaseDim = 6;
constexpr int kInputDim = kStaticDim + kPhaseDim;
}  // namespace desc

inline Vec scene_descriptor(const LatentScene& s) {
    Vec d(desc::kStaticDim, 0.0);
    d[desc::kTagOffset + s.scene_tag] = 1.0;
    auto cc = s.category_counts();
    for (int k = 0; k < kNumCategories; ++k)
        d[desc::kCatCountOffset + k] = cc[k] / 4.0;
    auto col = s.color_counts();
    for (int c = 0; c < kNumColors; ++c) d[desc::kColorCountOffset + c] = col[c] / 4.0;
    for (const auto& o : s.objects)
        d[desc::kCatColorOffset + o.category * kNumColors + o.color] += 0.5;
    for (int t = 0; t < kNumQuestionTypes; ++t) {
        auto qa = gen_qa(s, t);
        if (qa) d[desc::kAnswerOffset + t * kAnswerSize + qa->second] = 1.0;
    }
    d[desc::kParityOffset] = s.objects.size() % 2 == 0 ? 1.0 : 0.0;
    if (auto t = what_object_target(s)) d[desc::kSlotOffset + t->first] = 1.0;
    if (auto t = what_color_target(s)) d[desc::kSlotOffset + kNumColors + t->first] = 1.0;
    if (auto t = count_target(s))
        d[desc::kSlotOffset + kNumColors + kNumCategories + t->first] = 1.0;
    d[desc::kSlotOffset + kNumColors + 2 * kNumCategories + yes_no_target(s).first] = 1.0;
    return d;
}

// Frozen projection + object prototypes, built once per corpus seed.
struct RenderBasis {
    std::uint64_t corpus_seed;
    Vec projection;  // [kInputDim x kFrameDim]
    Vec prototypes;  // [16*8*8 x kObjectDim]

    explicit RenderBasis(std::uint64_t seed) : corpus_seed(seed) {
        Rng proj_rng = Rng(seed).fork(stream_salt("frame-projection"));
        projection.resize(static_cast<size_t>(desc::kInputDim) * kFrameDim);
        proj_rng.fill_gaussian(projection, 0.15);
        Rng proto_rng = Rng(seed).fork(stream_salt("object-prototypes"));
        prototypes.resize(static_cast<size_t>(kNumCategories) * kNumColors * kNumActions *
                          kObjectDim);
        proto_rng.fill_gaussian(prototypes, 0.5);
    }

    const double* prototype(const SceneObject& o) const {
        size_t idx = (static_cast<size_t>(o.category) * kNumColors + o.color) * kNumActions +
                     o.action;
        return prototypes.data() + idx * kObjectDim;
    }
};

struct VideoFeatures {
    int frames = kFrames;
    Vec frame_features;   // [frames x kFrameDim]
    Vec object_features;  // [frames x kObjectDim]
};

// Contiguous visibility window per object. A lone object fills the clip;
// otherwise length and start come from the scene stream.
inline std::pair<int, int> visibility_window(Rng& rng, size_t object_count) {
    if (object_count == 1) return {0, kFrames};
    int len = kFrames / 2 + static_cast<int>(rng.below(kFrames / 4));
    int start = static_cast<int>(rng.below(kFrames - len + 1));
    return {start, start + len};
}

inline VideoFeatures render_features(const LatentScene& s, double noise_sigma,
                                     const RenderBasis& basis) {
    require(noise_sigma >= 0.0, "render_features", "noise_sigma must be non-negative");
    VideoFeatures vf;
    vf.frame_features.assign(static_cast<size_t>(kFrames) * kFrameDim, 0.0);
    vf.object_features.assign(static_cast<size_t>(kFrames) * kObjectDim, 0.0);

    Vec input(desc::kInputDim, 0.0);
    Vec stat = scene_descriptor(s);
    std::copy(stat.begin(), stat.end(), input.begin());
    for (int f = 0; f < kFrames; ++f) {
        double ph = 2.0 * 3.14159265358979323846 * f / kFrames;
        input[desc::kStaticDim + 0] = std::sin(ph);
        input[desc::kStaticDim + 1] = std::cos(ph);
        input[desc::kStaticDim + 2] = std::sin(2.0 * ph);
        input[desc::kStaticDim + 3] = std::cos(2.0 * ph);
        input[desc::kStaticDim + 4] = std::sin(3.0 * ph);
        input[desc::kStaticDim + 5] = std::cos(3.0 * ph);
        double* row = vf.frame_features.data() + static_cast<size_t>(f) * kFrameDim;
        for (int i = 0; i < desc::kInputDim; ++i) {
            double x = input[i];
            if (x == 0.0) continue;
            const double* prow = basis.projection.data() + static_cast<size_t>(i) * kFrameDim;
            for (int j = 0; j < kFrameDim; ++j) row[j] += x * prow[j];
        }
    }
    if (noise_sigma > 0.0) {
        Rng noise = scene_rng(basis.corpus_seed, s.scene_id, "noise");
        for (double& x : vf.frame_features) x += noise.gaussian() * noise_sigma;
    }

    Rng wrng = scene_rng(basis.corpus_seed, s.scene_id, "windows");
    std::vector<std::pair<int, int>> windows;
    windows.reserve(s.objects.size());
    for (size_t k = 0; k < s.objects.size(); ++k)
        windows.push_back(visibility_window(wrng, s.objects.size()));
    for (int f = 0; f < kFrames; ++f) {
        double* row = vf.object_features.data() + static_cast<size_t>(f) * kObjectDim;
        int visible = 0;
        for (size_t k = 0; k < s.objects.size(); ++k) {
            if (f < windows[k].first || f >= windows[k].second) continue;
            const double* proto = basis.prototype(s.objects[k]);
            for (int j = 0; j < kObjectDim; ++j) row[j] += proto[j];
            ++visible;
        }
        if (visible > 1)
            for (int j = 0; j < kObjectDim; ++j) row[j] /= visible;
    }
    return vf;
}

// ---- corpus -----------------------------------------------------------------

struct SynthExample {
    std::int64_t scene_id;
    int question_type;
    std::vector<int> q_tgt;  // token ids, EOS-terminated, no BOS/PAD
    int a_tgt;
};

struct Corpus {
    std::uint64_t corpus_seed = 0;
    double noise_sigma = 0.0;
    std::vector<LatentScene> scenes;
    std::vector<VideoFeatures> features;  // aligned with scenes
    std::vector<SynthExample> examples;
    std::unordered_map<std::int64_t, int> scene_index;

    int scene_pos(std::int64_t id) const {
        auto it = scene_index.find(id);
        require(it != scene_index.end(), "corpus", "unknown scene " + std::to_string(id));
        return it->second;
    }
    const LatentScene& scene_for(std::int64_t id) const { return scenes[scene_pos(id)]; }
    const VideoFeatures& features_for(std::int64_t id) const { return features[scene_pos(id)]; }
};

// One example per applicable question type per scene.
inline Corpus build_corpus(std::uint64_t corpus_seed, std::int64_t first_scene_id,
                           int scene_count, double noise_sigma) {
    RenderBasis basis(corpus_seed);
    Corpus c;
    c.corpus_seed = corpus_seed;
    c.noise_sigma = noise_sigma;
    c.scenes.reserve(static_cast<size_t>(scene_count));
    c.features.reserve(static_cast<size_t>(scene_count));
    for (int i = 0; i < scene_count; ++i) {
        std::int64_t id = first_scene_id + i;
        LatentScene s = gen_scene(corpus_seed, id);
        c.scene_index[id] = static_cast<int>(c.scenes.size());
        c.features.push_back(render_features(s, noise_sigma, basis));
        for (int t = 0; t < kNumQuestionTypes; ++t) {
            auto qa = gen_qa(s, t);
            if (qa) c.examples.push_back({id, t, qa->first, qa->second});
        }
        c.scenes.push_back(std::move(s));
    }
    return c;
}

// ---- corpus file ------------------------------------------------------------
//
// Layout mirrors the checkpoint container:
//   "GPNC" | u64 LE header length | JSON-lines header | raw f64 LE blobs
// Header line 1 is corpus metadata, then one line per scene (latent fields
// plus its blob offset in elements), then one line per example. Each scene
// blob is frames*2048 frame doubles followed by frames*256 object doubles.

inline void write_corpus(const Corpus& c, const std::string& path) {
    std::string header;
    nlohmann::json meta = {{"format", "gpn-corpus"},
                           {"version", 1},
                           {"corpus_seed", c.corpus_seed},
                           {"noise_sigma", c.noise_sigma},
                           {"frames", kFrames},
                           {"frame_dim", kFrameDim},
                           {"object_dim", kObjectDim},
                           {"scene_count", c.scenes.size()},
                           {"example_count", c.examples.size()},
                           {"vocab_hash", vocab().hash()}};
    header += meta.dump();
    header += '\n';
    std::uint64_t offset = 0;
    const std::uint64_t per_scene = static_cast<std::uint64_t>(kFrames) * (kFrameDim + kObjectDim);
    for (const auto& s : c.scenes) {
        nlohmann::json objs = nlohmann::json::array();
        for (const auto& o : s.objects) objs.push_back({o.category, o.color, o.action});
        nlohmann::json line = {{"scene_id", s.scene_id},
                               {"tag", s.scene_tag},
                               {"objects", objs},
                               {"offset", offset}};
        header += line.dump();
        header += '\n';
        offset += per_scene;
    }
    for (const auto& e : c.examples) {
        nlohmann::json line = {{"scene_id", e.scene_id},
                               {"type", e.question_type},
                               {"q", e.q_tgt},
                               {"a", e.a_tgt}};
        header += line.dump();
        header += '\n';
    }

    std::ofstream f(path, std::ios::binary);
    require(f.good(), "write_corpus", "cannot open " + path);
    std::string out = "GPNC";
    detail::put_u64_le(out, header.size());
    out += header;
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    std::string blob;
    for (const auto& vf : c.features) {
        blob.clear();
        detail::append_f64_le(blob, vf.frame_features);
        detail::append_f64_le(blob, vf.object_features);
        f.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    }
    require(f.good(), "write_corpus", "write failed for " + path);
}

inline Corpus read_corpus(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    require(f.good(), "read_corpus", "cannot open " + path);
    std::string blob((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    require(blob.size() >= 12 && blob.compare(0, 4, "GPNC") == 0, "read_corpus",
            "bad magic (expected GPNC)");
    std::uint64_t hlen = detail::get_u64_le(reinterpret_cast<const unsigned char*>(blob.data()) + 4);
    require(blob.size() >= 12 + hlen, "read_corpus", "truncated header");
    std::string header = blob.substr(12, hlen);
    size_t data_start = 12 + hlen;
    size_t data_elems = (blob.size() - data_start) / 8;

    Corpus c;
    std::istringstream lines(header);
    std::string line;
    require(static_cast<bool>(std::getline(lines, line)), "read_corpus", "empty header");
    nlohmann::json meta = nlohmann::json::parse(line);
    require(meta.value("format", "") == "gpn-corpus", "read_corpus", "not a corpus file");
    require(meta.value("vocab_hash", 0ULL) == vocab().hash(), "read_corpus",
            "vocabulary mismatch");
    c.corpus_seed = meta["corpus_seed"].get<std::uint64_t>();
    c.noise_sigma = meta["noise_sigma"].get<double>();
    size_t scene_count = meta["scene_count"].get<size_t>();
    size_t example_count = meta["example_count"].get<size_t>();
    const std::uint64_t per_scene = static_cast<std::uint64_t>(kFrames) * (kFrameDim + kObjectDim);

    for (size_t i = 0; i < scene_count; ++i) {
        require(static_cast<bool>(std::getline(lines, line)), "read_corpus",
                "missing scene record " + std::to_string(i));
        nlohmann::json j = nlohmann::json::parse(line);
        LatentScene s;
        s.scene_id = j["scene_id"].get<std::int64_t>();
        s.scene_tag = j["tag"].get<int>();
        for (const auto& o : j["objects"])
            s.objects.push_back({o[0].get<int>(), o[1].get<int>(), o[2].get<int>()});
        std::uint64_t off = j["offset"].get<std::uint64_t>();
        require(off + per_scene <= data_elems, "read_corpus",
                strcat_msg("scene ", s.scene_id, " blob at offset ", off,
                           " exceeds file data section"));
        VideoFeatures vf;
        vf.frame_features.resize(static_cast<size_t>(kFrames) * kFrameDim);
        vf.object_features.resize(static_cast<size_t>(kFrames) * kObjectDim);
        const unsigned char* p =
            reinterpret_cast<const unsigned char*>(blob.data()) + data_start + off * 8;
        for (size_t e = 0; e < vf.frame_features.size(); ++e) {
            std::uint64_t bits = detail::get_u64_le(p + e * 8);
            std::memcpy(&vf.frame_features[e], &bits, 8);
        }
        p += vf.frame_features.size() * 8;
        for (size_t e = 0; e < vf.object_features.size(); ++e) {
            std::uint64_t bits = detail::get_u64_le(p + e * 8);
            std::memcpy(&vf.object_features[e], &bits, 8);
        }
        c.scene_index[s.scene_id] = static_cast<int>(c.scenes.size());
        c.scenes.push_back(std::move(s));
        c.features.push_back(std::move(vf));
    }
    for (size_t i = 0; i < example_count; ++i) {
        require(static_cast<bool>(std::getline(lines, line)), "read_corpus",
                "missing example record " + std::to_string(i));
        nlohmann::json j = nlohmann::json::parse(line);
        SynthExample e;
        e.scene_id = j["scene_id"].get<std::int64_t>();
        e.question_type = j["type"].get<int>();
        e.q_tgt = j["q"].get<std::vector<int>>();
        e.a_tgt = j["a"].get<int>();
        c.examples.push_back(std::move(e));
    }
    return c;
}

// ---- linear probe -----------------------------------------------------------
//
// Ridge regression from mean-pooled frame features to scene-tag one-hots.
// This is the solvability certificate for the rendered features: if the
// probe clears its accuracy bar, failures downstream are model failures.

namespace detail {

// In-place Cholesky solve of (A)X = B with A symmetric positive definite,
// A: [n x n], B/X: [n x m].
inline void cholesky_solve(Vec& A, Vec& B, int n, int m) {
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j <= i; ++j) {
            double s = A[static_cast<size_t>(i) * n + j];
            for (int k = 0; k < j; ++k)
                s -= A[static_cast<size_t>(i) * n + k] * A[static_cast<size_t>(j) * n + k];
            if (i == j) {
                require(s > 0.0, "cholesky", "matrix not positive definite");
                A[static_cast<size_t>(i) * n + j] = std::sqrt(s);
            } else {
                A[static_cast<size_t>(i) * n + j] = s / A[static_cast<size_t>(j) * n + j];
            }
        }
    }
    // forward then backward substitution, per column of B
    for (int c = 0; c < m; ++c) {
        for (int i = 0; i < n; ++i) {
            double s = B[static_cast<size_t>(i) * m + c];
            for (int k = 0; k < i; ++k)
                s -= A[static_cast<size_t>(i) * n + k] * B[static_cast<size_t>(k) * m + c];
            B[static_cast<size_t>(i) * m + c] = s / A[static_cast<size_t>(i) * n + i];
        }
        for (int i = n - 1; i >= 0; --i) {
            double s = B[static_cast<size_t>(i) * m + c];
            for (int k = i + 1; k < n; ++k)
                s -= A[static_cast<size_t>(k) * n + i] * B[static_cast<size_t>(k) * m + c];
            B[static_cast<size_t>(i) * m + c] = s / A[static_cast<size_t>(i) * n + i];
        }
    }
}

inline Vec mean_pooled_frames(const VideoFeatures& vf) {
    Vec out(kFrameDim, 0.0);
    for (int f = 0; f < kFrames; ++f)
        for (int j = 0; j < kFrameDim; ++j)
            out[j] += vf.frame_features[static_cast<size_t>(f) * kFrameDim + j];
    for (double& v : out) v /= kFrames;
    return out;
}

}  // namespace detail

inline double linear_probe_scene_tag_accuracy(const Corpus& train, const Corpus& test,
                                              double ridge = 1.0) {
    const int d = kFrameDim + 1;  // bias column
    Vec gram(static_cast<size_t>(d) * d, 0.0);
    Vec rhs(static_cast<size_t>(d) * kNumSceneTags, 0.0);
    Vec x(d);
    for (size_t i = 0; i < train.scenes.size(); ++i) {
        Vec pooled = detail::mean_pooled_frames(train.features[i]);
        std::copy(pooled.begin(), pooled.end(), x.begin());
        x[d - 1] = 1.0;
        int y = train.scenes[i].scene_tag;
        for (int a = 0; a < d; ++a) {
            if (x[a] == 0.0) continue;
            double xv = x[a];
            double* grow = gram.data() + static_cast<size_t>(a) * d;
            for (int b = a; b < d; ++b) grow[b] += xv * x[b];
            rhs[static_cast<size_t>(a) * kNumSceneTags + y] += xv;
        }
    }
    for (int a = 0; a < d; ++a) {
        for (int b = 0; b < a; ++b)
            gram[static_cast<size_t>(a) * d + b] = gram[static_cast<size_t>(b) * d + a];
        gram[static_cast<size_t>(a) * d + a] += ridge;
    }
    detail::cholesky_solve(gram, rhs, d, kNumSceneTags);

    int correct = 0;
    for (size_t i = 0; i < test.scenes.size(); ++i) {
        Vec pooled = detail::mean_pooled_frames(test.features[i]);
        std::copy(pooled.begin(), pooled.end(), x.begin());
        x[d - 1] = 1.0;
        int best = 0;
        double best_score = -1e300;
        for (int t = 0; t < kNumSceneTags; ++t) {
            double s = 0.0;
            for (int a = 0; a < d; ++a) s += x[a] * rhs[static_cast<size_t>(a) * kNumSceneTags + t];
            if (s > best_score) {
                best_score = s;
                best = t;
            }
        }
        if (best == test.scenes[i].scene_tag) ++correct;
    }
    return test.scenes.empty() ? 0.0 : static_cast<double>(correct) / test.scenes.size();
}

}  // namespace gpn
