// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint file layout:
//   bytes 0..3   magic "GPN1"
//   bytes 4..11  u64 little-endian byte length of the manifest
//   manifest     UTF-8 JSON: {"meta": {...}, "tensors": [{name, shape,
//                offset}, ...]} with offsets counted in f64 elements from
//                the start of the data section
//   data         raw little-endian IEEE-754 doubles, concatenated in
//                manifest order
// Round-trips are bit-exact.

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gpn/common.hpp"
#include "gpn/tensor.hpp"

namespace gpn {



struct CheckpointTensor {
    std::string name;
    Shape shape;
    Vec data;
};

struct Checkpoint {
    nlohmann::json meta;
    std::vector<CheckpointTensor> tensors;

    const CheckpointTensor* find(const std::string& name) const {
        for (const auto& t : tensors)
            if (t.name == name) return &t;
        return nullptr;
    }
};

inline std::string encode_checkpoint(const std::vector<Parameter*>& params,
                                     const nlohmann::json& meta) {
    nlohmann::json manifest;
    manifest["meta"] = meta;
    manifest["tensors"] = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (const Parameter* p : params) {
        manifest["tensors"].push_back(
            {{"name", p->name}, {"shape", p->shape}, {"offset", offset}});
        offset += p->value.size();
    }
    std::string man = manifest.dump();
    std::string out = "GPN1";
    detail::put_u64_le(out, man.size());
    out += man;
    for (const Parameter* p : params) detail::append_f64_le(out, p->value);
    return out;
}

inline void save_checkpoint(const std::string& path, const std::vector<Parameter*>& params,
                            const nlohmann::json& meta = nlohmann::json::object()) {
    std::ofstream f(path, std::ios::binary);
    require(f.good(), "checkpoint", "cannot open " + path + " for writing");
    std::string blob = encode_checkpoint(params, meta);
    f.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    require(f.good(), "checkpoint", "write failed for " + path);
}

inline Checkpoint decode_checkpoint(const std::string& blob) {
    require(blob.size() >= 12 && blob.compare(0, 4, "GPN1") == 0, "checkpoint",
            "bad magic (expected GPN1)");
    std::uint64_t man_len =
        detail::get_u64_le(reinterpret_cast<const unsigned char*>(blob.data()) + 4);
    require(blob.size() >= 12 + man_len, "checkpoint", "truncated manifest");
    nlohmann::json manifest = nlohmann::json::parse(blob.substr(12, man_len));
    Checkpoint ck;
    ck.meta = manifest.value("meta", nlohmann::json::object());
    size_t data_start = 12 + man_len;
    size_t data_elems = (blob.size() - data_start) / 8;
    for (const auto& t : manifest["tensors"]) {
        CheckpointTensor ct;
        ct.name = t["name"].get<std::string>();
        ct.shape = t["shape"].get<Shape>();
        std::uint64_t off = t["offset"].get<std::uint64_t>();
        std::uint64_t count = static_cast<std::uint64_t>(numel(ct.shape));
        require(off + count <= data_elems, "checkpoint",
                "tensor " + ct.name + " exceeds data section");
        ct.data.resize(count);
        const unsigned char* p =
            reinterpret_cast<const unsigned char*>(blob.data()) + data_start + off * 8;
        for (std::uint64_t i = 0; i < count; ++i) {
            std::uint64_t bits = detail::get_u64_le(p + i * 8);
            double d;
            std::memcpy(&d, &bits, 8);
            ct.data[i] = d;
        }
        ck.tensors.push_back(std::move(ct));
    }
    return ck;
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    require(f.good(), "checkpoint", "cannot open " + path);
    std::string blob((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return decode_checkpoint(blob);
}

// Copies checkpoint values into matching registry parameters. Every
// registered parameter must be present with an identical shape.
inline void apply_checkpoint(const Checkpoint& ck, ParamRegistry& registry) {
    for (Parameter* p : registry.all()) {
        const CheckpointTensor* t = ck.find(p->name);
        require(t != nullptr, "checkpoint", "missing tensor " + p->name);
        require(t->shape == p->shape, "checkpoint",
                "shape mismatch for " + p->name + ": file " + shape_str(t->shape) +
                    " vs model " + shape_str(p->shape));
        p->value = t->data;
    }
}

}  // namespace gpn
