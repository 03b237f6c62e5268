// SPDX-License-Identifier: Apache-2.0
//
// Shared small types: shapes, error formatting, numeric helpers.

#pragma once

#include <cstdint>
#include <cstring>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace gpn {

using Vec = std::vector<double>;
using Shape = std::vector<int>;

inline std::int64_t numel(const Shape& s) {
    std::int64_t n = 1;
    for (int d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "(";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + ")";
}

// Builds a message from any streamable pieces.
template <typename... Args>
std::string strcat_msg(const Args&... args) {
    std::ostringstream os;
    (os << ... << args);
    return os.str();
}

// Shape/contract violations on graph ops. Message names the op and the
// offending shapes.
struct ShapeError : std::invalid_argument {
    explicit ShapeError(const std::string& msg) : std::invalid_argument(msg) {}
};

template <typename... Args>
[[noreturn]] void shape_fail(const char* op, const Args&... args) {
    throw ShapeError(strcat_msg(op, ": ", args...));
}

inline void require(bool ok, const char* op, const std::string& detail) {
    if (!ok) throw ShapeError(strcat_msg(op, ": ", detail));
}

inline bool is_finite(double x) { return x == x && x < 1e300 && x > -1e300; }

inline bool all_finite(const Vec& v) {
    for (double x : v)
        if (!is_finite(x)) return false;
    return true;
}

// Little-endian byte packing shared by the checkpoint and corpus containers.
namespace detail {

inline void put_u64_le(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline std::uint64_t get_u64_le(const unsigned char* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
}

inline void append_f64_le(std::string& out, const Vec& v) {
    for (double d : v) {
        std::uint64_t bits;
        std::memcpy(&bits, &d, 8);
        put_u64_le(out, bits);
    }
}

}  // namespace detail

}  // namespace gpn
