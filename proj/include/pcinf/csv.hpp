#pragma once

#include <charconv>
#include <cstdio>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "pcinf/errors.hpp"

namespace pcinf::csv {

// Fields must not contain commas or newlines; the formats this tool reads and
// writes never need quoting.
inline std::vector<std::string_view> split(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

inline std::string_view strip_cr(std::string_view s) {
    if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
    return s;
}

// Shortest round-trippable decimal representation; identical across runs and
// thread counts, which is what the determinism contract for exports needs.
inline std::string format_double(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s, const std::string& stage, std::size_t line_no) {
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        throw ConfigError(stage, "parse_error",
                          "line " + std::to_string(line_no) + ": invalid number '" +
                              std::string(s) + "'");
    }
    return v;
}

inline long parse_long(std::string_view s, const std::string& stage, std::size_t line_no) {
    long v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        throw ConfigError(stage, "parse_error",
                          "line " + std::to_string(line_no) + ": invalid integer '" +
                              std::string(s) + "'");
    }
    return v;
}

}  // namespace pcinf::csv
