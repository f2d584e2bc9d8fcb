#pragma once

#include <charconv>
#include <string>
#include <string_view>
#include <vector>

namespace aan {

/// Shortest decimal form that parses back to the same double.
inline std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline void append_double(std::string& out, double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    out.append(buf, res.ptr);
}

std::vector<std::string_view> split(std::string_view line, char sep);
double parse_double(std::string_view field);

}  // namespace aan
