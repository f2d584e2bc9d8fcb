#include "aan/format.hpp"

#include <string>

#include "aan/error.hpp"

namespace aan {

std::vector<std::string_view> split(std::string_view line, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

double parse_double(std::string_view field) {
    while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) {
        field.remove_prefix(1);
    }
    while (!field.empty() && (field.back() == ' ' || field.back() == '\r')) {
        field.remove_suffix(1);
    }
    double v = 0.0;
    const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
    require(res.ec == std::errc() && res.ptr == field.data() + field.size(), ErrorKind::InvalidArgument,
            "malformed number '" + std::string(field) + "'");
    return v;
}

}  // namespace aan
