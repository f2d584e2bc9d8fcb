#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace aan {

enum class ErrorKind {
    InvalidArgument,
    OutOfRange,
    Dimension,
    Ordering,
    InsufficientData,
    Degenerate,
    IllConditioned,
    Conditioning,
    Diverged,
    Config,
    Busy,
    Io,
};

std::string_view to_string(ErrorKind kind);

// Single exception type for the library; the kind drives CLI exit codes and
// HTTP status mapping.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
    throw Error(kind, message);
}

inline void require(bool condition, ErrorKind kind, const std::string& message) {
    if (!condition) {
        fail(kind, message);
    }
}

}  // namespace aan
