#pragma once

#include <stdexcept>
#include <string>

namespace irmap {

enum class ErrorKind {
    Parameter,
    DegenerateHistogram,
    BelowFloor,
    IllConditioned,
    Degeneracy,
    Horizon,
    Truncation,
    Parse,
    OutOfFrame,
    NoPrescan,
    Format,
    Corruption,
    NotFound,
    Config,
    Invariant,
    Io,
};

const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind), detail_(message) {}

    ErrorKind kind() const noexcept { return kind_; }
    // Message without the kind prefix.
    const std::string& detail() const noexcept { return detail_; }

private:
    ErrorKind kind_;
    std::string detail_;
};

// Carries the byte offset of a damaged binary record.
class OffsetError : public Error {
public:
    OffsetError(ErrorKind kind, const std::string& message, std::size_t offset)
        : Error(kind, message + " at byte " + std::to_string(offset)), offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
    throw Error(kind, message);
}

inline void require(bool condition, ErrorKind kind, const std::string& message) {
    if (!condition) throw Error(kind, message);
}

// Literal messages skip the string construction on the passing path.
inline void require(bool condition, ErrorKind kind, const char* message) {
    if (!condition) throw Error(kind, message);
}

}  // namespace irmap
