#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace pixeldoc {

// Broad failure classes, mapped to CLI exit codes (usage=2, data=3, numeric=4).
enum class ErrorKind {
    usage,
    data,
    numeric,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void throw_data(const std::string& message) {
    throw Error(ErrorKind::data, message);
}

[[noreturn]] inline void throw_usage(const std::string& message) {
    throw Error(ErrorKind::usage, message);
}

[[noreturn]] inline void throw_numeric(const std::string& message) {
    throw Error(ErrorKind::numeric, message);
}

struct Rgb {
    std::uint8_t r = 0;
    std::uint8_t g = 0;
    std::uint8_t b = 0;

    bool operator==(const Rgb&) const = default;
};

}  // namespace pixeldoc
