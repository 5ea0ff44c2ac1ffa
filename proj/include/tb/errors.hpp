#pragma once

#include <stdexcept>
#include <string>

namespace tb {

struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct PreconditionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Raised when an identity that must hold exactly is violated. The message names the invariant.
struct InvariantError : std::runtime_error {
    InvariantError(std::string invariant, const std::string& detail)
        : std::runtime_error(invariant + ": " + detail), name(std::move(invariant)) {}
    std::string name;
};

}  // namespace tb
