#pragma once

#include <stdexcept>
#include <string>

namespace mtkd {

// Error taxonomy: shape/index/parameter errors are programming or config
// mistakes, format errors carry a byte offset into the offending file,
// state errors signal misuse of an object's lifecycle.

struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct IndexError : std::out_of_range {
    using std::out_of_range::out_of_range;
};

struct ParameterError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct StateError : std::logic_error {
    using std::logic_error::logic_error;
};

struct DegenerateInputError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct FormatError : std::runtime_error {
    long long offset;
    FormatError(const std::string& msg, long long at = -1)
        : std::runtime_error(at >= 0 ? msg + " (at byte offset " + std::to_string(at) + ")"
                                     : msg),
          offset(at) {}
};

}  // namespace mtkd
