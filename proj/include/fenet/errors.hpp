#pragma once

#include <stdexcept>
#include <string>

namespace fenet {

// Error taxonomy shared by the library and the CLI exit-code mapping.

// Bad model/config wiring: shape mismatches, unknown kinds, invalid specs.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed or inconsistent data: bad labels, corrupt files.
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Caller misuse of an API: non-scalar backward root, empty split.
struct UsageError : std::runtime_error {
    explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

// Filesystem failures: unwritable directory, missing file.
struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Artifacts that do not belong together: checkpoint vs. config/manifest.
struct MismatchError : std::runtime_error {
    explicit MismatchError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace fenet
