#pragma once

#include <stdexcept>
#include <string>

namespace fxdl {

// Caller broke a documented precondition (bad shapes, bad ranges, misuse).
struct ContractViolation : std::logic_error {
    using std::logic_error::logic_error;
};

// A computation produced non-finite values or diverged.
struct NumericFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed or inconsistent run configuration.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Checkpoint file is truncated, has a bad magic, or fails its checksum.
struct CorruptFile : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& what) {
    if (!cond) throw ContractViolation(what);
}

}  // namespace fxdl
