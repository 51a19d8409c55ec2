#pragma once

#include <stdexcept>
#include <string>

namespace autodiag {

// Error families. The CLI maps each family onto a distinct exit code,
// so new error sites should pick the family that matches the failure,
// not add a new type.

// File cannot be opened, read, or written.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// File opened but its encoding is not supported or is malformed.
struct AudioFormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Input data violates a precondition (silent clip, too short, bad labels).
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid configuration: feature parameters, schema mismatch, bad hyperparams.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Training cannot proceed (single-class input, non-finite features).
struct TrainError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A trained model is used inconsistently (width mismatch, corrupt container).
struct ModelError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Selection failed: no usable context, empty reference set, no applicable model.
struct MatchError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace autodiag
