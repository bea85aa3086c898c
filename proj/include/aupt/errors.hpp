#pragma once

#include <stdexcept>
#include <string>

namespace aupt {

// Shape/dimension disagreement between tensors or model components.
struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Value outside the mathematical domain of an operation (zero norm,
// non-finite input, invalid probability vector, ...).
struct DomainError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Invalid user-facing configuration (CLI flags, SynthSpec, TrainConfig, ...).
struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Malformed one-hot label or label index out of range.
struct LabelError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Byte-level problem in a stored artifact (bad magic, truncation, ...).
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Filesystem-level failure; message carries the offending path.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Dataset protocol violation (overlapping subject roles, empty split, ...).
struct ProtocolError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace aupt
