#ifndef PLASTIC_ERRORS_HPP
#define PLASTIC_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace plastic {

/// Base class for all library errors.
struct Error : std::runtime_error {
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Incompatible tensor/layer shapes. Messages name the offending axis.
struct DimensionError : Error {
    using Error::Error;
};

/// Invalid run/strategy/hyperparameter configuration.
struct ConfigError : Error {
    using Error::Error;
};

/// An API was called out of contract (e.g. backward without a train-mode cache).
struct UsageError : Error {
    using Error::Error;
};

/// Malformed dataset file (bad magic, truncated payload, wrong grid shape).
struct FormatError : Error {
    using Error::Error;
};

/// A piece leaks across train/valid/test subsets.
struct LeakageError : Error {
    using Error::Error;
};

/// Parameter transfer between models failed; messages name the layer.
struct TransferError : Error {
    using Error::Error;
};

/// Internal state is inconsistent (e.g. a pool index outside its tensor).
struct CorruptionError : Error {
    using Error::Error;
};

/// Training aborted (non-finite gradients); messages name the layer.
struct TrainingError : Error {
    using Error::Error;
};

/// Checkpoint file could not be loaded. The kind distinguishes a corrupt
/// header from truncated parameter arrays and version mismatches.
struct CheckpointError : Error {
    enum class Kind { CorruptHeader, Truncated, VersionMismatch, ShapeMismatch };
    Kind kind;
    CheckpointError(Kind k, const std::string& what) : Error(what), kind(k) {}
};

}  // namespace plastic

#endif  // PLASTIC_ERRORS_HPP
