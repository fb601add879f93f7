#pragma once

#include <stdexcept>
#include <string>

namespace vesseg {

// Invalid configuration (bad hyperparameters, non-divisible sizes, bad keys).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor/feature-map shape incompatibilities at call time.
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad runtime values (non-binary masks, thresholds out of range, ...).
struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Dataset ingestion problems (orphan images, unreadable files).
struct IngestionError : std::runtime_error {
    explicit IngestionError(const std::string& msg) : std::runtime_error(msg) {}
};

// A metric is mathematically undefined for the given inputs (empty GT, empty surface).
struct MetricUndefined : std::runtime_error {
    explicit MetricUndefined(const std::string& msg) : std::runtime_error(msg) {}
};

// Training produced a non-finite loss.
struct DivergenceError : std::runtime_error {
    explicit DivergenceError(const std::string& msg) : std::runtime_error(msg) {}
};

// Checkpoint file is malformed or inconsistent with the requested network.
struct CheckpointError : std::runtime_error {
    explicit CheckpointError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace vesseg
