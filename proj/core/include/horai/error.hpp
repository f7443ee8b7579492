#pragma once
#include <stdexcept>
#include <string>

namespace horai {

// Base for everything thrown by this library.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad user-supplied configuration (alpha out of range, indivisible lengths, ...).
struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error("config: " + msg) {}
};

// Tensor shape disagreement between operands.
struct ShapeError : Error {
    explicit ShapeError(const std::string& msg) : Error("shape: " + msg) {}
};

// Invalid runtime value (too-short signal, broken spectrum symmetry, NaN).
struct ValueError : Error {
    explicit ValueError(const std::string& msg) : Error("value: " + msg) {}
};

// Token/table index out of range.
struct IndexError : Error {
    explicit IndexError(const std::string& msg) : Error("index: " + msg) {}
};

// Malformed external input (CSV cell, JSONL line, ...).
struct ParseError : Error {
    explicit ParseError(const std::string& msg) : Error("parse: " + msg) {}
};

// Checkpoint or pack file does not match its manifest.
struct CorruptionError : Error {
    explicit CorruptionError(const std::string& msg) : Error("corrupt: " + msg) {}
};

// Metric undefined for the given labels (single-class, no anomaly segment).
struct MetricError : Error {
    explicit MetricError(const std::string& msg) : Error("metric: " + msg) {}
};

// Broken internal invariant; a bug, not a usage error.
struct InternalError : Error {
    explicit InternalError(const std::string& msg) : Error("internal: " + msg) {}
};

}  // namespace horai
