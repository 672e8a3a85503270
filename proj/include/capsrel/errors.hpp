#pragma once

#include <stdexcept>
#include <string>

namespace capsrel {

// Shape mismatch in a dense-matrix or tape operation.
struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error("shape error: " + msg) {}
};

// Violated API contract (non-scalar backward root, mismatched optimizer state, ...).
struct ContractError : std::runtime_error {
  explicit ContractError(const std::string& msg) : std::runtime_error("contract error: " + msg) {}
};

// Malformed input file; message carries the line number where known.
struct ParseError : std::runtime_error {
  explicit ParseError(const std::string& msg) : std::runtime_error("parse error: " + msg) {}
};

// Label or relation set inconsistent with the corpus schema.
struct SchemaError : std::runtime_error {
  explicit SchemaError(const std::string& msg) : std::runtime_error("schema error: " + msg) {}
};

// Wrong field count / dimension in a whitespace-table file (embeddings).
struct FormatError : std::runtime_error {
  explicit FormatError(const std::string& msg) : std::runtime_error("format error: " + msg) {}
};

// Invalid configuration value or combination.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error("config error: " + msg) {}
};

// Checkpoint cannot be read by this build (bad magic, version, schema hash).
struct CompatError : std::runtime_error {
  explicit CompatError(const std::string& msg) : std::runtime_error("incompatibility error: " + msg) {}
};

// Training diverged (non-finite loss); carries a diagnostic dump.
struct TrainAbort : std::runtime_error {
  explicit TrainAbort(const std::string& msg) : std::runtime_error("training aborted: " + msg) {}
};

}  // namespace capsrel
