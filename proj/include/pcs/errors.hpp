#pragma once

#include <stdexcept>
#include <string>

namespace pcs {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed input document: JSON/CSV syntax errors, missing fields.
struct ParseError : Error { using Error::Error; };

// Structurally valid input that violates a domain invariant.
struct ValidationError : Error { using Error::Error; };

// Bad or degenerate configuration (profiles, budgets, experiment specs).
struct ConfigError : Error { using Error::Error; };

// Framed wire-protocol faults: truncation, bad version, length overflow.
struct ProtocolError : Error { using Error::Error; };

// Simulator misuse: stepping an exhausted episode, non-finite features.
struct SimError : Error { using Error::Error; };

// Predictor cannot produce an estimate from the given window.
struct PredictionError : Error { using Error::Error; };

// Failure to read or write an output artifact.
struct IoError : Error { using Error::Error; };

}  // namespace pcs
