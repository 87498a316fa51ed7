// Copyright imkit contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace imkit {

// Invalid dimensions, scales, or other caller-supplied configuration.
class ConfigError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

// Vector/matrix dimension mismatch at a module boundary.
class DimensionError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

// Random generation could not produce a full-rank matrix.
class GenerationError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Numerically rank-deficient input where full rank is required.
class RankError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Non-finite value produced by an algorithm callable or simulation.
class NumericError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Session/state-machine violation: out-of-order steps, bad frames, ...
class ProtocolError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Corrupt or truncated files (scheme files, transcripts).
class IoError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Scheme violates an invariant needed by the requested computation
// (e.g. a zero row of N1 in the privacy bounds).
class InvalidSchemeError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

}  // namespace imkit
