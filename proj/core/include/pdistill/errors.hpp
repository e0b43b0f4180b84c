// Copyright (c) 2026, The pdistill Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace pdistill {

/// Precondition or argument validation failure. Maps to CLI exit code 2.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Operation invoked in the wrong lifecycle state (e.g. backward before
/// forward, a training stage run out of order).
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A model adapter broke the request/response contract.
class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Filesystem failure. Maps to CLI exit code 3.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Remote endpoint unreachable after retries. Maps to CLI exit code 4.
class NetworkError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace pdistill
