// Copyright (c) 2026 The X-Prompt Desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace xprompt {

/// Violated precondition of an operation: bad shapes, bad attributes,
/// out-of-range arguments. Maps to CLI exit code 1.
class ContractError : public std::logic_error {
 public:
  explicit ContractError(const std::string& what) : std::logic_error(what) {}
};

/// Invalid configuration: unknown keys, freeze-policy violations,
/// unknown variant or target names. Maps to CLI exit code 1.
class ConfigError : public ContractError {
 public:
  explicit ConfigError(const std::string& what) : ContractError(what) {}
};

/// A forward op produced NaN or Inf from finite inputs.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

/// Missing files, unreadable or malformed datasets and checkpoints.
/// Maps to CLI exit code 2.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace xprompt
