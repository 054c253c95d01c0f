// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace dofkit {

/// Raised when a numerical procedure fails (non-convergence, unbounded
/// quadrature, Krylov breakdown). Invalid inputs use std::invalid_argument.
class NumericalError : public std::runtime_error {
public:
  explicit NumericalError(const std::string &what) : std::runtime_error(what) {}
};

/// Raised when dense assembly would exceed the configured memory cap.
class DenseCapExceeded : public std::length_error {
public:
  explicit DenseCapExceeded(const std::string &what) : std::length_error(what) {}
};

/// Raised for malformed job configurations.
class ConfigError : public std::invalid_argument {
public:
  explicit ConfigError(const std::string &what) : std::invalid_argument(what) {}
};

} // namespace dofkit
