// Copyright (C) 2026 The stpose Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <stdexcept>
#include <string>

namespace stpose {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A documented precondition was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Geometric input is rank deficient (collinear points, parallel rays, ...).
class DegeneracyError : public Error {
 public:
  using Error::Error;
};

class BehindCameraError : public DegeneracyError {
 public:
  using DegeneracyError::DegeneracyError;
};

// Malformed file content; the message names the file and field.
class ParseError : public Error {
 public:
  using Error::Error;
};

// Inputs are well-formed but mutually inconsistent (config vs dataset, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// NaN or Inf showed up where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace stpose
