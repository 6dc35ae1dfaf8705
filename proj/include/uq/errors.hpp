// Copyright 2026 The uqshift Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace uq {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Shape or size disagreement between operands.
struct DimensionError : Error { using Error::Error; };

/// Argument outside its documented domain (bad label, rate >= 1, ...).
struct ValidationError : Error { using Error::Error; };

/// API misuse, e.g. backward on a non-scalar node.
struct UsageError : Error { using Error::Error; };

/// Inconsistent or incomplete run configuration.
struct ConfigError : Error { using Error::Error; };

/// Non-finite values or a tolerance failure at run time.
struct NumericalError : Error { using Error::Error; };

/// Filesystem and parse failures.
struct IoError : Error { using Error::Error; };
struct MagicMismatchError : IoError { using IoError::IoError; };
struct TruncatedFileError : IoError { using IoError::IoError; };
struct DimOverflowError : IoError { using IoError::IoError; };

}  // namespace uq
