// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace agfn {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// An enumeration or construction would exceed its configured size cap.
class CapExceeded : public Error {
 public:
  CapExceeded(const std::string& what, std::size_t count)
      : Error(what + " (count reached " + std::to_string(count) + ")"), count_(count) {}

  std::size_t count() const noexcept { return count_; }

 private:
  std::size_t count_;
};

class NonFiniteValue : public Error {
 public:
  using Error::Error;
};

/// Numerical failure in the chain analysis layer (singular system, no QR convergence, ...).
class NumericalFailure : public Error {
 public:
  using Error::Error;
};

}  // namespace agfn
