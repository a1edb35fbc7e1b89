// Copyright 2026 The privlens Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef PRIVLENS_ERRORS_HPP
#define PRIVLENS_ERRORS_HPP

#include <cstdint>
#include <stdexcept>
#include <string>

namespace privlens {

/// Base of all toolkit errors. The CLI maps each subclass to an exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller violated an operation's precondition (bad dimension, k out of range, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Input data is malformed. Carries the line number or byte offset when known.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::int64_t location = -1)
      : Error(what), location_(location) {}

  std::int64_t location() const noexcept { return location_; }

 private:
  std::int64_t location_;
};

/// Data is well-formed but violates a domain invariant (non-tree heads, uncovered subwords, OOV).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Two inputs that must describe the same sentences do not.
class AlignmentError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace privlens

#endif  // PRIVLENS_ERRORS_HPP
