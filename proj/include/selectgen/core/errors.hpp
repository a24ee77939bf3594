// Copyright 2026 The SelectGen Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace selectgen {

// Every library failure derives from Error so callers can catch one type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A selection mask (hard or soft) with no positive entry reached a masked
// softmax or a pooling step; the normaliser would be zero.
class AllMaskedError : public Error {
 public:
  AllMaskedError() : Error("selection mask selects no source token") {}
  explicit AllMaskedError(const std::string& where)
      : Error("selection mask selects no source token (" + where + ")") {}
};

class NonScalarLoss : public Error {
 public:
  explicit NonScalarLoss(std::size_t size)
      : Error("backward() needs a scalar loss, got " + std::to_string(size) +
              " values") {}
};

class NonFiniteGradient : public Error {
 public:
  explicit NonFiniteGradient(const std::string& param)
      : Error("non-finite gradient for parameter '" + param + "'") {}
};

class NonFiniteLoss : public Error {
 public:
  using Error::Error;
};

class EnumerationTooLarge : public Error {
 public:
  EnumerationTooLarge(std::size_t n, std::size_t limit)
      : Error("exact enumeration over 2^" + std::to_string(n) +
              " masks refused (limit n <= " + std::to_string(limit) + ")") {}
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class LengthExceeded : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace selectgen
