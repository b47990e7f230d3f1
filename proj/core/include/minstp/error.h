// Copyright 2026 The minstp Authors.
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

#ifndef MINSTP_ERROR_H_
#define MINSTP_ERROR_H_

#include <cstddef>
#include <stdexcept>
#include <string>

namespace minstp {

// Base class for every error raised by the library. `kind()` is a stable,
// machine-readable tag used by the CLI when it reports failures as JSON.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

// Invalid or inconsistent configuration (unknown family, B > N, ...).
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& message, std::string field = {})
      : Error("config", message), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

// A numeric argument outside its domain (alpha <= 0, q outside (0,1), ...).
class ParameterError : public Error {
 public:
  explicit ParameterError(const std::string& message)
      : Error("parameter", message) {}
};

class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& message)
      : Error("dimension", message) {}
};

// Malformed point-cloud or checkpoint file. `row` is 1-based, 0 if unknown.
class ParseError : public Error {
 public:
  ParseError(const std::string& message, std::size_t row)
      : Error("parse", message), row_(row) {}
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& message) : Error("io", message) {}
};

// The instance is valid but outside what a solver supports.
class UnsupportedError : public Error {
 public:
  explicit UnsupportedError(const std::string& message)
      : Error("unsupported", message) {}
};

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& message)
      : Error("numerical", message) {}
};

// A bound whose hypotheses fail, e.g. eta * t <= L for the stability constant.
class InfeasibleError : public Error {
 public:
  explicit InfeasibleError(const std::string& message)
      : Error("infeasible", message) {}
};

// Zero variance in a correlation.
class UndefinedError : public Error {
 public:
  explicit UndefinedError(const std::string& message)
      : Error("undefined", message) {}
};

}  // namespace minstp

#endif  // MINSTP_ERROR_H_
