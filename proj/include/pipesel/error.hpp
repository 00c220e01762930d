// Copyright 2026 The Authors.
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
#include <string_view>

namespace pipesel {

// Machine-parsable error categories. The CLI prints these verbatim.
enum class ErrorCode { kArgument, kNumerical, kParse, kRun, kIo };

inline std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kArgument: return "E_ARG";
    case ErrorCode::kNumerical: return "E_NUM";
    case ErrorCode::kParse: return "E_PARSE";
    case ErrorCode::kRun: return "E_RUN";
    case ErrorCode::kIo: return "E_IO";
  }
  return "E_UNKNOWN";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

class ArgumentError : public Error {
 public:
  explicit ArgumentError(const std::string& message)
      : Error(ErrorCode::kArgument, message) {}
};

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& message)
      : Error(ErrorCode::kNumerical, message) {}
};

class RunError : public Error {
 public:
  explicit RunError(const std::string& message)
      : Error(ErrorCode::kRun, message) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& message)
      : Error(ErrorCode::kIo, message) {}
};

// Carries the 1-based line number of the offending input line (0 if the
// failure is not tied to a line) and optionally the input's name.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& message)
      : ParseError(std::string(), line, message) {}
  ParseError(const std::string& source, std::size_t line, const std::string& message)
      : Error(ErrorCode::kParse, format(source, line, message)),
        line_(line),
        detail_(message) {}

  std::size_t line() const noexcept { return line_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  static std::string format(const std::string& source, std::size_t line,
                            const std::string& message) {
    std::string s = source.empty() ? std::string() : source + ": ";
    if (line != 0) s += "line " + std::to_string(line) + ": ";
    return s + message;
  }

  std::size_t line_;
  std::string detail_;
};

namespace detail {

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ArgumentError(message);
}

}  // namespace detail
}  // namespace pipesel
