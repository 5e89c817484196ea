// Copyright 2026 The vvit Authors
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

#include <stdexcept>
#include <string>

namespace vvit {

enum class ErrorKind {
  Config,
  Shape,
  Input,
  Label,
  Parse,
  Io,
  Index,
  UndefinedMetric,
  Numeric,
};

const char* to_string(ErrorKind kind);

/// Base class for every error raised by the library. The kind drives the
/// status code returned across the C boundary.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define VVIT_DEFINE_ERROR(Name, Kind)                               \
  class Name : public Error {                                       \
   public:                                                          \
    explicit Name(const std::string& what) : Error(Kind, what) {}   \
  }

VVIT_DEFINE_ERROR(ConfigError, ErrorKind::Config);
VVIT_DEFINE_ERROR(ShapeError, ErrorKind::Shape);
VVIT_DEFINE_ERROR(InputError, ErrorKind::Input);
VVIT_DEFINE_ERROR(LabelError, ErrorKind::Label);
VVIT_DEFINE_ERROR(ParseError, ErrorKind::Parse);
VVIT_DEFINE_ERROR(IoError, ErrorKind::Io);
VVIT_DEFINE_ERROR(IndexError, ErrorKind::Index);
VVIT_DEFINE_ERROR(UndefinedMetricError, ErrorKind::UndefinedMetric);
VVIT_DEFINE_ERROR(NumericError, ErrorKind::Numeric);

#undef VVIT_DEFINE_ERROR

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config: return "configuration error";
    case ErrorKind::Shape: return "shape error";
    case ErrorKind::Input: return "input error";
    case ErrorKind::Label: return "label error";
    case ErrorKind::Parse: return "parse error";
    case ErrorKind::Io: return "i/o error";
    case ErrorKind::Index: return "index error";
    case ErrorKind::UndefinedMetric: return "undefined metric";
    case ErrorKind::Numeric: return "numerical failure";
  }
  return "error";
}

}  // namespace vvit
