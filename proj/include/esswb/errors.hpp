#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace esswb {

enum class ErrorKind {
  kRange,
  kShape,
  kData,
  kStructure,
  kCausality,
  kArgument,
  kConfig,
  kParse,
  kRealizationFailure,
  kNumerical,
};

/// Base class for every error raised by the library. The kind drives the
/// CLI exit code (see exit_code()).
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define ESSWB_DEFINE_ERROR(Name, Kind)                                   \
  class Name : public Error {                                           \
   public:                                                              \
    explicit Name(const std::string& what) : Error(ErrorKind::Kind, what) {} \
  };

ESSWB_DEFINE_ERROR(RangeError, kRange)
ESSWB_DEFINE_ERROR(ShapeError, kShape)
ESSWB_DEFINE_ERROR(DataError, kData)
ESSWB_DEFINE_ERROR(StructureError, kStructure)
ESSWB_DEFINE_ERROR(CausalityError, kCausality)
ESSWB_DEFINE_ERROR(ArgumentError, kArgument)
ESSWB_DEFINE_ERROR(ConfigError, kConfig)
ESSWB_DEFINE_ERROR(NumericalDiagnostic, kNumerical)

#undef ESSWB_DEFINE_ERROR

/// Malformed input container; carries the byte offset where parsing stopped.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t byte_offset)
      : Error(ErrorKind::kParse,
              what + " (at byte offset " + std::to_string(byte_offset) + ")"),
        byte_offset_(byte_offset) {}

  std::size_t byte_offset() const noexcept { return byte_offset_; }

 private:
  std::size_t byte_offset_;
};

/// Raised by strict realization when the rebuilt operator does not match the
/// source. Residuals are per sequence index i = 1..l-1.
class RealizationFailure : public Error {
 public:
  RealizationFailure(const std::string& what, std::vector<double> residuals)
      : Error(ErrorKind::kRealizationFailure, what),
        residuals_(std::move(residuals)) {}

  const std::vector<double>& residuals() const noexcept { return residuals_; }

 private:
  std::vector<double> residuals_;
};

/// 0 success, 2 config error, 3 data/parse error, 4 numerical diagnostic.
inline int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kArgument:
    case ErrorKind::kConfig:
      return 2;
    case ErrorKind::kRealizationFailure:
    case ErrorKind::kNumerical:
      return 4;
    default:
      return 3;
  }
}

}  // namespace esswb
