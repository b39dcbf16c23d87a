#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace lsc {

enum class ErrorKind {
  // embedding primitives
  ZeroVector,
  NonFiniteInput,
  DimensionMismatch,
  EmptySet,
  // probe
  MissingEmbedding,
  // stats
  InvalidProportion,
  NonPositiveN,
  MismatchedN,
  MismatchedSamples,
  DuplicateRow,
  // objective
  InvalidTemperature,
  InvalidInput,
  StepOutOfRange,
  // synth
  InvalidConfig,
  // io
  ParseError,
  DuplicateId,
  MissingFile,
  Io,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::ZeroVector: return "ZeroVector";
    case ErrorKind::NonFiniteInput: return "NonFiniteInput";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::EmptySet: return "EmptySet";
    case ErrorKind::MissingEmbedding: return "MissingEmbedding";
    case ErrorKind::InvalidProportion: return "InvalidProportion";
    case ErrorKind::NonPositiveN: return "NonPositiveN";
    case ErrorKind::MismatchedN: return "MismatchedN";
    case ErrorKind::MismatchedSamples: return "MismatchedSamples";
    case ErrorKind::DuplicateRow: return "DuplicateRow";
    case ErrorKind::InvalidTemperature: return "InvalidTemperature";
    case ErrorKind::InvalidInput: return "InvalidInput";
    case ErrorKind::StepOutOfRange: return "StepOutOfRange";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::DuplicateId: return "DuplicateId";
    case ErrorKind::MissingFile: return "MissingFile";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

/// Base exception for everything the toolkit reports. The kind is what
/// callers switch on; the message is for humans.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

  /// Validation problems exit with 1, I/O and parse problems with 2.
  int exit_code() const noexcept {
    switch (kind_) {
      case ErrorKind::ParseError:
      case ErrorKind::MissingFile:
      case ErrorKind::Io:
        return 2;
      default:
        return 1;
    }
  }

 private:
  ErrorKind kind_;
};

enum class ParseReason {
  BadMagic,
  UnsupportedVersion,
  TruncatedHeader,
  ZeroDim,
  ZeroTokens,
  TruncatedId,
  EmptyId,
  InvalidUtf8Id,
  TruncatedPayload,
  NonFiniteValue,
  TrailingGarbage,
  MalformedJson,
  SchemaViolation,
};

constexpr std::string_view to_string(ParseReason reason) {
  switch (reason) {
    case ParseReason::BadMagic: return "bad magic";
    case ParseReason::UnsupportedVersion: return "unsupported version";
    case ParseReason::TruncatedHeader: return "truncated header";
    case ParseReason::ZeroDim: return "zero dim";
    case ParseReason::ZeroTokens: return "zero token count";
    case ParseReason::TruncatedId: return "truncated image id";
    case ParseReason::EmptyId: return "empty image id";
    case ParseReason::InvalidUtf8Id: return "image id is not valid utf-8";
    case ParseReason::TruncatedPayload: return "truncated payload";
    case ParseReason::NonFiniteValue: return "non-finite value";
    case ParseReason::TrailingGarbage: return "trailing garbage";
    case ParseReason::MalformedJson: return "malformed json";
    case ParseReason::SchemaViolation: return "schema violation";
  }
  return "unknown";
}

/// Parse failure with the file and byte offset where it was detected.
class ParseError : public Error {
 public:
  ParseError(std::string file, std::uint64_t offset, ParseReason reason, const std::string& detail = {})
      : Error(ErrorKind::ParseError, describe(file, offset, reason, detail)),
        file_(std::move(file)),
        offset_(offset),
        reason_(reason),
        detail_(detail) {}

  const std::string& file() const noexcept { return file_; }
  std::uint64_t offset() const noexcept { return offset_; }
  ParseReason reason() const noexcept { return reason_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  static std::string describe(const std::string& file, std::uint64_t offset, ParseReason reason,
                              const std::string& detail) {
    std::string msg = file + " @ byte " + std::to_string(offset) + ": " + std::string(to_string(reason));
    if (!detail.empty()) msg += " (" + detail + ")";
    return msg;
  }

  std::string file_;
  std::uint64_t offset_;
  ParseReason reason_;
  std::string detail_;
};

}  // namespace lsc
