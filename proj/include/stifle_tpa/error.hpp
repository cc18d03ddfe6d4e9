#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace stifle_tpa {

enum class ErrorKind {
  DegenerateGeometry,
  InvalidThresholds,
  InvalidInput,
  ParseError,
  MissingRole,
  IoError,
  GeometryOutOfBounds,
  InvalidInterval,
  EmptyComparison,
  UnknownVariant,
  MissingImage,
};

constexpr std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::DegenerateGeometry: return "DegenerateGeometry";
    case ErrorKind::InvalidThresholds: return "InvalidThresholds";
    case ErrorKind::InvalidInput: return "InvalidInput";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::MissingRole: return "MissingRole";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::GeometryOutOfBounds: return "GeometryOutOfBounds";
    case ErrorKind::InvalidInterval: return "InvalidInterval";
    case ErrorKind::EmptyComparison: return "EmptyComparison";
    case ErrorKind::UnknownVariant: return "UnknownVariant";
    case ErrorKind::MissingImage: return "MissingImage";
  }
  return "Unknown";
}

/// Base exception for every failure the pipeline reports. The kind is what
/// report cells and exit paths key on; the message is for humans.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace stifle_tpa
