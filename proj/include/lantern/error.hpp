#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace lantern {

enum class Errc {
  DecreasingTime,
  MarkerOutOfRange,
  EmptySequence,
  ParseError,
  IoError,
  ShapeMismatch,
  NonScalarRoot,
  KTooLarge,
  MissingDescendantRow,
  MalformedLocalNetwork,
  DegenerateDistribution,
  EmptyPrefix,
  SourceMismatch,
  MarkerCountMismatch,
  PrefixMarkerNotReachable,
  ConfigError,
  NonFiniteLoss,
};

std::string_view to_string(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

// Parse failures carry the 1-based line number of the offending input.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error(Errc::ParseError, "line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace lantern
