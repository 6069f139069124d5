#include "lantern/error.hpp"

namespace lantern {

std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::DecreasingTime: return "DecreasingTime";
    case Errc::MarkerOutOfRange: return "MarkerOutOfRange";
    case Errc::EmptySequence: return "EmptySequence";
    case Errc::ParseError: return "ParseError";
    case Errc::IoError: return "IoError";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::NonScalarRoot: return "NonScalarRoot";
    case Errc::KTooLarge: return "KTooLarge";
    case Errc::MissingDescendantRow: return "MissingDescendantRow";
    case Errc::MalformedLocalNetwork: return "MalformedLocalNetwork";
    case Errc::DegenerateDistribution: return "DegenerateDistribution";
    case Errc::EmptyPrefix: return "EmptyPrefix";
    case Errc::SourceMismatch: return "SourceMismatch";
    case Errc::MarkerCountMismatch: return "MarkerCountMismatch";
    case Errc::PrefixMarkerNotReachable: return "PrefixMarkerNotReachable";
    case Errc::ConfigError: return "ConfigError";
    case Errc::NonFiniteLoss: return "NonFiniteLoss";
  }
  return "Unknown";
}

}  // namespace lantern
