#include "lantern/types.hpp"

#include <cmath>
#include <string>

namespace lantern {

void RelationNetwork::add_edge(MarkerId from, MarkerId to) {
  const auto m = static_cast<MarkerId>(marker_count_);
  if (from < 0 || to < 0 || from >= m || to >= m) {
    throw Error(Errc::MarkerOutOfRange, "edge " + std::to_string(from) + " " + std::to_string(to) +
                                            " outside marker count " + std::to_string(marker_count_));
  }
  if (from == to) throw Error(Errc::MarkerOutOfRange, "self-loop on marker " + std::to_string(from));
  edges_.emplace(from, to);
}

std::vector<std::vector<MarkerId>> RelationNetwork::adjacency() const {
  std::vector<std::vector<MarkerId>> adj(marker_count_);
  for (const auto& [i, j] : edges_) adj[static_cast<std::size_t>(i)].push_back(j);
  return adj;
}

std::optional<Error> validate_sequence(std::span<const Event> seq, std::size_t marker_count) {
  if (seq.empty()) return Error(Errc::EmptySequence, "sequence has no events");
  for (std::size_t k = 0; k < seq.size(); ++k) {
    const Event& e = seq[k];
    if (e.marker < 0 || static_cast<std::size_t>(e.marker) >= marker_count) {
      return Error(Errc::MarkerOutOfRange, "event " + std::to_string(k) + " marker " + std::to_string(e.marker) +
                                               " >= " + std::to_string(marker_count));
    }
    if (!std::isfinite(e.time) || e.time < 0.0) {
      return Error(Errc::DecreasingTime, "event " + std::to_string(k) + " has invalid time");
    }
    if (k > 0 && e.time < seq[k - 1].time) {
      return Error(Errc::DecreasingTime, "event " + std::to_string(k) + " earlier than its predecessor");
    }
  }
  return std::nullopt;
}

void check_sequence(std::span<const Event> seq, std::size_t marker_count) {
  if (auto err = validate_sequence(seq, marker_count)) throw *err;
}

}  // namespace lantern
