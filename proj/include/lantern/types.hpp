#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <utility>
#include <vector>

#include "lantern/error.hpp"

namespace lantern {

/// Dense marker index in [0, M).
using MarkerId = std::int32_t;

struct Event {
  double time = 0.0;
  MarkerId marker = 0;

  friend bool operator==(const Event&, const Event&) = default;
};

/// Ordered events; element 0 is the source event.
using EventSequence = std::vector<Event>;

/// Directed marker graph. An edge (i, j) means events of marker i can cause
/// events of marker j.
class RelationNetwork {
 public:
  using Edge = std::pair<MarkerId, MarkerId>;

  RelationNetwork() = default;
  explicit RelationNetwork(std::size_t marker_count) : marker_count_(marker_count) {}

  std::size_t marker_count() const noexcept { return marker_count_; }
  const std::set<Edge>& edges() const noexcept { return edges_; }
  std::size_t edge_count() const noexcept { return edges_.size(); }

  /// Throws MarkerOutOfRange for bad endpoints or self-loops.
  void add_edge(MarkerId from, MarkerId to);
  bool has_edge(MarkerId from, MarkerId to) const { return edges_.contains({from, to}); }

  /// Out-neighbours of every marker, each list ascending.
  std::vector<std::vector<MarkerId>> adjacency() const;

  friend bool operator==(const RelationNetwork&, const RelationNetwork&) = default;

 private:
  std::size_t marker_count_ = 0;
  std::set<Edge> edges_;
};

struct Dataset {
  std::size_t marker_count = 0;
  std::vector<EventSequence> sequences;
  std::optional<RelationNetwork> ground_truth;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Returns nothing when the sequence is non-empty, time-ordered (ties allowed,
/// all times >= 0) and every marker is below marker_count.
std::optional<Error> validate_sequence(std::span<const Event> seq, std::size_t marker_count);

/// Throwing form of validate_sequence.
void check_sequence(std::span<const Event> seq, std::size_t marker_count);

}  // namespace lantern
