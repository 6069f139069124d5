#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <queue>
#include <vector>

#include "lantern/rng.hpp"
#include "lantern/types.hpp"

namespace lantern {

/// Shifted Rayleigh delay: CDF 1 - exp(-((t - a) / b)^2) for t >= a.
struct RayleighEdge {
  double a = 0.0;
  double b = 1.0;
};

/// Inverse-CDF draw for a given u in [0, 1).
inline double rayleigh_quantile(const RayleighEdge& edge, double u) {
  return edge.a + edge.b * std::sqrt(-std::log1p(-u));
}

template <typename Gen>
double sample_rayleigh(const RayleighEdge& edge, Gen& gen) {
  return rayleigh_quantile(edge, uniform01(gen));
}

struct SimulationConfig {
  std::size_t marker_count = 1000;
  double edge_probability = 5e-3;
  double time_window = 10.0;
  std::size_t sequence_count = 10000;
  RayleighEdge delay{};
  std::uint64_t seed = 0;
  bool allow_isolated_sources = false;
  std::size_t max_length = 128;

  void validate() const;
};

/// A cascade plus the simulator's internal parent index per event.
struct Cascade {
  EventSequence events;
  std::vector<int> parents;
  bool truncated = false;
};

RelationNetwork generate_network(const SimulationConfig& cfg, Rng& rng);

/// Markers eligible as cascade sources under cfg.allow_isolated_sources.
std::vector<MarkerId> source_candidates(const RelationNetwork& net, const SimulationConfig& cfg);

/// Runs one cascade from `source` at time 0. The earliest tentative activation
/// is committed repeatedly; a marker fires at most once and keeps the smallest
/// time over all parents; the cascade stops when the next time exceeds the
/// window, nothing is pending, or max_length events exist.
template <typename Gen>
Cascade simulate_cascade_from(const std::vector<std::vector<MarkerId>>& adjacency, MarkerId source,
                              const SimulationConfig& cfg, Gen& gen) {
  struct Pending {
    double time;
    MarkerId marker;
    int parent;
    std::uint64_t order;
    bool operator>(const Pending& o) const { return time != o.time ? time > o.time : order > o.order; }
  };
  std::priority_queue<Pending, std::vector<Pending>, std::greater<>> heap;
  std::vector<char> active(adjacency.size(), 0);
  std::uint64_t order = 0;

  Cascade out;
  auto activate = [&](double t, MarkerId m, int parent) {
    active[static_cast<std::size_t>(m)] = 1;
    out.events.push_back({t, m});
    out.parents.push_back(parent);
    const int index = static_cast<int>(out.events.size()) - 1;
    for (MarkerId child : adjacency[static_cast<std::size_t>(m)]) {
      if (active[static_cast<std::size_t>(child)]) continue;
      heap.push({t + sample_rayleigh(cfg.delay, gen), child, index, order++});
    }
  };

  activate(0.0, source, -1);
  while (!heap.empty()) {
    const Pending next = heap.top();
    heap.pop();
    if (active[static_cast<std::size_t>(next.marker)]) continue;
    if (next.time > cfg.time_window) break;
    if (out.events.size() >= cfg.max_length) {
      out.truncated = true;
      break;
    }
    activate(next.time, next.marker, next.parent);
  }
  return out;
}

template <typename Gen>
Cascade simulate_cascade(const RelationNetwork& net, const SimulationConfig& cfg, Gen& gen) {
  const auto candidates = source_candidates(net, cfg);
  const MarkerId source = candidates[uniform_index(gen, candidates.size())];
  return simulate_cascade_from(net.adjacency(), source, cfg, gen);
}

struct SimulationResult {
  Dataset dataset;
  std::vector<std::vector<int>> parents;
  std::size_t truncated = 0;
};

/// One network from stream "network", cascade c from stream ("cascades", c).
SimulationResult generate_dataset(const SimulationConfig& cfg);

}  // namespace lantern
