#include "lantern/simulator.hpp"

#include "lantern/log.hpp"

namespace lantern {

void SimulationConfig::validate() const {
  if (marker_count < 1) throw Error(Errc::ConfigError, "marker_count must be >= 1");
  if (!(edge_probability >= 0.0 && edge_probability <= 1.0)) {
    throw Error(Errc::ConfigError, "edge probability must be in [0, 1]");
  }
  if (!(time_window > 0.0)) throw Error(Errc::ConfigError, "time window must be > 0");
  if (sequence_count < 1) throw Error(Errc::ConfigError, "sequence count must be >= 1");
  if (!(delay.b > 0.0)) throw Error(Errc::ConfigError, "rayleigh scale b must be > 0");
  if (max_length < 1) throw Error(Errc::ConfigError, "max_length must be >= 1");
}

RelationNetwork generate_network(const SimulationConfig& cfg, Rng& rng) {
  RelationNetwork net(cfg.marker_count);
  if (cfg.edge_probability <= 0.0) return net;
  const auto m = static_cast<MarkerId>(cfg.marker_count);
  for (MarkerId i = 0; i < m; ++i) {
    for (MarkerId j = 0; j < m; ++j) {
      if (i == j) continue;
      if (uniform01(rng) < cfg.edge_probability) net.add_edge(i, j);
    }
  }
  return net;
}

std::vector<MarkerId> source_candidates(const RelationNetwork& net, const SimulationConfig& cfg) {
  std::vector<MarkerId> all(net.marker_count());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<MarkerId>(i);
  if (cfg.allow_isolated_sources) return all;
  std::vector<char> has_out(net.marker_count(), 0);
  for (const auto& [i, j] : net.edges()) has_out[static_cast<std::size_t>(i)] = 1;
  std::vector<MarkerId> out;
  for (MarkerId m : all)
    if (has_out[static_cast<std::size_t>(m)]) out.push_back(m);
  return out.empty() ? all : out;
}

SimulationResult generate_dataset(const SimulationConfig& cfg) {
  cfg.validate();
  Rng net_rng = make_stream(cfg.seed, "network");
  RelationNetwork net = generate_network(cfg, net_rng);
  const auto adjacency = net.adjacency();
  const auto candidates = source_candidates(net, cfg);

  SimulationResult result;
  result.dataset.marker_count = cfg.marker_count;
  result.dataset.sequences.reserve(cfg.sequence_count);
  result.parents.reserve(cfg.sequence_count);
  for (std::size_t c = 0; c < cfg.sequence_count; ++c) {
    Rng rng = make_stream(cfg.seed, "cascades", c);
    const MarkerId source = candidates[uniform_index(rng, candidates.size())];
    Cascade cascade = simulate_cascade_from(adjacency, source, cfg, rng);
    if (cascade.truncated) ++result.truncated;
    result.dataset.sequences.push_back(std::move(cascade.events));
    result.parents.push_back(std::move(cascade.parents));
  }
  if (result.truncated > 0) {
    log_warn("simulate: ", result.truncated, " cascade(s) truncated at max_length=", cfg.max_length);
  }
  result.dataset.ground_truth = std::move(net);
  return result;
}

}  // namespace lantern
