#include <cmath>
#include <limits>
#include <set>

#include "doctest.h"
#include "lantern/simulator.hpp"
#include "oracles.hpp"

using namespace lantern;

TEST_CASE("p = 0 gives no edges; p = 1 gives every ordered pair") {
  SimulationConfig cfg;
  cfg.marker_count = 3;
  cfg.edge_probability = 0.0;
  Rng rng = make_stream(1, "network");
  CHECK(generate_network(cfg, rng).edge_count() == 0);
  cfg.edge_probability = 1.0;
  CHECK(generate_network(cfg, rng).edge_count() == 6);
}

TEST_CASE("edge count lies within 3 sd of its binomial mean") {
  SimulationConfig cfg;
  cfg.marker_count = 1000;
  cfg.edge_probability = 5e-3;
  Rng rng = make_stream(2, "network");
  const double n = 1000.0 * 999.0;
  const double mean = n * 5e-3;
  const double sd = std::sqrt(n * 5e-3 * (1 - 5e-3));
  CHECK(mean == doctest::Approx(4995.0));
  CHECK(std::abs(static_cast<double>(generate_network(cfg, rng).edge_count()) - mean) < 3 * sd);
}

TEST_CASE("Rayleigh quantiles") {
  CHECK(rayleigh_quantile({0.0, 1.0}, 0.0) == 0.0);
  CHECK(rayleigh_quantile({0.7, 3.0}, 0.0) == 0.7);
  CHECK(rayleigh_quantile({0.0, 1.0}, 0.5) == doctest::Approx(std::sqrt(std::log(2.0))).epsilon(1e-14));
  CHECK(rayleigh_quantile({0.0, 2.0}, 1.0 - std::exp(-1.0)) == doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("network without edges yields only the source") {
  SimulationConfig cfg;
  cfg.marker_count = 5;
  cfg.allow_isolated_sources = true;
  RelationNetwork net(5);
  Rng rng = make_stream(3, "cascades");
  const Cascade c = simulate_cascade(net, cfg, rng);
  CHECK(c.events.size() == 1);
  CHECK(c.events[0].time == 0.0);
}

TEST_CASE("two-node chain intervals pass a KS test against the Rayleigh CDF") {
  RelationNetwork net(2);
  net.add_edge(0, 1);
  SimulationConfig cfg;
  cfg.marker_count = 2;
  cfg.time_window = std::numeric_limits<double>::infinity();
  const auto adj = net.adjacency();
  std::vector<double> dt;
  Rng rng = make_stream(4, "cascades");
  for (int i = 0; i < 100000; ++i) {
    const Cascade c = simulate_cascade_from(adj, 0, cfg, rng);
    REQUIRE(c.events.size() == 2);
    dt.push_back(c.events[1].time - c.events[0].time);
  }
  const double d = oracle::ks_statistic(dt, [](double t) { return 1.0 - std::exp(-t * t); });
  CHECK(d < oracle::ks_critical(dt.size(), 0.01));
}

TEST_CASE("diamond network keeps the earliest arrival at the join") {
  RelationNetwork net(4);
  net.add_edge(0, 1);
  net.add_edge(0, 2);
  net.add_edge(1, 3);
  net.add_edge(2, 3);
  SimulationConfig cfg;
  cfg.marker_count = 4;
  cfg.time_window = 100.0;
  const auto adj = net.adjacency();
  const RayleighEdge e = cfg.delay;
  // Draw order: source pushes 0->1, 0->2; each later activation pushes its
  // out-edges in ascending id order.
  for (const auto& u : std::vector<std::array<double, 4>>{
           {0.1, 0.9, 0.2, 0.3}, {0.9, 0.1, 0.2, 0.3}, {0.5, 0.6, 0.95, 0.01}, {0.3, 0.31, 0.99, 0.99}}) {
    oracle::UniformTape tape{{u.begin(), u.end()}};
    const Cascade c = simulate_cascade_from(adj, 0, cfg, tape);
    REQUIRE(c.events.size() == 4);
    // Brute force: the two path arrival times at marker 3.
    const double t1 = rayleigh_quantile(e, u[0]);
    const double t2 = rayleigh_quantile(e, u[1]);
    const double first = std::min(t1, t2);
    const double via_first = first + rayleigh_quantile(e, u[2]);
    const double second = std::max(t1, t2);
    const double expected = second < via_first ? std::min(via_first, second + rayleigh_quantile(e, u[3])) : via_first;
    double got = -1.0;
    for (const auto& ev : c.events)
      if (ev.marker == 3) got = ev.time;
    CHECK(got == doctest::Approx(expected).epsilon(1e-15));
  }
}

TEST_CASE("generated datasets validate, respect structure and are deterministic") {
  SimulationConfig cfg;
  cfg.marker_count = 50;
  cfg.edge_probability = 0.05;
  cfg.sequence_count = 10;
  cfg.seed = 9;
  const SimulationResult a = generate_dataset(cfg);
  const SimulationResult b = generate_dataset(cfg);
  CHECK(a.dataset == b.dataset);
  REQUIRE(a.dataset.sequences.size() == 10);
  const RelationNetwork& net = *a.dataset.ground_truth;
  for (std::size_t s = 0; s < a.dataset.sequences.size(); ++s) {
    const auto& seq = a.dataset.sequences[s];
    CHECK_FALSE(validate_sequence(seq, cfg.marker_count).has_value());
    std::set<MarkerId> seen;
    for (std::size_t k = 0; k < seq.size(); ++k) {
      CHECK(seen.insert(seq[k].marker).second);
      if (k == 0) continue;
      CHECK(seq[k].time > seq[k - 1].time);
      const int parent = a.parents[s][k];
      REQUIRE(parent >= 0);
      CHECK(static_cast<std::size_t>(parent) < k);
      CHECK(net.has_edge(seq[static_cast<std::size_t>(parent)].marker, seq[k].marker));
    }
  }
}

TEST_CASE("large synthetic config completes with distinct markers per sequence") {
  SimulationConfig cfg;  // M=1000, p=5e-3, 10000 sequences
  const SimulationResult r = generate_dataset(cfg);
  CHECK(r.dataset.sequences.size() == 10000);
  bool distinct = true;
  for (const auto& seq : r.dataset.sequences) {
    std::set<MarkerId> seen;
    for (const auto& e : seq) distinct = distinct && seen.insert(e.marker).second;
  }
  CHECK(distinct);
}

TEST_CASE("sources have out-degree >= 1 unless isolated sources are allowed") {
  SimulationConfig cfg;
  cfg.marker_count = 30;
  cfg.edge_probability = 0.02;
  cfg.sequence_count = 200;
  const SimulationResult r = generate_dataset(cfg);
  const auto adj = r.dataset.ground_truth->adjacency();
  for (const auto& seq : r.dataset.sequences) CHECK_FALSE(adj[static_cast<std::size_t>(seq[0].marker)].empty());
}

TEST_CASE("cascades are capped at max_length") {
  SimulationConfig cfg;
  cfg.marker_count = 40;
  cfg.edge_probability = 1.0;
  cfg.max_length = 7;
  cfg.sequence_count = 5;
  const SimulationResult r = generate_dataset(cfg);
  for (const auto& seq : r.dataset.sequences) CHECK(seq.size() <= 7);
  CHECK(r.truncated > 0);
}
