#include "lantern/policy.hpp"

#include <array>
#include <cmath>
#include <unordered_set>

namespace lantern {

PolicyGraph build_policy_graph(ad::Tape& tape, ParameterStore& store, const GeneratorConfig& cfg,
                               const DescendantTable& table, const Rollout& rollout, bool time_path) {
  const GeneratorNames names;
  const auto n = static_cast<Eigen::Index>(rollout.events.size());
  const auto d = static_cast<Eigen::Index>(cfg.embedding.dim);
  const std::size_t k_desc = table.k();
  if (n == 0) throw Error(Errc::EmptySequence, "policy replay of an empty rollout");
  if (rollout.drawn_slots.size() + 1 != rollout.events.size()) {
    throw Error(Errc::MalformedLocalNetwork, "rollout records " + std::to_string(rollout.drawn_slots.size()) +
                                                 " draws for " + std::to_string(n) + " events");
  }

  const EncoderVars enc = bind_encoder(tape, store, names, cfg.embedding, cfg.kind);
  const ad::Var w_c = tape.parameter(store.get(names.neighbor_weight()));
  const ad::Var w_n = tape.parameter(store.get(names.transition_weight()));
  const ad::Var b_n = tape.parameter(store.get(names.transition_bias()));
  const ad::Var w_t = tape.parameter(store.get(names.time_out_weight()));
  const ad::Var b_t = tape.parameter(store.get(names.time_out_bias()));

  std::vector<Eigen::Index> head(static_cast<std::size_t>(d)), tail(static_cast<std::size_t>(d));
  for (Eigen::Index i = 0; i < d; ++i) {
    head[static_cast<std::size_t>(i)] = i;
    tail[static_cast<std::size_t>(i)] = d + i;
  }

  ad::Matrix t(1, n);
  std::vector<MarkerId> markers;
  for (Eigen::Index i = 0; i < n; ++i) {
    t(0, i) = rollout.events[static_cast<std::size_t>(i)].time;
    markers.push_back(rollout.events[static_cast<std::size_t>(i)].marker);
  }
  const ad::Var h = intensity(enc, embed_events(enc, tape.constant(t), markers));

  // Shared neighbour distribution: only the d_j half of w_C matters.
  const ad::Var neighbor = ad::softmax(ad::matmul(ad::transpose(enc.marker_embedding), ad::row_select(w_c, head)));
  const ad::Var w_nh = ad::transpose(ad::row_select(w_n, head));
  const ad::Var w_nd = ad::row_select(w_n, tail);

  // Transition distributions per event, created on demand.
  std::vector<ad::Var> trans(static_cast<std::size_t>(n));
  auto transition = [&](std::size_t e) -> const ad::Var& {
    if (!trans[e].valid()) {
      const DescendantRow& row = table.row(markers[e]);
      std::vector<Eigen::Index> cols(row.markers.begin(), row.markers.end());
      const std::array<Eigen::Index, 1> col{static_cast<Eigen::Index>(e)};
      const ad::Var logits = ad::matmul(ad::transpose(ad::col_select(enc.marker_embedding, cols)), w_nd) +
                             (ad::matmul(w_nh, ad::col_select(h, col)) + b_n);
      trans[e] = ad::softmax(logits);
    }
    return trans[e];
  };

  std::vector<ad::Var> path(static_cast<std::size_t>(n));
  path[0] = tape.constant(1.0);
  auto slot_mass = [&](std::size_t slot) {
    const std::size_t parent = slot / k_desc;
    return ad::mul(path[parent], ad::element(transition(parent), static_cast<Eigen::Index>(slot % k_desc), 0));
  };

  PolicyGraph out;
  std::vector<char> drawn;
  std::unordered_set<MarkerId> seen{markers[0]};
  for (std::size_t k = 1; k < static_cast<std::size_t>(n); ++k) {
    const std::size_t slot = rollout.drawn_slots[k - 1];
    const std::size_t live = k * k_desc;  // slots created by events 0..k-1
    if (slot >= live) throw Error(Errc::MalformedLocalNetwork, "rollout drew a slot that did not exist yet");
    drawn.resize(live, 0);
    const MarkerId j = markers[k];
    ad::Var mass;
    for (std::size_t s = 0; s < live; ++s) {
      if (drawn[s] || table.row(markers[s / k_desc]).markers[s % k_desc] != j) continue;
      const ad::Var m = slot_mass(s);
      mass = mass.valid() ? mass + m : m;
    }
    const ad::Var log_q = ad::log(ad::element(neighbor, j, 0));
    out.log_pi.push_back(ad::add_constant(log_q + ad::log(mass), std::log(static_cast<double>(seen.size()))));
    path[k] = slot_mass(slot);
    drawn[slot] = 1;
    seen.insert(j);
  }

  if (!time_path) {
    out.times = tape.constant(t);
    return out;
  }
  std::vector<ad::Var> times{tape.constant(t(0, 0))};
  for (std::size_t k = 1; k < static_cast<std::size_t>(n); ++k) {
    const std::size_t src = cfg.time_input == TimeInput::Parent ? rollout.parents[k] : k - 1;
    const std::array<Eigen::Index, 1> col{static_cast<Eigen::Index>(src)};
    const ad::Var dt = ad::softplus(ad::matmul(w_t, ad::col_select(h, col)) + b_t);
    times.push_back(times.back() + dt);
  }
  out.times = ad::concat(times, 1);
  return out;
}

}  // namespace lantern
