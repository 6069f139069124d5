#include "lantern/generator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace lantern {

namespace {

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

Vector softmax(const Vector& logits) {
  const double mx = logits.maxCoeff();
  Vector p = (logits.array() - mx).exp().matrix();
  return p / p.sum();
}

constexpr double kDriftLimit = 1e-6;

}  // namespace

void GeneratorConfig::validate(std::size_t marker_count) const {
  embedding.validate();
  if (descendants < 1) throw Error(Errc::ConfigError, "descendant count K must be >= 1");
  if (descendants >= marker_count) {
    throw Error(Errc::KTooLarge, "K=" + std::to_string(descendants) + " needs more than " +
                                     std::to_string(marker_count) + " markers");
  }
  if (renormalize_every < 1) throw Error(Errc::ConfigError, "renormalize_every must be >= 1");
}

void add_generator_parameters(ParameterStore& store, std::size_t marker_count, const GeneratorConfig& cfg, Rng& rng) {
  const GeneratorNames names;
  add_encoder_parameters(store, names, marker_count, cfg.embedding, cfg.kind, rng);
  const auto d = static_cast<Eigen::Index>(cfg.embedding.dim);
  const double sd = 1.0 / std::sqrt(static_cast<double>(cfg.embedding.dim));
  store.add(names.neighbor_weight(), gaussian_matrix(2 * d, 1, sd, rng));
  store.add(names.transition_weight(), gaussian_matrix(2 * d, 1, sd, rng));
  store.add(names.transition_bias(), ad::Matrix::Zero(1, 1));
  store.add(names.time_out_weight(), gaussian_matrix(1, d, sd, rng));
  store.add(names.time_out_bias(), ad::Matrix::Zero(1, 1));
}

Vector neighbor_distribution(MarkerId i, const ParameterStore& store, const GeneratorConfig& cfg) {
  const GeneratorNames names;
  const ad::Matrix& w = store.get(names.marker_embedding()).value();
  if (i < 0 || i >= w.cols()) throw Error(Errc::MarkerOutOfRange, "marker " + std::to_string(i));
  const auto d = static_cast<Eigen::Index>(cfg.embedding.dim);
  const ad::Matrix& wc = store.get(names.neighbor_weight()).value();
  const Vector logits = (wc.topRows(d).transpose() * w).transpose().array() + wc.bottomRows(d).col(0).dot(w.col(i));
  return softmax(logits);
}

Vector shared_neighbor_distribution(const ParameterStore& store, const GeneratorConfig& cfg) {
  const GeneratorNames names;
  const ad::Matrix& w = store.get(names.marker_embedding()).value();
  const auto d = static_cast<Eigen::Index>(cfg.embedding.dim);
  const ad::Matrix& wc = store.get(names.neighbor_weight()).value();
  return softmax((wc.topRows(d).transpose() * w).transpose());
}

DescendantRow sample_descendants(MarkerId i, std::size_t k, const Vector& distribution, Rng& rng) {
  const auto m = static_cast<std::size_t>(distribution.size());
  if (k >= m) throw Error(Errc::KTooLarge, "K=" + std::to_string(k) + " with M=" + std::to_string(m));
  DescendantRow row;
  std::vector<char> taken(m, 0);
  taken[static_cast<std::size_t>(i)] = 1;

  // Rejection against a shared cumulative table is O(K log M) when mass is
  // spread out; fall back to exact sequential draws otherwise.
  std::vector<double> cdf(m);
  std::partial_sum(distribution.data(), distribution.data() + m, cdf.begin());
  const double total = cdf.back();
  std::size_t rejections = 0;
  while (row.markers.size() < k && rejections < 32 * (k + 1)) {
    const double u = uniform01(rng) * total;
    auto j = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
    if (j >= m) j = m - 1;
    if (taken[j] || distribution(static_cast<Eigen::Index>(j)) <= 0.0) {
      ++rejections;
      continue;
    }
    taken[j] = 1;
    row.markers.push_back(static_cast<MarkerId>(j));
  }
  while (row.markers.size() < k) {
    double rest = 0.0;
    for (std::size_t j = 0; j < m; ++j)
      if (!taken[j]) rest += distribution(static_cast<Eigen::Index>(j));
    std::size_t pick = m;
    if (rest > 0.0) {
      double u = uniform01(rng) * rest;
      for (std::size_t j = 0; j < m; ++j) {
        if (taken[j]) continue;
        pick = j;
        u -= distribution(static_cast<Eigen::Index>(j));
        if (u < 0.0) break;
      }
    } else {
      for (std::size_t j = 0; j < m && pick == m; ++j)
        if (!taken[j]) pick = j;
    }
    taken[pick] = 1;
    row.markers.push_back(static_cast<MarkerId>(pick));
  }
  for (MarkerId j : row.markers) row.probabilities.push_back(distribution(j));
  return row;
}

DescendantRow sample_descendants(MarkerId i, std::size_t k, const ParameterStore& store, const GeneratorConfig& cfg,
                                 Rng& rng) {
  return sample_descendants(i, k, neighbor_distribution(i, store, cfg), rng);
}

DescendantTable::DescendantTable(std::size_t marker_count, std::size_t k) : k_(k), rows_(marker_count) {
  if (k >= marker_count) throw Error(Errc::KTooLarge, "K=" + std::to_string(k) + " with M=" + std::to_string(marker_count));
}

void DescendantTable::refresh(const ParameterStore& store, const GeneratorConfig& cfg, std::uint64_t seed,
                              std::uint64_t epoch) {
  if (epoch_ && *epoch_ == epoch) return;
  const Vector q = shared_neighbor_distribution(store, cfg);
  Rng rng = make_stream(seed, "descendants", epoch);
  for (std::size_t i = 0; i < rows_.size(); ++i) rows_[i] = sample_descendants(static_cast<MarkerId>(i), k_, q, rng);
  epoch_ = epoch;
}

void DescendantTable::fill_top_k(const ParameterStore& store, const GeneratorConfig& cfg) {
  const Vector q = shared_neighbor_distribution(store, cfg);
  std::vector<MarkerId> order(rows_.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](MarkerId a, MarkerId b) { return q(a) > q(b); });
  for (std::size_t i = 0; i < rows_.size(); ++i) {
    DescendantRow row;
    for (MarkerId j : order) {
      if (row.markers.size() == k_) break;
      if (static_cast<std::size_t>(j) == i) continue;
      row.markers.push_back(j);
      row.probabilities.push_back(q(j));
    }
    rows_[i] = std::move(row);
  }
  epoch_.reset();
}

void DescendantTable::set_row(MarkerId i, DescendantRow row) {
  if (i < 0 || static_cast<std::size_t>(i) >= rows_.size()) throw Error(Errc::MarkerOutOfRange, "row " + std::to_string(i));
  if (row.probabilities.size() != row.markers.size()) row.probabilities.assign(row.markers.size(), 0.0);
  rows_[static_cast<std::size_t>(i)] = std::move(row);
}

bool DescendantTable::has_row(MarkerId i) const {
  return i >= 0 && static_cast<std::size_t>(i) < rows_.size() && rows_[static_cast<std::size_t>(i)].has_value();
}

const DescendantRow& DescendantTable::row(MarkerId i) const {
  if (!has_row(i)) throw Error(Errc::MissingDescendantRow, "no descendant row for marker " + std::to_string(i));
  return *rows_[static_cast<std::size_t>(i)];
}

Vector transition_probs(const Vector& h, const DescendantRow& row, const ParameterStore& store,
                        const GeneratorConfig& cfg) {
  const GeneratorNames names;
  const auto d = static_cast<Eigen::Index>(cfg.embedding.dim);
  const ad::Matrix& w = store.get(names.marker_embedding()).value();
  const ad::Matrix& wn = store.get(names.transition_weight()).value();
  const double bn = store.get(names.transition_bias()).value()(0, 0);
  if (row.markers.empty()) throw Error(Errc::MissingDescendantRow, "empty descendant row");
  Vector logits(static_cast<Eigen::Index>(row.markers.size()));
  const double hpart = wn.topRows(d).col(0).dot(h);
  for (std::size_t u = 0; u < row.markers.size(); ++u) {
    logits(static_cast<Eigen::Index>(u)) = hpart + wn.bottomRows(d).col(0).dot(w.col(row.markers[u])) + bn;
  }
  return softmax(logits);
}

double estimate_time_delta(const Vector& h, const ParameterStore& store) {
  const GeneratorNames names;
  const ad::Matrix& w = store.get(names.time_out_weight()).value();
  const double b = store.get(names.time_out_bias()).value()(0, 0);
  return softplus((w * h)(0, 0) + b);
}

// ---------------------------------------------------------------------------
// LocalRelationNetwork

void LocalRelationNetwork::reset(MarkerId source, std::span<const MarkerId> descendants,
                                 std::span<const double> probabilities) {
  events_.clear();
  slots_.clear();
  fenwick_ = FenwickTree();
  marker_mass_.clear();
  leaf_count_ = 0;
  events_.push_back({source, -1, 1.0, 0, 0});
  add_slots(0, descendants, probabilities);
}

void LocalRelationNetwork::add_slots(std::size_t parent, std::span<const MarkerId> descendants,
                                     std::span<const double> probabilities) {
  if (descendants.size() != probabilities.size()) {
    throw Error(Errc::MalformedLocalNetwork, "descendant and probability lists differ in length");
  }
  LocalEvent& ev = events_[parent];
  ev.first_slot = slots_.size();
  ev.slot_count = descendants.size();
  for (std::size_t u = 0; u < descendants.size(); ++u) {
    const double mass = ev.path_mass * probabilities[u];
    slots_.push_back({descendants[u], parent, probabilities[u], mass, -1});
    fenwick_.push_back(mass);
    marker_mass_[descendants[u]] += mass;
    ++leaf_count_;
  }
}

void LocalRelationNetwork::set_mass(std::size_t slot, double mass) {
  FrontierSlot& s = slots_[slot];
  marker_mass_[s.marker] += mass - s.mass;
  s.mass = mass;
  fenwick_.set(slot, mass);
}

double LocalRelationNetwork::commit(std::size_t slot, std::span<const MarkerId> descendants,
                                    std::span<const double> probabilities) {
  if (slot >= slots_.size() || slots_[slot].child >= 0) {
    throw Error(Errc::MalformedLocalNetwork, "slot " + std::to_string(slot) + " is not a frontier leaf");
  }
  const FrontierSlot& s = slots_[slot];
  const double b = events_[s.parent].path_mass * s.probability;
  // The drawn path now ends at an existing event, so the leaf gives up its
  // whole mass b (exactly, up to renormalisation rounding).
  set_mass(slot, 0.0);
  --leaf_count_;
  const std::size_t index = events_.size();
  slots_[slot].child = static_cast<std::int64_t>(index);
  events_.push_back({s.marker, static_cast<std::int64_t>(slot), b, 0, 0});
  add_slots(index, descendants, probabilities);
  return b;
}

std::size_t LocalRelationNetwork::force_insert(MarkerId marker, std::size_t parent, double probability,
                                               std::span<const MarkerId> descendants,
                                               std::span<const double> probabilities) {
  if (parent >= events_.size()) throw Error(Errc::MalformedLocalNetwork, "forced parent does not exist");
  const std::size_t slot = slots_.size();
  const std::size_t index = events_.size();
  slots_.push_back({marker, parent, probability, 0.0, static_cast<std::int64_t>(index)});
  fenwick_.push_back(0.0);
  events_.push_back({marker, static_cast<std::int64_t>(slot), events_[parent].path_mass * probability, 0, 0});
  add_slots(index, descendants, probabilities);
  renormalize();
  return index;
}

std::size_t LocalRelationNetwork::draw(double u) const {
  const double total = fenwick_.total();
  if (!(total > 0.0)) throw Error(Errc::DegenerateDistribution, "frontier has no mass");
  const double target = u * total;
  std::size_t i = fenwick_.find(target);
  if (i < slots_.size() && slots_[i].child < 0 && slots_[i].mass > 0.0) return i;
  // Rounding in the tree can land on an emptied slot; resolve by a scan.
  double acc = 0.0;
  std::size_t last = slots_.size();
  for (std::size_t s = 0; s < slots_.size(); ++s) {
    if (slots_[s].child >= 0 || slots_[s].mass <= 0.0) continue;
    last = s;
    acc += slots_[s].mass;
    if (target < acc) return s;
  }
  if (last == slots_.size()) throw Error(Errc::DegenerateDistribution, "frontier has no positive slot");
  return last;
}

std::optional<std::size_t> LocalRelationNetwork::draw_excluding(double u,
                                                                const std::unordered_map<MarkerId, bool>& excluded) const {
  auto allowed = [&](const FrontierSlot& s) {
    return s.child < 0 && s.mass > 0.0 && !excluded.contains(s.marker);
  };
  double total = 0.0;
  for (const auto& s : slots_)
    if (allowed(s)) total += s.mass;
  if (!(total > 0.0)) return std::nullopt;
  const double target = u * total;
  double acc = 0.0;
  std::optional<std::size_t> last;
  for (std::size_t i = 0; i < slots_.size(); ++i) {
    if (!allowed(slots_[i])) continue;
    last = i;
    acc += slots_[i].mass;
    if (target < acc) return i;
  }
  return last;
}

double LocalRelationNetwork::exact_total_mass() const {
  double sum = 0.0, c = 0.0;
  for (const auto& s : slots_) {
    if (s.child >= 0) continue;
    const double y = s.mass - c;
    const double t = sum + y;
    c = (t - sum) - y;
    sum = t;
  }
  return sum;
}

double LocalRelationNetwork::marker_mass(MarkerId marker) const {
  auto it = marker_mass_.find(marker);
  return it == marker_mass_.end() ? 0.0 : std::max(0.0, it->second);
}

void LocalRelationNetwork::renormalize() {
  const double z = exact_total_mass();
  if (!(z > 0.0)) throw Error(Errc::DegenerateDistribution, "cannot renormalise an empty frontier");
  std::vector<double> masses(slots_.size(), 0.0);
  marker_mass_.clear();
  for (std::size_t i = 0; i < slots_.size(); ++i) {
    FrontierSlot& s = slots_[i];
    s.mass = s.child >= 0 ? 0.0 : s.mass / z;
    masses[i] = s.mass;
    if (s.child < 0) marker_mass_[s.marker] += s.mass;
  }
  for (auto& e : events_) e.path_mass /= z;
  fenwick_.rebuild(masses);
}

void LocalRelationNetwork::check_invariants() const {
  auto fail = [](const std::string& what) { throw Error(Errc::MalformedLocalNetwork, what); };
  if (events_.empty()) fail("no source event");
  if (events_[0].origin_slot != -1) fail("source has an origin slot");
  for (std::size_t k = 0; k < events_.size(); ++k) {
    const LocalEvent& e = events_[k];
    if (k > 0) {
      if (e.origin_slot < 0 || static_cast<std::size_t>(e.origin_slot) >= slots_.size()) fail("event without origin");
      const FrontierSlot& origin = slots_[static_cast<std::size_t>(e.origin_slot)];
      if (origin.child != static_cast<std::int64_t>(k)) fail("origin slot does not point back to its event");
      if (origin.parent >= k) fail("event descends from a later event");
      if (origin.marker != e.marker) fail("event marker differs from its origin slot");
    }
    if (e.first_slot + e.slot_count > slots_.size()) fail("slot range out of bounds");
    for (std::size_t s = e.first_slot; s < e.first_slot + e.slot_count; ++s) {
      if (slots_[s].parent != k) fail("slot range of an event contains foreign slots");
    }
  }
  for (std::size_t i = 0; i < slots_.size(); ++i) {
    const FrontierSlot& s = slots_[i];
    if (s.parent >= events_.size()) fail("slot hangs off a non-existing event");
    if (s.mass < 0.0) fail("negative slot mass");
    if (s.child >= 0) {
      if (static_cast<std::size_t>(s.child) >= events_.size()) fail("slot child out of range");
      if (events_[static_cast<std::size_t>(s.child)].origin_slot != static_cast<std::int64_t>(i)) {
        fail("committed slot child mismatch");
      }
      if (s.mass != 0.0) fail("committed slot keeps mass");
    }
  }
}

// ---------------------------------------------------------------------------
// GenerationState

GenerationState::GenerationState(const ParameterStore& store, const GeneratorConfig& cfg, const DescendantTable& table,
                                 const Vector& neighbor_probs)
    : store_(&store),
      cfg_(cfg),
      table_(&table),
      neighbor_probs_(&neighbor_probs),
      intensity_(store, GeneratorNames(), cfg.embedding, cfg.kind) {
  const GeneratorNames names;
  const auto d = static_cast<Eigen::Index>(cfg.embedding.dim);
  marker_embedding_ = &store.get(names.marker_embedding()).value();
  const ad::Matrix& wn = store.get(names.transition_weight()).value();
  transition_h_ = wn.topRows(d).col(0);
  transition_d_ = wn.bottomRows(d).col(0);
  transition_bias_ = store.get(names.transition_bias()).value()(0, 0);
  time_out_weight_ = store.get(names.time_out_weight()).value().row(0);
  time_out_bias_ = store.get(names.time_out_bias()).value()(0, 0);
}

double GenerationState::score(const Vector& h, MarkerId marker) const {
  return transition_h_.dot(h) + transition_d_.dot(marker_embedding_->col(marker)) + transition_bias_;
}

Vector GenerationState::row_probs(const Vector& h, const DescendantRow& row) const {
  Vector logits(static_cast<Eigen::Index>(row.markers.size()));
  for (std::size_t u = 0; u < row.markers.size(); ++u) logits(static_cast<Eigen::Index>(u)) = score(h, row.markers[u]);
  return softmax(logits);
}

void GenerationState::mark_active(MarkerId marker) {
  if (!active_.contains(marker)) {
    active_.emplace(marker, true);
    ++distinct_markers_;
  }
}

void GenerationState::start(const Event& source) {
  intensity_.reset();
  events_.assign(1, source);
  parents_.assign(1, 0);
  active_.clear();
  distinct_markers_ = 0;
  steps_since_renorm_ = 0;
  max_drift_ = 0.0;
  mark_active(source.marker);
  const Vector& h0 = intensity_.append(source);
  const DescendantRow& row = table_->row(source.marker);
  const Vector p = row_probs(h0, row);
  network_.reset(source.marker, row.markers, std::span<const double>(p.data(), static_cast<std::size_t>(p.size())));
  check_mass();
  if (check_structure) network_.check_invariants();
}

double GenerationState::log_pi_of(MarkerId marker) const {
  // Neighbour part: sum over distinct existing markers of p(marker in N_i); every
  // i shares the same distribution.
  const double neighbor = static_cast<double>(distinct_markers_) * (*neighbor_probs_)(marker);
  return std::log(neighbor) + std::log(network_.marker_mass(marker));
}

double GenerationState::candidate_time(std::size_t slot) const {
  const std::size_t parent = network_.slots()[slot].parent;
  const std::size_t src = cfg_.time_input == TimeInput::Parent ? parent : events_.size() - 1;
  const double dt = softplus(time_out_weight_.dot(intensity_.h(src)) + time_out_bias_);
  return events_.back().time + dt;
}

GenerationState::Step GenerationState::commit(std::size_t slot, std::optional<double> time) {
  const FrontierSlot s = network_.slots().at(slot);
  Step out{};
  out.marker = s.marker;
  out.parent = s.parent;
  out.slot = slot;
  out.log_pi = log_pi_of(s.marker);
  out.time = time ? *time : candidate_time(slot);

  const Event ev{out.time, out.marker};
  const Vector& h = intensity_.append(ev);
  const DescendantRow& row = table_->row(ev.marker);
  const Vector p = row_probs(h, row);
  out.b = network_.commit(slot, row.markers, std::span<const double>(p.data(), static_cast<std::size_t>(p.size())));
  events_.push_back(ev);
  parents_.push_back(s.parent);
  mark_active(ev.marker);
  check_mass();
  if (check_structure) network_.check_invariants();
  return out;
}

void GenerationState::observe(const Event& event) {
  // Heaviest frontier leaf carrying the observed marker, if any.
  std::optional<std::size_t> best;
  const auto& slots = network_.slots();
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (slots[i].child >= 0 || slots[i].marker != event.marker || slots[i].mass <= 0.0) continue;
    if (!best || slots[i].mass > slots[*best].mass) best = i;
  }
  if (best) {
    commit(*best, event.time);
    return;
  }
  // Not reachable through the sampled frontier: attach it under the existing
  // event whose transition score for this marker is highest.
  std::size_t parent = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t n = 0; n < events_.size(); ++n) {
    const double sc = score(intensity_.h(n), event.marker);
    if (sc > best_score) {
      best_score = sc;
      parent = n;
    }
  }
  const DescendantRow& parent_row = table_->row(events_[parent].marker);
  double z = std::exp(0.0);
  for (MarkerId u : parent_row.markers) z += std::exp(score(intensity_.h(parent), u) - best_score);
  const double weight = 1.0 / z;

  const Vector& h = intensity_.append(event);
  const DescendantRow& row = table_->row(event.marker);
  const Vector p = row_probs(h, row);
  network_.force_insert(event.marker, parent, weight, row.markers,
                        std::span<const double>(p.data(), static_cast<std::size_t>(p.size())));
  events_.push_back(event);
  parents_.push_back(parent);
  mark_active(event.marker);
  steps_since_renorm_ = 0;
  if (check_structure) network_.check_invariants();
}

void GenerationState::check_mass() {
  const double drift = std::abs(network_.total_mass() - 1.0);
  if (drift > kDriftLimit) {
    throw Error(Errc::DegenerateDistribution, "frontier mass drifted by " + std::to_string(drift));
  }
  max_drift_ = std::max(max_drift_, drift);
  if (++steps_since_renorm_ >= cfg_.renormalize_every) {
    network_.renormalize();
    steps_since_renorm_ = 0;
  }
}

// ---------------------------------------------------------------------------
// SequenceGenerator

SequenceGenerator::SequenceGenerator(const ParameterStore& store, const GeneratorConfig& cfg,
                                     const DescendantTable& table)
    : store_(&store), cfg_(cfg), table_(&table), neighbor_probs_(shared_neighbor_distribution(store, cfg)) {}

Rollout SequenceGenerator::generate(const Event& source, std::size_t steps, Rng& rng, bool check_structure) const {
  GenerationState state = new_state();
  state.check_structure = check_structure;
  state.start(source);
  Rollout out;
  out.drawn_slots.reserve(steps);
  out.log_pi.reserve(steps);
  for (std::size_t k = 0; k < steps; ++k) {
    auto st = state.step(rng);
    if (!st) {
      out.terminated_early = true;
      break;
    }
    out.drawn_slots.push_back(st->slot);
    out.log_pi.push_back(st->log_pi);
  }
  out.events = state.events();
  out.parents = state.parents();
  out.max_mass_drift = state.max_mass_drift();
  return out;
}

}  // namespace lantern
