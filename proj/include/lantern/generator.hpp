#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "lantern/fenwick.hpp"
#include "lantern/intensity.hpp"
#include "lantern/parameters.hpp"
#include "lantern/rng.hpp"
#include "lantern/types.hpp"

namespace lantern {

/// Which event's intensity drives the inter-event time.
enum class TimeInput { Parent, LastEvent };

struct GeneratorConfig {
  EmbeddingConfig embedding{};
  IntensityKind kind = IntensityKind::Attention;
  std::size_t descendants = 3;  // K
  TimeInput time_input = TimeInput::Parent;
  bool forbid_reactivation = false;
  std::size_t renormalize_every = 64;

  void validate(std::size_t marker_count) const;
};

/// Generator parameter names (prefix "gen."): the encoder, plus
///   w_C (2D x 1)       descendant scoring over [d_j || d_i]
///   w_N (2D x 1), b_N  transition scoring over [h_n || d_u]
///   W_T' (1 x D), b_T' inter-event time head
struct GeneratorNames : EncoderNames {
  GeneratorNames() : EncoderNames{"gen."} {}
  std::string neighbor_weight() const { return prefix + "w_C"; }
  std::string transition_weight() const { return prefix + "w_N"; }
  std::string transition_bias() const { return prefix + "b_N"; }
  std::string time_out_weight() const { return prefix + "W_T'"; }
  std::string time_out_bias() const { return prefix + "b_T'"; }
};

void add_generator_parameters(ParameterStore& store, std::size_t marker_count, const GeneratorConfig& cfg, Rng& rng);

/// p(m_j in N_i) for every j: softmax_j of w_C^T [d_j || d_i] over all M markers.
Vector neighbor_distribution(MarkerId i, const ParameterStore& store, const GeneratorConfig& cfg);

/// The d_i half of the descendant score is constant in j and cancels in the
/// softmax, so every row shares this distribution.
Vector shared_neighbor_distribution(const ParameterStore& store, const GeneratorConfig& cfg);

struct DescendantRow {
  std::vector<MarkerId> markers;
  std::vector<double> probabilities;  // p(m_j in N_i) at sampling time
};

/// K distinct markers != i drawn without replacement proportionally to
/// `distribution` (renormalised after removing i).
DescendantRow sample_descendants(MarkerId i, std::size_t k, const Vector& distribution, Rng& rng);

/// Convenience overload that evaluates the distribution from the parameters.
DescendantRow sample_descendants(MarkerId i, std::size_t k, const ParameterStore& store, const GeneratorConfig& cfg,
                                 Rng& rng);

/// Descendant sets N_i for every marker, frozen for one epoch.
class DescendantTable {
 public:
  DescendantTable() = default;
  DescendantTable(std::size_t marker_count, std::size_t k);

  /// Resamples every row from the current parameters unless `epoch` equals the
  /// current stamp, in which case the table is left untouched.
  void refresh(const ParameterStore& store, const GeneratorConfig& cfg, std::uint64_t seed, std::uint64_t epoch);

  /// Rows made of the K most probable descendants (ties by ascending id).
  void fill_top_k(const ParameterStore& store, const GeneratorConfig& cfg);

  void set_row(MarkerId i, DescendantRow row);

  const DescendantRow& row(MarkerId i) const;
  bool has_row(MarkerId i) const;
  std::size_t marker_count() const noexcept { return rows_.size(); }
  std::size_t k() const noexcept { return k_; }
  std::optional<std::uint64_t> epoch() const noexcept { return epoch_; }

 private:
  std::size_t k_ = 0;
  std::vector<std::optional<DescendantRow>> rows_;
  std::optional<std::uint64_t> epoch_;
};

/// Transition distribution over the descendant row of the event with
/// intensity h: softmax_u of w_N^T [h || d_u] + b_N.
Vector transition_probs(const Vector& h, const DescendantRow& row, const ParameterStore& store,
                        const GeneratorConfig& cfg);

/// Inter-event time softplus(W_T' h + b_T').
double estimate_time_delta(const Vector& h, const ParameterStore& store);

struct FrontierSlot {
  MarkerId marker = 0;
  std::size_t parent = 0;     // index of the existing event it descends from
  double probability = 0.0;   // transition probability from the parent
  double mass = 0.0;          // rho over leaves; zero once committed
  std::int64_t child = -1;    // event index once committed
};

struct LocalEvent {
  MarkerId marker = 0;
  std::int64_t origin_slot = -1;  // -1 for the source
  double path_mass = 1.0;         // probability of the path from the source
  std::size_t first_slot = 0;
  std::size_t slot_count = 0;
};

/// Local relation network: the tree of committed events (existing markers)
/// with one frontier slot per (descendant marker, parent event). The frontier
/// distribution rho lives on the uncommitted slots.
class LocalRelationNetwork {
 public:
  void reset(MarkerId source, std::span<const MarkerId> descendants, std::span<const double> probabilities);

  /// One step of the linear-time sampler after slot `slot` was drawn:
  /// b = path_mass(parent) * p(slot), the slot loses b, and the new event's
  /// descendants enter the frontier with mass b * p(. | new event).
  /// Returns b.
  double commit(std::size_t slot, std::span<const MarkerId> descendants, std::span<const double> probabilities);

  /// Adds an event for `marker` that no frontier slot produced, under
  /// `parent` with transition weight `probability`, then renormalises rho.
  std::size_t force_insert(MarkerId marker, std::size_t parent, double probability,
                           std::span<const MarkerId> descendants, std::span<const double> probabilities);

  /// Inverse-CDF over slot masses in insertion order; u in [0, 1).
  std::size_t draw(double u) const;
  /// Same, restricted to slots whose marker is not flagged in `excluded`.
  /// Returns nullopt when no allowed slot has mass.
  std::optional<std::size_t> draw_excluding(double u, const std::unordered_map<MarkerId, bool>& excluded) const;

  /// Reference random walk from the source: at a committed node jump to a
  /// child slot by its transition probability; stop at the first leaf.
  template <typename Gen>
  std::size_t walk_naive(Gen& gen) const {
    std::size_t node = 0;
    for (std::size_t guard = 0; guard <= events_.size(); ++guard) {
      const LocalEvent& ev = events_[node];
      if (ev.slot_count == 0) throw Error(Errc::MalformedLocalNetwork, "walk reached an event with no descendants");
      double u = uniform01(gen);
      std::size_t pick = ev.first_slot + ev.slot_count - 1;
      for (std::size_t s = ev.first_slot; s < ev.first_slot + ev.slot_count; ++s) {
        if (u < slots_[s].probability) {
          pick = s;
          break;
        }
        u -= slots_[s].probability;
      }
      if (slots_[pick].child < 0) return pick;
      node = static_cast<std::size_t>(slots_[pick].child);
    }
    throw Error(Errc::MalformedLocalNetwork, "walk did not terminate");
  }

  double total_mass() const { return fenwick_.total(); }
  /// Exact sum of leaf masses (compensated summation).
  double exact_total_mass() const;
  double marker_mass(MarkerId marker) const;
  void renormalize();

  /// Structure check: every slot hangs off a committed event, every
  /// committed event (except the source) came from a slot of an earlier event,
  /// so every path to a leaf runs through committed events only. Throws
  /// MalformedLocalNetwork otherwise.
  void check_invariants() const;

  const std::vector<FrontierSlot>& slots() const noexcept { return slots_; }
  const std::vector<LocalEvent>& events() const noexcept { return events_; }
  std::size_t frontier_size() const noexcept { return leaf_count_; }

 private:
  void add_slots(std::size_t parent, std::span<const MarkerId> descendants, std::span<const double> probabilities);
  void set_mass(std::size_t slot, double mass);

  std::vector<LocalEvent> events_;
  std::vector<FrontierSlot> slots_;
  FenwickTree fenwick_;
  std::unordered_map<MarkerId, double> marker_mass_;
  std::size_t leaf_count_ = 0;
};

/// A generated sequence with everything needed to replay its policy terms.
struct Rollout {
  EventSequence events;
  std::vector<std::size_t> parents;      // parent event per event (source: 0)
  std::vector<std::size_t> drawn_slots;  // slot drawn at step k (index k-1)
  std::vector<double> log_pi;            // log pi(a_k | s_k), k = 1..T
  double max_mass_drift = 0.0;           // max |sum rho - 1| over steps
  bool terminated_early = false;
};

/// Generation state for one sequence: intensity, local network and rho.
class GenerationState {
 public:
  GenerationState(const ParameterStore& store, const GeneratorConfig& cfg, const DescendantTable& table,
                  const Vector& neighbor_probs);

  void start(const Event& source);

  struct Step {
    MarkerId marker;
    std::size_t parent;
    std::size_t slot;
    double time;
    double log_pi;
    double b;
  };

  /// Draws the next event (efficient sampler), commits it and returns it.
  /// nullopt if reactivation is forbidden and no allowed slot remains.
  template <typename Gen>
  std::optional<Step> step(Gen& gen) {
    const double u = uniform01(gen);
    std::optional<std::size_t> slot;
    if (cfg_.forbid_reactivation) {
      slot = network_.draw_excluding(u, active_);
    } else {
      slot = network_.draw(u);
    }
    if (!slot) return std::nullopt;
    return commit(*slot);
  }

  /// Commits a specific slot (used by step() and by replays). The event time
  /// is estimated unless `time` is given.
  Step commit(std::size_t slot, std::optional<double> time = std::nullopt);

  /// Conditions on an observed event: commits the heaviest frontier slot with
  /// that marker, or force-inserts it under the best-scoring existing event.
  void observe(const Event& event);

  /// Time of a candidate event produced by `slot`.
  double candidate_time(std::size_t slot) const;

  const LocalRelationNetwork& network() const noexcept { return network_; }
  const EventSequence& events() const noexcept { return events_; }
  const std::vector<std::size_t>& parents() const noexcept { return parents_; }
  double max_mass_drift() const noexcept { return max_drift_; }
  const std::unordered_map<MarkerId, bool>& active() const noexcept { return active_; }

  /// Run check_invariants() after every commit.
  bool check_structure = false;

 private:
  Vector row_probs(const Vector& h, const DescendantRow& row) const;
  double score(const Vector& h, MarkerId marker) const;
  double log_pi_of(MarkerId marker) const;
  void mark_active(MarkerId marker);
  void check_mass();

  const ParameterStore* store_;
  GeneratorConfig cfg_;
  const DescendantTable* table_;
  const Vector* neighbor_probs_;
  IncrementalIntensity intensity_;
  LocalRelationNetwork network_;
  EventSequence events_;
  std::vector<std::size_t> parents_;
  std::unordered_map<MarkerId, bool> active_;
  std::size_t distinct_markers_ = 0;
  std::size_t steps_since_renorm_ = 0;
  double max_drift_ = 0.0;
  const ad::Matrix* marker_embedding_;
  Vector transition_h_, transition_d_;
  double transition_bias_ = 0.0;
  Eigen::RowVectorXd time_out_weight_;
  double time_out_bias_ = 0.0;
};

/// Event sequence generator over a frozen parameter store and descendant table.
class SequenceGenerator {
 public:
  SequenceGenerator(const ParameterStore& store, const GeneratorConfig& cfg, const DescendantTable& table);

  /// Source plus `steps` generated events.
  Rollout generate(const Event& source, std::size_t steps, Rng& rng, bool check_structure = false) const;

  GenerationState new_state() const { return GenerationState(*store_, cfg_, *table_, neighbor_probs_); }
  const Vector& neighbor_probs() const noexcept { return neighbor_probs_; }
  const GeneratorConfig& config() const noexcept { return cfg_; }

 private:
  const ParameterStore* store_;
  GeneratorConfig cfg_;
  const DescendantTable* table_;
  Vector neighbor_probs_;
};

}  // namespace lantern
