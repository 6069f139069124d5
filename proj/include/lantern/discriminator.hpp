#pragma once

#include <vector>

#include "lantern/autodiff.hpp"
#include "lantern/intensity.hpp"
#include "lantern/parameters.hpp"
#include "lantern/types.hpp"

namespace lantern {

struct DiscriminatorConfig {
  EmbeddingConfig embedding{};
  bool causal = false;            // full attention over e_0..e_T unless set
  bool share_embeddings = false;  // read the generator's W_M instead of owning one
};

/// Discriminator parameter names (prefix "disc."): the encoder plus
///   W_D (1 x D), b_D.
struct DiscriminatorNames : EncoderNames {
  DiscriminatorNames() : EncoderNames{"disc."} {}
  std::string reward_weight() const { return prefix + "W_D"; }
  std::string reward_bias() const { return prefix + "b_D"; }
};

void add_discriminator_parameters(ParameterStore& store, std::size_t marker_count, const DiscriminatorConfig& cfg,
                                  Rng& rng);

struct DiscriminatorVars {
  EncoderVars enc;
  ad::Var reward_weight;
  ad::Var reward_bias;
  bool causal = false;
};

/// Binds the discriminator. `shared_embedding` supplies W_M (as a constant)
/// when the store does not own one.
DiscriminatorVars bind_discriminator(ad::Tape& tape, ParameterStore& store, const DiscriminatorConfig& cfg,
                                     const ad::Matrix* shared_embedding = nullptr);
DiscriminatorVars bind_discriminator_frozen(ad::Tape& tape, const ParameterStore& store,
                                            const DiscriminatorConfig& cfg,
                                            const ad::Matrix* shared_embedding = nullptr);

/// Pre-sigmoid outputs W_D a_k + b_D for k = 1..T (1 x T).
ad::Var discriminator_logits(const DiscriminatorVars& disc, const ad::Var& times, std::span<const MarkerId> markers);

/// Rewards r_1..r_T (1 x T) for a sequence given as a 1 x (T+1) time row and
/// its markers.
ad::Var discriminate(const DiscriminatorVars& disc, const ad::Var& times, std::span<const MarkerId> markers);

/// Value-only rewards for a sequence of length >= 2.
std::vector<double> discriminate(std::span<const Event> seq, const ParameterStore& store,
                                 const DiscriminatorConfig& cfg, const ad::Matrix* shared_embedding = nullptr);

/// r_k = C - (t_k - t*_k)^2 + [m_k == m*_k] for k >= 1 up to the shorter
/// length. Times are divided by `time_scale` before comparison.
std::vector<double> heuristic_reward(std::span<const Event> gen, std::span<const Event> real, double c,
                                     double time_scale = 1.0);

}  // namespace lantern
