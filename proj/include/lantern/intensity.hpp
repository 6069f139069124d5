#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lantern/autodiff.hpp"
#include "lantern/parameters.hpp"
#include "lantern/types.hpp"

namespace lantern {

using Vector = Eigen::VectorXd;

struct EmbeddingConfig {
  std::size_t dim = 8;    // D
  std::size_t heads = 2;  // L
  double eta = 0.3;       // time-embedding weight

  void validate() const;
};

enum class IntensityKind { Attention, Rnn };

/// h_0..h_k, one D-vector per event in the prefix.
struct IntensityOutput {
  std::vector<Vector> h;
};

/// Parameter names under a prefix such as "gen." or "disc.":
///   W_M (D x M), w_T, b_T (D x 1)
///   attention: W_V.l, W_K.l, W_Q.l (D x D) per head l, W_O (D x L*D)
///   rnn:       A, B (D x D), b (D x 1)
struct EncoderNames {
  std::string prefix;

  std::string marker_embedding() const { return prefix + "W_M"; }
  std::string time_weight() const { return prefix + "w_T"; }
  std::string time_bias() const { return prefix + "b_T"; }
  std::string value(std::size_t l) const { return prefix + "W_V." + std::to_string(l); }
  std::string key(std::size_t l) const { return prefix + "W_K." + std::to_string(l); }
  std::string query(std::size_t l) const { return prefix + "W_Q." + std::to_string(l); }
  std::string output() const { return prefix + "W_O"; }
  std::string rnn_input() const { return prefix + "A"; }
  std::string rnn_recurrent() const { return prefix + "B"; }
  std::string rnn_bias() const { return prefix + "b"; }
};

/// Adds encoder parameters: N(0, 1/sqrt(D)) for matrices and the time weight,
/// zeros for biases. With include_marker_embedding false the caller supplies W_M.
void add_encoder_parameters(ParameterStore& store, const EncoderNames& names, std::size_t marker_count,
                            const EmbeddingConfig& cfg, IntensityKind kind, Rng& rng,
                            bool include_marker_embedding = true);

/// Encoder parameters bound to a tape.
struct EncoderVars {
  ad::Var marker_embedding;
  ad::Var time_weight;
  ad::Var time_bias;
  std::vector<ad::Var> value, key, query;
  ad::Var output;
  ad::Var rnn_input, rnn_recurrent, rnn_bias;
  IntensityKind kind = IntensityKind::Attention;
  double eta = 0.3;
};

/// Binds as differentiable parameters. When the store has no W_M the caller
/// must set marker_embedding itself.
EncoderVars bind_encoder(ad::Tape& tape, ParameterStore& store, const EncoderNames& names,
                         const EmbeddingConfig& cfg, IntensityKind kind);
/// Binds parameter values as constants.
EncoderVars bind_encoder_frozen(ad::Tape& tape, const ParameterStore& store, const EncoderNames& names,
                                const EmbeddingConfig& cfg, IntensityKind kind);

/// Event embeddings e_n = eta * (w_T t_n + b_T) + W_M[:, m_n] as a D x N matrix.
/// `times` is a 1 x N row.
ad::Var embed_events(const EncoderVars& enc, const ad::Var& times, std::span<const MarkerId> markers);

/// Multi-head attention over the columns of E (D x N). Head l computes
/// alpha_{jn} = softmax_j((W_K e_j)^T (W_Q e_n)) restricted by `mask`
/// ([j, n] true when key j is visible to query n) and sum_j alpha_{jn} W_V e_j;
/// head outputs are stacked and projected by W_O. Returns D x N.
ad::Var multi_head_attention(const EncoderVars& enc, const ad::Var& events, const ad::Mask& mask);

/// h_n = tanh(A e_n + B h_{n-1} + b), h_{-1} = 0. Returns D x N.
ad::Var rnn_layer(const EncoderVars& enc, const ad::Var& events);

/// Causal intensity for the configured kind. Returns D x N.
ad::Var intensity(const EncoderVars& enc, const ad::Var& events);

// Value-only entry points.

Vector embed_marker(MarkerId marker, const ParameterStore& store, const EncoderNames& names);
Vector embed_event(double time, MarkerId marker, const ParameterStore& store, const EncoderNames& names,
                   const EmbeddingConfig& cfg);
IntensityOutput attention_intensity(std::span<const Event> events, const ParameterStore& store,
                                    const EncoderNames& names, const EmbeddingConfig& cfg);
IntensityOutput rnn_intensity(std::span<const Event> events, const ParameterStore& store, const EncoderNames& names,
                              const EmbeddingConfig& cfg);

/// Appends events one at a time and returns h for the new position. Used by the
/// generator, where the prefix grows step by step and earlier h are final.
class IncrementalIntensity {
 public:
  IncrementalIntensity(const ParameterStore& store, const EncoderNames& names, const EmbeddingConfig& cfg,
                       IntensityKind kind);

  const Vector& append(const Event& event);
  const Vector& h(std::size_t n) const { return h_[n]; }
  std::size_t size() const noexcept { return h_.size(); }
  void reset();

 private:
  const ad::Matrix* marker_embedding_;
  Vector time_weight_, time_bias_;
  std::vector<ad::Matrix> value_, key_, query_;
  ad::Matrix output_;
  ad::Matrix rnn_input_, rnn_recurrent_;
  Vector rnn_bias_;
  IntensityKind kind_;
  EmbeddingConfig cfg_;

  std::vector<std::vector<Vector>> keys_, values_;  // [head][position]
  std::vector<Vector> h_;
};

}  // namespace lantern
