#include "lantern/discriminator.hpp"

#include <cmath>

namespace lantern {

void add_discriminator_parameters(ParameterStore& store, std::size_t marker_count, const DiscriminatorConfig& cfg,
                                  Rng& rng) {
  const DiscriminatorNames names;
  add_encoder_parameters(store, names, marker_count, cfg.embedding, IntensityKind::Attention, rng,
                         !cfg.share_embeddings);
  const auto d = static_cast<Eigen::Index>(cfg.embedding.dim);
  store.add(names.reward_weight(), gaussian_matrix(1, d, 1.0 / std::sqrt(static_cast<double>(d)), rng));
  store.add(names.reward_bias(), ad::Matrix::Zero(1, 1));
}

namespace {

void attach_embedding(ad::Tape& tape, EncoderVars& enc, const ad::Matrix* shared) {
  if (enc.marker_embedding.valid()) return;
  if (!shared) throw Error(Errc::ConfigError, "discriminator has no marker embedding and none was shared");
  enc.marker_embedding = tape.constant(*shared);
}

}  // namespace

DiscriminatorVars bind_discriminator(ad::Tape& tape, ParameterStore& store, const DiscriminatorConfig& cfg,
                                     const ad::Matrix* shared_embedding) {
  const DiscriminatorNames names;
  DiscriminatorVars out;
  out.enc = bind_encoder(tape, store, names, cfg.embedding, IntensityKind::Attention);
  attach_embedding(tape, out.enc, shared_embedding);
  out.reward_weight = tape.parameter(store.get(names.reward_weight()));
  out.reward_bias = tape.parameter(store.get(names.reward_bias()));
  out.causal = cfg.causal;
  return out;
}

DiscriminatorVars bind_discriminator_frozen(ad::Tape& tape, const ParameterStore& store,
                                            const DiscriminatorConfig& cfg, const ad::Matrix* shared_embedding) {
  const DiscriminatorNames names;
  DiscriminatorVars out;
  out.enc = bind_encoder_frozen(tape, store, names, cfg.embedding, IntensityKind::Attention);
  attach_embedding(tape, out.enc, shared_embedding);
  out.reward_weight = tape.constant(store.get(names.reward_weight()).value());
  out.reward_bias = tape.constant(store.get(names.reward_bias()).value());
  out.causal = cfg.causal;
  return out;
}

ad::Var discriminator_logits(const DiscriminatorVars& disc, const ad::Var& times, std::span<const MarkerId> markers) {
  const Eigen::Index n = times.cols();
  if (n < 2) throw Error(Errc::EmptySequence, "discriminator needs a source and at least one event");
  ad::Tape& tape = *times.tape();
  const ad::Var e = embed_events(disc.enc, times, markers);
  const ad::Mask mask = disc.causal ? ad::causal_mask(n) : ad::full_mask(n, n);
  const ad::Var a = multi_head_attention(disc.enc, e, mask);
  std::vector<Eigen::Index> cols(static_cast<std::size_t>(n - 1));
  for (Eigen::Index k = 1; k < n; ++k) cols[static_cast<std::size_t>(k - 1)] = k;
  return ad::matmul(disc.reward_weight, ad::col_select(a, cols)) +
         ad::matmul(disc.reward_bias, tape.constant(ad::Matrix::Ones(1, n - 1)));
}

ad::Var discriminate(const DiscriminatorVars& disc, const ad::Var& times, std::span<const MarkerId> markers) {
  return ad::sigmoid(discriminator_logits(disc, times, markers));
}

std::vector<double> discriminate(std::span<const Event> seq, const ParameterStore& store,
                                 const DiscriminatorConfig& cfg, const ad::Matrix* shared_embedding) {
  if (seq.size() < 2) throw Error(Errc::EmptySequence, "discriminator needs a source and at least one event");
  ad::Tape tape;
  const DiscriminatorVars disc = bind_discriminator_frozen(tape, store, cfg, shared_embedding);
  ad::Matrix t(1, static_cast<Eigen::Index>(seq.size()));
  std::vector<MarkerId> markers;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    t(0, static_cast<Eigen::Index>(i)) = seq[i].time;
    markers.push_back(seq[i].marker);
  }
  const ad::Var r = discriminate(disc, tape.constant(t), markers);
  return std::vector<double>(r.value().data(), r.value().data() + r.value().size());
}

std::vector<double> heuristic_reward(std::span<const Event> gen, std::span<const Event> real, double c,
                                     double time_scale) {
  if (gen.empty() || real.empty()) throw Error(Errc::EmptySequence, "heuristic reward of an empty sequence");
  if (gen.front().marker != real.front().marker || gen.front().time != real.front().time) {
    throw Error(Errc::SourceMismatch, "generated and real sequences start from different sources");
  }
  const std::size_t n = std::min(gen.size(), real.size());
  std::vector<double> r;
  for (std::size_t k = 1; k < n; ++k) {
    const double dt = (gen[k].time - real[k].time) / time_scale;
    r.push_back(c - dt * dt + (gen[k].marker == real[k].marker ? 1.0 : 0.0));
  }
  return r;
}

}  // namespace lantern
