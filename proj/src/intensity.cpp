#include "lantern/intensity.hpp"

#include <cmath>

namespace lantern {

void EmbeddingConfig::validate() const {
  if (dim < 1) throw Error(Errc::ConfigError, "embedding dim must be >= 1");
  if (heads < 1) throw Error(Errc::ConfigError, "head count must be >= 1");
  if (!std::isfinite(eta)) throw Error(Errc::ConfigError, "eta must be finite");
}

void add_encoder_parameters(ParameterStore& store, const EncoderNames& names, std::size_t marker_count,
                            const EmbeddingConfig& cfg, IntensityKind kind, Rng& rng,
                            bool include_marker_embedding) {
  cfg.validate();
  const auto d = static_cast<Eigen::Index>(cfg.dim);
  const double sd = 1.0 / std::sqrt(static_cast<double>(cfg.dim));
  if (include_marker_embedding) {
    store.add(names.marker_embedding(), gaussian_matrix(d, static_cast<Eigen::Index>(marker_count), sd, rng));
  }
  store.add(names.time_weight(), gaussian_matrix(d, 1, sd, rng));
  store.add(names.time_bias(), ad::Matrix::Zero(d, 1));
  if (kind == IntensityKind::Attention) {
    for (std::size_t l = 0; l < cfg.heads; ++l) {
      store.add(names.value(l), gaussian_matrix(d, d, sd, rng));
      store.add(names.key(l), gaussian_matrix(d, d, sd, rng));
      store.add(names.query(l), gaussian_matrix(d, d, sd, rng));
    }
    store.add(names.output(), gaussian_matrix(d, d * static_cast<Eigen::Index>(cfg.heads), sd, rng));
  } else {
    store.add(names.rnn_input(), gaussian_matrix(d, d, sd, rng));
    store.add(names.rnn_recurrent(), gaussian_matrix(d, d, sd, rng));
    store.add(names.rnn_bias(), ad::Matrix::Zero(d, 1));
  }
}

namespace {

template <typename Store, typename Bind>
EncoderVars bind_with(Store& store, const EncoderNames& names, const EmbeddingConfig& cfg, IntensityKind kind,
                      Bind bind) {
  EncoderVars enc;
  enc.kind = kind;
  enc.eta = cfg.eta;
  if (store.contains(names.marker_embedding())) enc.marker_embedding = bind(names.marker_embedding());
  enc.time_weight = bind(names.time_weight());
  enc.time_bias = bind(names.time_bias());
  if (kind == IntensityKind::Attention) {
    for (std::size_t l = 0; l < cfg.heads; ++l) {
      enc.value.push_back(bind(names.value(l)));
      enc.key.push_back(bind(names.key(l)));
      enc.query.push_back(bind(names.query(l)));
    }
    enc.output = bind(names.output());
  } else {
    enc.rnn_input = bind(names.rnn_input());
    enc.rnn_recurrent = bind(names.rnn_recurrent());
    enc.rnn_bias = bind(names.rnn_bias());
  }
  return enc;
}

}  // namespace

EncoderVars bind_encoder(ad::Tape& tape, ParameterStore& store, const EncoderNames& names,
                         const EmbeddingConfig& cfg, IntensityKind kind) {
  return bind_with(store, names, cfg, kind, [&](const std::string& name) { return tape.parameter(store.get(name)); });
}

EncoderVars bind_encoder_frozen(ad::Tape& tape, const ParameterStore& store, const EncoderNames& names,
                                const EmbeddingConfig& cfg, IntensityKind kind) {
  return bind_with(store, names, cfg, kind,
                   [&](const std::string& name) { return tape.constant(store.get(name).value()); });
}

ad::Var embed_events(const EncoderVars& enc, const ad::Var& times, std::span<const MarkerId> markers) {
  ad::Tape& tape = *times.tape();
  const Eigen::Index n = times.cols();
  std::vector<Eigen::Index> cols(markers.begin(), markers.end());
  ad::Var ones = tape.constant(ad::Matrix::Ones(1, n));
  ad::Var time_part = ad::matmul(enc.time_weight, times) + ad::matmul(enc.time_bias, ones);
  return ad::scalar_mul(time_part, enc.eta) + ad::col_select(enc.marker_embedding, cols);
}

ad::Var multi_head_attention(const EncoderVars& enc, const ad::Var& events, const ad::Mask& mask) {
  std::vector<ad::Var> heads;
  heads.reserve(enc.value.size());
  for (std::size_t l = 0; l < enc.value.size(); ++l) {
    ad::Var keys = ad::matmul(enc.key[l], events);
    ad::Var queries = ad::matmul(enc.query[l], events);
    ad::Var values = ad::matmul(enc.value[l], events);
    ad::Var scores = ad::matmul(ad::transpose(keys), queries);  // [j, n]
    ad::Var weights = ad::softmax_masked(scores, mask);
    heads.push_back(ad::matmul(values, weights));
  }
  return ad::matmul(enc.output, ad::concat(heads, 0));
}

ad::Var rnn_layer(const EncoderVars& enc, const ad::Var& events) {
  ad::Tape& tape = *events.tape();
  const Eigen::Index d = events.rows();
  ad::Var h = tape.constant(ad::Matrix::Zero(d, 1));
  std::vector<ad::Var> outs;
  outs.reserve(static_cast<std::size_t>(events.cols()));
  for (Eigen::Index n = 0; n < events.cols(); ++n) {
    const Eigen::Index col[] = {n};
    ad::Var e = ad::col_select(events, col);
    h = ad::tanh(ad::matmul(enc.rnn_input, e) + ad::matmul(enc.rnn_recurrent, h) + enc.rnn_bias);
    outs.push_back(h);
  }
  return ad::concat(outs, 1);
}

ad::Var intensity(const EncoderVars& enc, const ad::Var& events) {
  if (enc.kind == IntensityKind::Rnn) return rnn_layer(enc, events);
  return multi_head_attention(enc, events, ad::causal_mask(events.cols()));
}

namespace {

IntensityOutput run_frozen(std::span<const Event> events, const ParameterStore& store, const EncoderNames& names,
                           const EmbeddingConfig& cfg, IntensityKind kind) {
  if (events.empty()) throw Error(Errc::EmptyPrefix, "intensity of an empty prefix");
  ad::Tape tape;
  EncoderVars enc = bind_encoder_frozen(tape, store, names, cfg, kind);
  ad::Matrix t(1, static_cast<Eigen::Index>(events.size()));
  std::vector<MarkerId> markers;
  for (std::size_t i = 0; i < events.size(); ++i) {
    t(0, static_cast<Eigen::Index>(i)) = events[i].time;
    markers.push_back(events[i].marker);
  }
  ad::Var h = intensity(enc, embed_events(enc, tape.constant(t), markers));
  IntensityOutput out;
  for (Eigen::Index n = 0; n < h.cols(); ++n) out.h.emplace_back(h.value().col(n));
  return out;
}

void check_marker(MarkerId marker, const ad::Matrix& embedding) {
  if (marker < 0 || marker >= embedding.cols()) {
    throw Error(Errc::MarkerOutOfRange, "marker " + std::to_string(marker) + " >= " + std::to_string(embedding.cols()));
  }
}

}  // namespace

Vector embed_marker(MarkerId marker, const ParameterStore& store, const EncoderNames& names) {
  const ad::Matrix& w = store.get(names.marker_embedding()).value();
  check_marker(marker, w);
  return w.col(marker);
}

Vector embed_event(double time, MarkerId marker, const ParameterStore& store, const EncoderNames& names,
                   const EmbeddingConfig& cfg) {
  const Vector t = store.get(names.time_weight()).value() * time + store.get(names.time_bias()).value();
  return cfg.eta * t + embed_marker(marker, store, names);
}

IntensityOutput attention_intensity(std::span<const Event> events, const ParameterStore& store,
                                    const EncoderNames& names, const EmbeddingConfig& cfg) {
  return run_frozen(events, store, names, cfg, IntensityKind::Attention);
}

IntensityOutput rnn_intensity(std::span<const Event> events, const ParameterStore& store, const EncoderNames& names,
                              const EmbeddingConfig& cfg) {
  return run_frozen(events, store, names, cfg, IntensityKind::Rnn);
}

IncrementalIntensity::IncrementalIntensity(const ParameterStore& store, const EncoderNames& names,
                                           const EmbeddingConfig& cfg, IntensityKind kind)
    : marker_embedding_(&store.get(names.marker_embedding()).value()),
      time_weight_(store.get(names.time_weight()).value()),
      time_bias_(store.get(names.time_bias()).value()),
      kind_(kind),
      cfg_(cfg) {
  if (kind == IntensityKind::Attention) {
    for (std::size_t l = 0; l < cfg.heads; ++l) {
      value_.push_back(store.get(names.value(l)).value());
      key_.push_back(store.get(names.key(l)).value());
      query_.push_back(store.get(names.query(l)).value());
    }
    output_ = store.get(names.output()).value();
    keys_.resize(cfg.heads);
    values_.resize(cfg.heads);
  } else {
    rnn_input_ = store.get(names.rnn_input()).value();
    rnn_recurrent_ = store.get(names.rnn_recurrent()).value();
    rnn_bias_ = store.get(names.rnn_bias()).value();
  }
}

void IncrementalIntensity::reset() {
  h_.clear();
  for (auto& k : keys_) k.clear();
  for (auto& v : values_) v.clear();
}

const Vector& IncrementalIntensity::append(const Event& event) {
  check_marker(event.marker, *marker_embedding_);
  const Vector e = cfg_.eta * (time_weight_ * event.time + time_bias_) + marker_embedding_->col(event.marker);
  if (kind_ == IntensityKind::Rnn) {
    Vector pre = rnn_input_ * e + rnn_bias_;
    if (!h_.empty()) pre += rnn_recurrent_ * h_.back();
    h_.push_back(pre.array().tanh().matrix());
    return h_.back();
  }
  const auto d = static_cast<Eigen::Index>(cfg_.dim);
  Vector stacked(d * static_cast<Eigen::Index>(cfg_.heads));
  for (std::size_t l = 0; l < cfg_.heads; ++l) {
    keys_[l].push_back(key_[l] * e);
    values_[l].push_back(value_[l] * e);
    const Vector q = query_[l] * e;
    const std::size_t n = keys_[l].size();
    Vector scores(static_cast<Eigen::Index>(n));
    for (std::size_t j = 0; j < n; ++j) scores(static_cast<Eigen::Index>(j)) = keys_[l][j].dot(q);
    const double mx = scores.maxCoeff();
    Vector w = (scores.array() - mx).exp().matrix();
    w /= w.sum();
    Vector head = Vector::Zero(d);
    for (std::size_t j = 0; j < n; ++j) head += w(static_cast<Eigen::Index>(j)) * values_[l][j];
    stacked.segment(static_cast<Eigen::Index>(l) * d, d) = head;
  }
  h_.push_back(output_ * stacked);
  return h_.back();
}

}  // namespace lantern
