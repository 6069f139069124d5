#include <cmath>

#include "doctest.h"
#include "lantern/intensity.hpp"
#include "oracles.hpp"

using namespace lantern;
using ad::Matrix;

namespace {

const EncoderNames kNames{"enc."};

ParameterStore make_store(std::size_t m, const EmbeddingConfig& cfg, IntensityKind kind, std::uint64_t seed) {
  ParameterStore store;
  Rng rng = make_stream(seed, "init");
  add_encoder_parameters(store, kNames, m, cfg, kind, rng);
  // Non-zero biases so their gradients are exercised.
  for (auto& p : store)
    if (p->value().isZero()) p->value() = gaussian_matrix(p->value().rows(), p->value().cols(), 0.3, rng);
  return store;
}

EventSequence random_events(Rng& rng, std::size_t n, std::size_t m) {
  EventSequence s;
  double t = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    s.push_back({t, static_cast<MarkerId>(uniform_index(rng, m))});
    t += uniform01(rng);
  }
  return s;
}

std::vector<std::vector<double>> literal_embeddings(const EventSequence& s, const ParameterStore& store,
                                                    const EmbeddingConfig& cfg) {
  const Matrix& w = store.get(kNames.marker_embedding()).value();
  const Matrix& wt = store.get(kNames.time_weight()).value();
  const Matrix& bt = store.get(kNames.time_bias()).value();
  std::vector<std::vector<double>> e;
  for (const auto& ev : s) {
    std::vector<double> col(cfg.dim);
    for (std::size_t d = 0; d < cfg.dim; ++d) col[d] = cfg.eta * (wt(d, 0) * ev.time + bt(d, 0)) + w(d, ev.marker);
    e.push_back(col);
  }
  return e;
}

double loss_on(const ParameterStore& store, ad::Tape& tape, const EncoderVars& enc, const EventSequence& s,
               const Matrix& weights, ad::Var* root) {
  Matrix t(1, static_cast<Eigen::Index>(s.size()));
  std::vector<MarkerId> m;
  for (std::size_t i = 0; i < s.size(); ++i) {
    t(0, static_cast<Eigen::Index>(i)) = s[i].time;
    m.push_back(s[i].marker);
  }
  const ad::Var h = intensity(enc, embed_events(enc, tape.constant(t), m));
  *root = ad::sum(ad::mul(h, tape.constant(weights)));
  (void)store;
  return root->scalar();
}

}  // namespace

TEST_CASE("marker embedding picks a column") {
  EmbeddingConfig cfg;
  cfg.dim = 4;
  ParameterStore store = make_store(4, cfg, IntensityKind::Attention, 1);
  store.get(kNames.marker_embedding()).value() = Matrix::Identity(4, 4);
  CHECK(embed_marker(2, store, kNames) == Vector::Unit(4, 2));
  Rng rng = make_stream(1, "test");
  store.get(kNames.marker_embedding()).value() = gaussian_matrix(4, 6, 1.0, rng);
  for (MarkerId i = 0; i < 6; ++i) {
    const Vector dense = store.get(kNames.marker_embedding()).value() * Vector::Unit(6, i);
    CHECK((embed_marker(i, store, kNames) - dense).norm() < 1e-15);
  }
  CHECK_THROWS_AS(embed_marker(6, store, kNames), Error);
}

TEST_CASE("gradient of sum(d_i) is one on column i only") {
  EmbeddingConfig cfg;
  cfg.dim = 3;
  ParameterStore store = make_store(5, cfg, IntensityKind::Attention, 2);
  ad::Tape tape;
  const EncoderVars enc = bind_encoder(tape, store, kNames, cfg, IntensityKind::Attention);
  tape.backward(ad::sum(ad::col_select(enc.marker_embedding, std::vector<Eigen::Index>{3})));
  Matrix expected = Matrix::Zero(3, 5);
  expected.col(3).setOnes();
  CHECK(store.get(kNames.marker_embedding()).grad() == expected);
}

TEST_CASE("event embedding") {
  EmbeddingConfig cfg;
  cfg.dim = 4;
  ParameterStore store = make_store(5, cfg, IntensityKind::Attention, 3);
  const Vector d = embed_marker(1, store, kNames);
  EmbeddingConfig no_time = cfg;
  no_time.eta = 0.0;
  CHECK(embed_event(2.5, 1, store, kNames, no_time) == d);
  ParameterStore zero = store;
  zero.get(kNames.time_weight()).value().setZero();
  zero.get(kNames.time_bias()).value().setZero();
  CHECK(embed_event(2.5, 1, zero, kNames, cfg) == d);
  const auto lit = literal_embeddings({{2.5, 1}}, store, cfg);
  for (std::size_t i = 0; i < 4; ++i) CHECK(embed_event(2.5, 1, store, kNames, cfg)(static_cast<Eigen::Index>(i)) == doctest::Approx(lit[0][i]).epsilon(1e-14));
}

TEST_CASE("single event attention is the projected value") {
  EmbeddingConfig cfg;
  cfg.dim = 3;
  ParameterStore store = make_store(4, cfg, IntensityKind::Attention, 4);
  const EventSequence s{{0.4, 2}};
  const Vector e = embed_event(0.4, 2, store, kNames, cfg);
  Vector stacked(6);
  stacked << store.get(kNames.value(0)).value() * e, store.get(kNames.value(1)).value() * e;
  const Vector expected = store.get(kNames.output()).value() * stacked;
  CHECK((attention_intensity(s, store, kNames, cfg).h[0] - expected).norm() < 1e-13);
}

TEST_CASE("identical embeddings give identical intensities") {
  EmbeddingConfig cfg;
  cfg.dim = 3;
  ParameterStore store = make_store(4, cfg, IntensityKind::Attention, 5);
  const EventSequence s{{1.0, 2}, {1.0, 2}, {1.0, 2}};
  const auto out = attention_intensity(s, store, kNames, cfg);
  CHECK((out.h[0] - out.h[2]).norm() < 1e-13);
  CHECK((out.h[1] - out.h[2]).norm() < 1e-13);
}

TEST_CASE("attention matches the literal per-head formula") {
  EmbeddingConfig cfg;
  cfg.dim = 2;
  cfg.heads = 2;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    ParameterStore store = make_store(5, cfg, IntensityKind::Attention, seed);
    Rng rng = make_stream(seed, "test");
    const EventSequence s = random_events(rng, 3, 5);
    std::vector<oracle::Mat> wv, wk, wq;
    for (std::size_t l = 0; l < 2; ++l) {
      wv.push_back(oracle::to_mat(store.get(kNames.value(l)).value()));
      wk.push_back(oracle::to_mat(store.get(kNames.key(l)).value()));
      wq.push_back(oracle::to_mat(store.get(kNames.query(l)).value()));
    }
    const auto lit = oracle::attention(literal_embeddings(s, store, cfg), wv, wk, wq,
                                       oracle::to_mat(store.get(kNames.output()).value()), true);
    const auto got = attention_intensity(s, store, kNames, cfg);
    for (std::size_t n = 0; n < 3; ++n)
      for (std::size_t d = 0; d < 2; ++d) CHECK(std::abs(got.h[n](static_cast<Eigen::Index>(d)) - lit[n][d]) < 1e-12);
  }
}

TEST_CASE("RNN fixed points and recurrence") {
  EmbeddingConfig cfg;
  cfg.dim = 3;
  ParameterStore store = make_store(4, cfg, IntensityKind::Rnn, 6);
  Rng rng = make_stream(6, "test");
  const EventSequence s = random_events(rng, 4, 4);

  ParameterStore zero = store;
  zero.get(kNames.rnn_input()).value().setZero();
  zero.get(kNames.rnn_recurrent()).value().setZero();
  zero.get(kNames.rnn_bias()).value().setZero();
  for (const auto& h : rnn_intensity(s, zero, kNames, cfg).h) CHECK(h.isZero());

  const Matrix& a = store.get(kNames.rnn_input()).value();
  const Matrix& b = store.get(kNames.rnn_recurrent()).value();
  const Matrix& c = store.get(kNames.rnn_bias()).value();
  ParameterStore decoupled = store;
  decoupled.get(kNames.rnn_recurrent()).value().setZero();
  const auto lit = literal_embeddings(s, store, cfg);
  const auto out_decoupled = rnn_intensity(s, decoupled, kNames, cfg);
  const auto out = rnn_intensity(s, store, kNames, cfg);
  std::vector<double> prev(3, 0.0);
  for (std::size_t n = 0; n < 4; ++n) {
    std::vector<double> next(3);
    for (std::size_t i = 0; i < 3; ++i) {
      double z = c(i, 0), z0 = c(i, 0);
      for (std::size_t j = 0; j < 3; ++j) {
        z += a(i, j) * lit[n][j] + b(i, j) * prev[j];
        z0 += a(i, j) * lit[n][j];
      }
      next[i] = std::tanh(z);
      CHECK(std::abs(out.h[n](static_cast<Eigen::Index>(i)) - next[i]) < 1e-12);
      CHECK(std::abs(out_decoupled.h[n](static_cast<Eigen::Index>(i)) - std::tanh(z0)) < 1e-12);
    }
    prev = next;
  }
}

TEST_CASE("intensities are causal for both kinds") {
  EmbeddingConfig cfg;
  for (IntensityKind kind : {IntensityKind::Attention, IntensityKind::Rnn}) {
    ParameterStore store = make_store(6, cfg, kind, 7);
    Rng rng = make_stream(7, "test");
    EventSequence s = random_events(rng, 6, 6);
    auto run = [&](const EventSequence& x) {
      return kind == IntensityKind::Attention ? attention_intensity(x, store, kNames, cfg)
                                              : rnn_intensity(x, store, kNames, cfg);
    };
    const auto before = run(s);
    s[4] = {s[4].time + 0.3, (s[4].marker + 1) % 6};
    s[5].marker = (s[5].marker + 2) % 6;
    const auto after = run(s);
    for (std::size_t n = 0; n < 4; ++n) CHECK(before.h[n] == after.h[n]);
    CHECK(before.h[5] != after.h[5]);
  }
}

TEST_CASE("attention weights sum to one per head and position") {
  EmbeddingConfig cfg;
  ParameterStore store = make_store(6, cfg, IntensityKind::Attention, 8);
  Rng rng = make_stream(8, "test");
  const auto s = random_events(rng, 7, 6);
  const auto lit = literal_embeddings(s, store, cfg);
  Matrix e(static_cast<Eigen::Index>(cfg.dim), 7);
  for (Eigen::Index n = 0; n < 7; ++n)
    for (Eigen::Index d = 0; d < e.rows(); ++d) e(d, n) = lit[static_cast<std::size_t>(n)][static_cast<std::size_t>(d)];
  ad::Tape tape;
  for (std::size_t l = 0; l < cfg.heads; ++l) {
    const Matrix scores = (store.get(kNames.key(l)).value() * e).transpose() * (store.get(kNames.query(l)).value() * e);
    const ad::Var alpha = ad::softmax_masked(tape.constant(scores), ad::causal_mask(7));
    for (Eigen::Index n = 0; n < 7; ++n) CHECK(std::abs(alpha.value().col(n).sum() - 1.0) < 1e-12);
  }
}

TEST_CASE("finite differences through both intensity kinds") {
  EmbeddingConfig cfg;
  cfg.dim = 3;
  cfg.heads = 2;
  for (IntensityKind kind : {IntensityKind::Attention, IntensityKind::Rnn}) {
    ParameterStore store = make_store(4, cfg, kind, 9);
    Rng rng = make_stream(9, "test");
    const auto s = random_events(rng, 3, 4);
    const Matrix weights = gaussian_matrix(3, 3, 1.0, rng);
    auto value = [&] {
      ad::Tape tape;
      ad::Var root;
      return loss_on(store, tape, bind_encoder_frozen(tape, store, kNames, cfg, kind), s, weights, &root);
    };
    auto analytic = [&] {
      ad::Tape tape;
      ad::Var root;
      loss_on(store, tape, bind_encoder(tape, store, kNames, cfg, kind), s, weights, &root);
      tape.backward(root);
    };
    CHECK(oracle::store_gradient_error(store, analytic, value) < 1e-4);
  }
}

TEST_CASE("attention is sensitive to event order") {
  EmbeddingConfig cfg;
  ParameterStore store = make_store(6, cfg, IntensityKind::Attention, 10);
  const EventSequence a{{0.0, 1}, {1.0, 2}, {2.0, 3}};
  const EventSequence b{{0.0, 2}, {1.0, 1}, {2.0, 3}};
  CHECK((attention_intensity(a, store, kNames, cfg).h[2] - attention_intensity(b, store, kNames, cfg).h[2]).norm() > 1e-6);
}

TEST_CASE("incremental intensity equals the batch computation") {
  EmbeddingConfig cfg;
  for (IntensityKind kind : {IntensityKind::Attention, IntensityKind::Rnn}) {
    ParameterStore store = make_store(9, cfg, kind, 11);
    Rng rng = make_stream(11, "test");
    const auto s = random_events(rng, 12, 9);
    const auto batch = kind == IntensityKind::Attention ? attention_intensity(s, store, kNames, cfg)
                                                        : rnn_intensity(s, store, kNames, cfg);
    IncrementalIntensity inc(store, kNames, cfg, kind);
    for (std::size_t n = 0; n < s.size(); ++n) CHECK((inc.append(s[n]) - batch.h[n]).norm() < 1e-12);
  }
}

TEST_CASE("empty prefix is rejected") {
  EmbeddingConfig cfg;
  ParameterStore store = make_store(3, cfg, IntensityKind::Attention, 12);
  CHECK_THROWS_AS(attention_intensity(EventSequence{}, store, kNames, cfg), Error);
}
