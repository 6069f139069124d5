#include "lantern/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <thread>

#include "lantern/simulator.hpp"

namespace lantern {

RelationNetwork reconstruct_network(const ParameterStore& gen, const GeneratorConfig& cfg, std::size_t k) {
  const GeneratorNames names;
  const auto m = static_cast<std::size_t>(gen.get(names.marker_embedding()).value().cols());
  if (k >= m) throw Error(Errc::KTooLarge, "K=" + std::to_string(k) + " with M=" + std::to_string(m));
  RelationNetwork net(m);
  // Every row of the neighbour distribution has the same ordering, so one
  // ranking serves all markers.
  const Vector q = shared_neighbor_distribution(gen, cfg);
  std::vector<MarkerId> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](MarkerId a, MarkerId b) { return q(a) > q(b); });
  for (std::size_t i = 0; i < m; ++i) {
    std::size_t taken = 0;
    for (MarkerId j : order) {
      if (taken == k) break;
      if (static_cast<std::size_t>(j) == i) continue;
      net.add_edge(static_cast<MarkerId>(i), j);
      ++taken;
    }
  }
  return net;
}

ReconstructionReport score_reconstruction(const RelationNetwork& estimated, const RelationNetwork& truth,
                                          std::size_t k) {
  if (estimated.marker_count() != truth.marker_count()) {
    throw Error(Errc::MarkerCountMismatch, std::to_string(estimated.marker_count()) + " vs " +
                                               std::to_string(truth.marker_count()) + " markers");
  }
  ReconstructionReport r;
  r.k = k;
  r.estimated = estimated;
  std::size_t hit = 0;
  for (const auto& [i, j] : estimated.edges())
    if (truth.has_edge(i, j)) ++hit;
  const auto est = static_cast<double>(estimated.edges().size());
  const auto tru = static_cast<double>(truth.edges().size());
  r.precision = est > 0 ? hit / est : 0.0;
  r.recall = tru > 0 ? hit / tru : 0.0;
  r.f1 = r.precision + r.recall > 0 ? 2 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
  return r;
}

double random_baseline_f1(double p, std::size_t k, std::size_t marker_count) {
  const double precision = p;
  const double recall = static_cast<double>(k) / static_cast<double>(marker_count - 1);
  return precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
}

NextEventPredictor::NextEventPredictor(const Model& model, PredictionTable mode)
    : model_(&model),
      cfg_(model.config.generator()),
      table_(std::make_unique<DescendantTable>(model.marker_count, model.config.descendants)) {
  if (mode == PredictionTable::TopK) {
    table_->fill_top_k(model.generator, cfg_);
  } else {
    table_->refresh(model.generator, cfg_, model.config.seed, 0);
  }
  generator_ = std::make_unique<SequenceGenerator>(model.generator, cfg_, *table_);
}

GenerationState NextEventPredictor::condition(std::span<const Event> prefix) const {
  if (prefix.empty()) throw Error(Errc::EmptyPrefix, "prediction needs at least the source event");
  GenerationState state = generator_->new_state();
  state.start(prefix.front());
  for (std::size_t i = 1; i < prefix.size(); ++i) state.observe(prefix[i]);
  return state;
}

std::map<MarkerId, double> NextEventPredictor::next_marker_marginal(const GenerationState& state) const {
  std::map<MarkerId, double> out;
  double total = 0.0;
  for (const auto& s : state.network().slots()) {
    if (s.child >= 0 || s.mass <= 0.0) continue;
    if (cfg_.forbid_reactivation && state.active().contains(s.marker)) continue;
    out[s.marker] += s.mass;
    total += s.mass;
  }
  for (auto& [m, p] : out) p /= total;
  return out;
}

NextEventPredictor::Samples NextEventPredictor::sample(std::span<const Event> prefix, std::size_t n_samples,
                                                       Rng& rng) const {
  if (n_samples == 0) throw Error(Errc::ConfigError, "n_samples must be >= 1");
  const GenerationState state = condition(prefix);
  Samples out;
  double time_sum = 0.0;
  std::size_t drawn = 0;
  for (std::size_t i = 0; i < n_samples; ++i) {
    const double u = uniform01(rng);
    std::optional<std::size_t> slot;
    if (cfg_.forbid_reactivation) {
      slot = state.network().draw_excluding(u, state.active());
    } else {
      slot = state.network().draw(u);
    }
    if (!slot) break;
    ++out.counts[state.network().slots()[*slot].marker];
    time_sum += state.candidate_time(*slot);
    ++drawn;
  }
  if (drawn == 0) {
    out.estimate = {prefix.back().time, prefix.back().marker};
    return out;
  }
  out.estimate.time = time_sum / static_cast<double>(drawn);
  std::size_t best = 0;
  for (const auto& [m, c] : out.counts) {
    if (c > best) {  // map order gives ties to the smallest id
      best = c;
      out.estimate.marker = m;
    }
  }
  return out;
}

std::size_t prefix_length(double ratio, std::size_t len) {
  const auto n = static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(len) - 1e-12));
  return std::max<std::size_t>(1, n);
}

std::vector<PredictionReport> evaluate_prediction(const Dataset& data, std::span<const std::size_t> indices,
                                                  std::span<const double> ratios, const PredictFn& predict,
                                                  std::size_t threads) {
  struct Cell {
    bool used = false;
    double sq = 0.0;
    bool hit = false;
  };
  const std::size_t n = indices.size();
  std::vector<Cell> cells(n * ratios.size());
  auto work = [&](std::size_t i) {
    const EventSequence& seq = data.sequences[indices[i]];
    for (std::size_t r = 0; r < ratios.size(); ++r) {
      const std::size_t len = prefix_length(ratios[r], seq.size());
      if (len >= seq.size()) continue;
      const Prediction p = predict(std::span<const Event>(seq.data(), len), indices[i], r);
      const Event& truth = seq[len];
      Cell& c = cells[i * ratios.size() + r];
      c.used = true;
      c.sq = (p.time - truth.time) * (p.time - truth.time);
      c.hit = p.marker == truth.marker;
    }
  };
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) work(i);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    for (std::size_t w = 0; w < threads; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < n; i += threads) work(i);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  std::vector<PredictionReport> reports;
  for (std::size_t r = 0; r < ratios.size(); ++r) {
    PredictionReport rep;
    rep.observed_ratio = ratios[r];
    double sq = 0.0;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const Cell& c = cells[i * ratios.size() + r];
      if (!c.used) {
        ++rep.skipped;
        continue;
      }
      ++rep.evaluated;
      sq += c.sq;
      hits += c.hit ? 1 : 0;
    }
    if (rep.evaluated > 0) {
      rep.time_mse = sq / static_cast<double>(rep.evaluated);
      rep.marker_accuracy = static_cast<double>(hits) / static_cast<double>(rep.evaluated);
    }
    reports.push_back(rep);
  }
  return reports;
}

std::vector<PredictionReport> evaluate_prediction(const Model& model, const Dataset& data,
                                                  std::span<const std::size_t> indices,
                                                  std::span<const double> ratios, std::size_t n_samples,
                                                  PredictionTable mode, std::size_t threads) {
  const NextEventPredictor predictor(model, mode);
  const std::uint64_t seed = model.config.seed;
  const std::size_t n_ratios = ratios.size();
  return evaluate_prediction(
      data, indices, ratios,
      [&](std::span<const Event> prefix, std::size_t seq, std::size_t r) {
        Rng rng = make_stream(seed, "predict", seq * n_ratios + r);
        return predictor.predict_next(prefix, n_samples, rng);
      },
      threads);
}

double linear_fit_r2(std::span<const double> x, std::span<const double> y) {
  const auto n = static_cast<double>(x.size());
  if (x.size() != y.size() || x.size() < 2) throw Error(Errc::ShapeMismatch, "linear fit needs >= 2 paired points");
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (syy == 0.0) return 1.0;
  if (sxx == 0.0) return 0.0;
  return sxy * sxy / (sxx * syy);
}

std::vector<BenchmarkRow> benchmark_scaling(const BenchmarkConfig& cfg) {
  using clock = std::chrono::steady_clock;
  std::vector<BenchmarkRow> rows;
  for (std::size_t m : cfg.marker_counts) {
    TrainConfig tc;
    tc.embedding = cfg.embedding;
    tc.descendants = cfg.descendants;
    tc.seed = cfg.seed;
    Model model = init_model(m, tc);
    const GeneratorConfig gcfg = tc.generator();
    DescendantTable table(m, cfg.descendants);
    table.refresh(model.generator, gcfg, cfg.seed, 0);  // excluded from timing
    const SequenceGenerator gen(model.generator, gcfg, table);
    for (std::size_t len : cfg.lengths) {
      BenchmarkRow row;
      row.markers = m;
      row.length = len;
      row.reps = cfg.reps;
      std::vector<Rollout> rollouts;
      const auto t0 = clock::now();
      for (std::size_t r = 0; r < cfg.reps; ++r) {
        Rng rng = make_stream(cfg.seed, "rollouts", r);
        const Event source{0.0, static_cast<MarkerId>(uniform_index(rng, m))};
        rollouts.push_back(gen.generate(source, len, rng));
      }
      row.generation_s = std::chrono::duration<double>(clock::now() - t0).count() / static_cast<double>(cfg.reps);
      row.per_step_s = len > 0 ? row.generation_s / static_cast<double>(len) : 0.0;
      if (cfg.train_timing && len > 0) {
        const std::size_t n = std::min<std::size_t>(cfg.reps, 4);
        std::vector<EventSequence> gen_seqs, real;
        std::vector<Rollout> batch;
        for (std::size_t r = 0; r < n; ++r) {
          batch.push_back(rollouts[r]);
          gen_seqs.push_back(rollouts[r].events);
          real.push_back(rollouts[(r + 1) % n].events);
          real.back().front() = gen_seqs.back().front();
        }
        const auto t1 = clock::now();
        discriminator_update(model.discriminator, tc.discriminator(), gen_seqs, real, tc.disc_adam);
        generator_update(model, table, batch, real);
        row.train_step_s = std::chrono::duration<double>(clock::now() - t1).count() / static_cast<double>(n);
      }
      rows.push_back(row);
    }
  }
  return rows;
}

std::string reconstruction_csv(const std::vector<ReconstructionReport>& reports) {
  std::string out = "k,precision,recall,f1\n";
  char buf[128];
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g\n", r.k, r.precision, r.recall, r.f1);
    out += buf;
  }
  return out;
}

std::string prediction_csv(const std::vector<PredictionReport>& reports) {
  std::string out = "observed_ratio,time_mse,marker_accuracy,evaluated,skipped\n";
  char buf[160];
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%zu,%zu\n", r.observed_ratio, r.time_mse, r.marker_accuracy,
                  r.evaluated, r.skipped);
    out += buf;
  }
  return out;
}

std::string benchmark_csv(const std::vector<BenchmarkRow>& rows) {
  std::string out = "markers,length,reps,generation_s,per_step_s,train_step_s\n";
  char buf[200];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%zu,%zu,%zu,%.9g,%.9g,%.9g\n", r.markers, r.length, r.reps, r.generation_s,
                  r.per_step_s, r.train_step_s);
    out += buf;
  }
  return out;
}

}  // namespace lantern
