// Acceptance run: one PASS/FAIL line per criterion.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "lantern/cli.hpp"
#include "lantern/dataset_io.hpp"
#include "lantern/evaluation.hpp"
#include "lantern/log.hpp"
#include "lantern/policy.hpp"
#include "lantern/simulator.hpp"
#include "lantern/trainer.hpp"
#include "oracles.hpp"
#include "tree_oracle.hpp"

using namespace lantern;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------

Outcome frontier_equivalence() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng = make_stream(101, "acceptance");
  double worst_entry = 0.0, worst_tv = 0.0;
  const std::size_t draws = 100000;
  for (int net = 0; net < 200; ++net) {
    const std::size_t m = 6 + uniform_index(rng, 10);
    const std::size_t k = 1 + uniform_index(rng, 4);
    const std::size_t existing = 1 + uniform_index(rng, 6);
    oracle::TreeOracle tree;
    LocalRelationNetwork local;
    const auto source = static_cast<MarkerId>(uniform_index(rng, m));
    auto row = oracle::random_row(source, m, k, rng);
    auto p = oracle::random_simplex(k, rng);
    tree.reset(source, row, p);
    local.reset(source, row, p);
    for (std::size_t step = 0;; ++step) {
      const auto expected = tree.masses();
      for (std::size_t s = 0; s < expected.size(); ++s)
        worst_entry = std::max(worst_entry, std::abs(local.slots()[s].mass - expected[s]));
      if (step + 1 == existing) break;
      const std::size_t slot = local.draw(uniform01(rng));
      row = oracle::random_row(tree.leaves[slot].marker, m, k, rng);
      p = oracle::random_simplex(k, rng);
      tree.commit(slot, row, p);
      local.commit(slot, row, p);
    }
    std::vector<std::size_t> counts(local.slots().size(), 0);
    for (std::size_t d = 0; d < draws; ++d) ++counts[local.draw(uniform01(rng))];
    std::map<MarkerId, double> freq;
    for (std::size_t s = 0; s < counts.size(); ++s)
      if (counts[s]) freq[local.slots()[s].marker] += static_cast<double>(counts[s]) / static_cast<double>(draws);
    worst_tv = std::max(worst_tv, oracle::total_variation(freq, tree.marker_marginal()));
  }
  const double t = seconds_since(t0);
  return {worst_entry < 1e-10 && worst_tv < 0.02 && t < 120.0,
          fmt("200 networks: max |rho - path product| = %.2e (< 1e-10), max marginal TV = %.4f (< 0.02), %.1f s (< 120)",
              worst_entry, worst_tv, t)};
}

Model random_model(std::size_t m, std::size_t k, std::uint64_t seed, Variant v = Variant::Lantern) {
  TrainConfig cfg;
  cfg.descendants = k;
  cfg.seed = seed;
  cfg.variant = v;
  return init_model(m, cfg);
}

Outcome conservation() {
  std::size_t rollouts = 0, steps = 0, degenerate = 0;
  double worst = 0.0;
  for (std::size_t k : {1u, 3u, 5u}) {
    for (Variant v : {Variant::Lantern, Variant::Rnn}) {
      const Model model = random_model(100, k, 200 + k, v);
      const GeneratorConfig gcfg = model.config.generator();
      DescendantTable table(100, k);
      table.refresh(model.generator, gcfg, 200 + k, 0);
      const SequenceGenerator gen(model.generator, gcfg, table);
      for (std::size_t r = 0; r < 100; ++r) {
        Rng rng = make_stream(200 + k, "rollouts", r);
        try {
          GenerationState state = gen.new_state();
          state.start({0.0, static_cast<MarkerId>(r % 100)});
          worst = std::max(worst, std::abs(state.network().exact_total_mass() - 1.0));
          for (int s = 0; s < 100; ++s) {
            state.step(rng);
            ++steps;
            worst = std::max(worst, std::abs(state.network().exact_total_mass() - 1.0));
            worst = std::max(worst, std::abs(state.network().total_mass() - 1.0));
          }
        } catch (const Error& e) {
          if (e.code() != Errc::DegenerateDistribution) throw;
          ++degenerate;
        }
        ++rollouts;
      }
    }
  }
  return {worst < 1e-9 && degenerate == 0,
          fmt("%zu rollouts, %zu steps: max |sum rho - 1| = %.2e (< 1e-9), DegenerateDistribution errors = %zu", rollouts,
              steps, worst, degenerate)};
}

Outcome structure_invariant() {
  const Model model = random_model(100, 3, 300);
  const GeneratorConfig gcfg = model.config.generator();
  DescendantTable table(100, 3);
  table.refresh(model.generator, gcfg, 300, 0);
  const SequenceGenerator gen(model.generator, gcfg, table);
  std::size_t steps = 0, violations = 0;
  std::string first;
  for (std::size_t r = 0; steps < 10000; ++r) {
    Rng rng = make_stream(300, "rollouts", r);
    try {
      const Rollout roll = gen.generate({0.0, static_cast<MarkerId>(r % 100)}, 100, rng, true);
      steps += roll.events.size() - 1;
      // Independent re-check: each event hangs off an earlier existing event
      // whose descendant row contains it.
      for (std::size_t n = 1; n < roll.events.size(); ++n) {
        const auto& row = table.row(roll.events[roll.parents[n]].marker).markers;
        if (roll.parents[n] >= n || std::find(row.begin(), row.end(), roll.events[n].marker) == row.end()) ++violations;
      }
    } catch (const Error& e) {
      ++violations;
      if (first.empty()) first = e.what();
      steps += 100;
    }
  }
  return {violations == 0, fmt("%zu generation steps checked after every commit, violations = %zu%s%s", steps, violations,
                               first.empty() ? "" : ": ", first.c_str())};
}

// ---------------------------------------------------------------------------

EventSequence random_events(Rng& rng, std::size_t n, std::size_t m) {
  EventSequence s;
  double t = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    s.push_back({t, static_cast<MarkerId>(uniform_index(rng, m))});
    t += uniform01(rng);
  }
  return s;
}

void randomize_zero_params(ParameterStore& store, Rng& rng) {
  for (auto& p : store)
    if (p->value().isZero()) p->value() = gaussian_matrix(p->value().rows(), p->value().cols(), 0.3, rng);
}

Outcome gradient_checks() {
  const auto t0 = std::chrono::steady_clock::now();
  EmbeddingConfig emb;
  emb.dim = 4;
  emb.heads = 2;
  Rng rng = make_stream(400, "acceptance");
  const EventSequence seq = random_events(rng, 4, 5);  // source + T = 3
  ad::Matrix times(1, 4);
  std::vector<MarkerId> markers;
  for (Eigen::Index i = 0; i < 4; ++i) {
    times(0, i) = seq[static_cast<std::size_t>(i)].time;
    markers.push_back(seq[static_cast<std::size_t>(i)].marker);
  }
  std::vector<std::pair<std::string, double>> errors;

  for (IntensityKind kind : {IntensityKind::Attention, IntensityKind::Rnn}) {
    const EncoderNames names{"enc."};
    ParameterStore store;
    add_encoder_parameters(store, names, 5, emb, kind, rng);
    randomize_zero_params(store, rng);
    const ad::Matrix w = gaussian_matrix(4, 4, 1.0, rng);
    auto build = [&](ad::Tape& tape, const EncoderVars& enc) {
      return ad::sum(ad::mul(intensity(enc, embed_events(enc, tape.constant(times), markers)), tape.constant(w)));
    };
    const double err = oracle::store_gradient_error(
        store,
        [&] {
          ad::Tape tape;
          tape.backward(build(tape, bind_encoder(tape, store, names, emb, kind)));
        },
        [&] {
          ad::Tape tape;
          return build(tape, bind_encoder_frozen(tape, store, names, emb, kind)).scalar();
        });
    errors.emplace_back(kind == IntensityKind::Attention ? "attention_intensity" : "rnn_intensity", err);
  }

  DiscriminatorConfig dcfg;
  dcfg.embedding = emb;
  {
    ParameterStore store;
    add_discriminator_parameters(store, 5, dcfg, rng);
    randomize_zero_params(store, rng);
    const ad::Matrix w = gaussian_matrix(1, 3, 1.0, rng);
    const double err = oracle::store_gradient_error(
        store,
        [&] {
          ad::Tape tape;
          const auto d = bind_discriminator(tape, store, dcfg);
          tape.backward(ad::sum(ad::mul(discriminate(d, tape.constant(times), markers), tape.constant(w))));
        },
        [&] {
          double v = 0.0;
          const auto r = discriminate(seq, store, dcfg);
          for (std::size_t k = 0; k < r.size(); ++k) v += r[k] * w(0, static_cast<Eigen::Index>(k));
          return v;
        });
    errors.emplace_back("discriminate", err);

    const EventSequence real = random_events(rng, 4, 5);
    const double obj_err = oracle::store_gradient_error(
        store,
        [&] {
          ad::Tape tape;
          tape.backward(discriminator_objective(tape, store, dcfg, seq, real));
        },
        [&] {
          double j = 0.0;
          for (double d : discriminate(seq, store, dcfg)) j += std::log(d);
          for (double d : discriminate(real, store, dcfg)) j += std::log(1.0 - d);
          return j;
        });
    errors.emplace_back("discriminator objective", obj_err);
  }

  for (Variant v : {Variant::Lantern, Variant::Pr}) {
    TrainConfig cfg;
    cfg.embedding = emb;
    cfg.descendants = 2;
    cfg.variant = v;
    cfg.entropy_coef = 0.1;
    cfg.seed = 401;
    Model model = init_model(5, cfg);
    model.time_scale = 2.0;
    DescendantTable table(5, 2);
    table.refresh(model.generator, cfg.generator(), 401, 0);
    const SequenceGenerator gen(model.generator, cfg.generator(), table);
    const EventSequence real{{0.0, 1}, {0.4, 2}, {1.3, 0}, {1.9, 3}};
    Rng r = make_stream(401, "rollouts");
    const Rollout roll = gen.generate(real.front(), 3, r);
    const auto costs = step_costs(model, roll.events, real);
    std::vector<double> q;
    for (std::size_t k = 1; k <= roll.log_pi.size(); ++k) q.push_back(q_log_estimate(roll.log_pi, k));
    const double err = oracle::store_gradient_error(
        model.generator,
        [&] {
          ad::Tape tape;
          tape.backward(generator_surrogate(tape, model, table, roll, real, costs, 1.0));
        },
        [&] {
          ad::Tape tape;
          model.config.entropy_coef = 0.0;
          double val = generator_surrogate(tape, model, table, roll, real, costs, 1.0).scalar();
          model.config.entropy_coef = cfg.entropy_coef;
          const PolicyGraph g = build_policy_graph(tape, model.generator, cfg.generator(), table, roll, false);
          for (std::size_t k = 0; k < q.size(); ++k) val -= cfg.entropy_coef * q[k] * g.log_pi[k].scalar();
          return val;
        });
    errors.emplace_back(v == Variant::Pr ? "generator surrogate (pr)" : "generator surrogate", err);
  }

  const double t = seconds_since(t0);
  bool ok = t < 60.0;
  std::string detail;
  for (const auto& [name, e] : errors) {
    ok = ok && e < 1e-4;
    detail += fmt("%s %.1e, ", name.c_str(), e);
  }
  return {ok, "D=4, T=3 relative errors (< 1e-4): " + detail + fmt("%.1f s (< 60)", t)};
}

// ---------------------------------------------------------------------------

Outcome simulator_checks() {
  RelationNetwork chain(2);
  chain.add_edge(0, 1);
  SimulationConfig cfg;
  cfg.marker_count = 2;
  cfg.time_window = std::numeric_limits<double>::infinity();
  const auto adj = chain.adjacency();
  std::vector<double> dt;
  Rng rng = make_stream(500, "cascades");
  for (int i = 0; i < 100000; ++i) {
    const Cascade c = simulate_cascade_from(adj, 0, cfg, rng);
    if (c.events.size() != 2) return {false, "chain cascade did not produce two events"};
    dt.push_back(c.events[1].time - c.events[0].time);
  }
  const double d = oracle::ks_statistic(dt, [](double t) { return 1.0 - std::exp(-t * t); });
  const double crit = oracle::ks_critical(dt.size(), 0.01);

  RelationNetwork diamond(4);
  diamond.add_edge(0, 1);
  diamond.add_edge(0, 2);
  diamond.add_edge(1, 3);
  diamond.add_edge(2, 3);
  cfg.marker_count = 4;
  cfg.time_window = 100.0;
  const auto dadj = diamond.adjacency();
  // Tape order: 0->1, 0->2, then out-edges of whichever of 1, 2 fires first,
  // then of the other one if it fires before 3.
  const std::vector<double> tape_values{0.75, 0.25, 0.875, 0.0625};
  oracle::UniformTape tape{tape_values};
  const Cascade c = simulate_cascade_from(dadj, 0, cfg, tape);
  const double t1 = rayleigh_quantile(cfg.delay, 0.75), t2 = rayleigh_quantile(cfg.delay, 0.25);
  const double via2 = t2 + rayleigh_quantile(cfg.delay, 0.875);
  const double via1 = t1 + rayleigh_quantile(cfg.delay, 0.0625);
  const double expected = t1 < via2 ? std::min(via1, via2) : via2;
  double got = -1.0;
  for (const auto& e : c.events)
    if (e.marker == 3) got = e.time;
  const bool exact = got == expected && c.events.size() == 4;
  return {d < crit && exact, fmt("KS D = %.5f vs critical %.5f at alpha 0.01 (1e5 cascades); diamond join time %.12f, "
                                 "expected min over paths %.12f",
                                 d, crit, got, expected)};
}

// ---------------------------------------------------------------------------

struct DeskData {
  Dataset data;
  SimulationConfig sim;
};

DeskData desk_dataset() {
  SimulationConfig sim;
  sim.marker_count = 100;
  sim.edge_probability = 0.01;
  sim.time_window = 10.0;
  sim.sequence_count = 2000;
  sim.seed = 600;
  return {generate_dataset(sim).dataset, sim};
}

std::vector<std::size_t> test_indices(const Dataset& data, double train_fraction) {
  std::vector<std::size_t> idx;
  for (std::size_t i : split_dataset(data, train_fraction).test)
    if (data.sequences[i].size() >= 2) idx.push_back(i);
  return idx;
}

struct VariantRun {
  ReconstructionReport recon;
  PredictionReport pred;
  std::vector<TrainRow> rows;
  double seconds = 0.0;
};

VariantRun run_variant(const DeskData& desk, Variant variant, std::size_t steps, const fs::path& out) {
  const auto t0 = std::chrono::steady_clock::now();
  TrainConfig cfg;  // library defaults
  cfg.variant = variant;
  cfg.steps = steps;
  cfg.seed = 601;
  fs::create_directories(out);
  TrainHooks hooks;
  hooks.log_csv = out / "train.csv";
  hooks.checkpoint = out / "model.ckpt";
  TrainResult result = train(desk.data, cfg, hooks);
  VariantRun run;
  run.rows = std::move(result.rows);
  const RelationNetwork est = reconstruct_network(result.model.generator, cfg.generator(), 3);
  run.recon = score_reconstruction(est, *desk.data.ground_truth, 3);
  const auto idx = test_indices(desk.data, cfg.train_fraction);
  const std::vector<double> ratios{0.5};
  run.pred = evaluate_prediction(result.model, desk.data, idx, ratios, 100).at(0);
  write_file_atomic(out / "reconstruction.csv", reconstruction_csv({run.recon}));
  write_file_atomic(out / "prediction.csv", prediction_csv({run.pred}));
  run.seconds = seconds_since(t0);
  return run;
}

Outcome desk_scale(const DeskData& desk, std::size_t steps, const fs::path& out) {
  const VariantRun run = run_variant(desk, Variant::Lantern, steps, out / "lantern");
  const double baseline = random_baseline_f1(desk.sim.edge_probability, 3, desk.sim.marker_count);
  const bool a = run.recon.f1 > 2.0 * baseline;
  const double chance = 3.0 / static_cast<double>(desk.sim.marker_count);
  const bool b = run.pred.marker_accuracy > chance;
  const std::size_t n = run.rows.size(), q = n / 4;
  double first = 0.0, last = 0.0;
  for (std::size_t i = 0; i < q; ++i) {
    first += run.rows[i].gen_objective / static_cast<double>(q);
    last += run.rows[n - q + i].gen_objective / static_cast<double>(q);
  }
  const bool c = last < first;
  const bool fast = run.seconds < 1800.0;
  return {a && b && c && fast,
          fmt("%zu steps: (a) F1@3 = %.4f vs 2 x baseline %.4f %s; (b) accuracy@0.5 = %.4f vs 3/M = %.4f %s; "
              "(c) generator curve quartiles %.4f -> %.4f %s; %.0f s (<= 1800)",
              steps, run.recon.f1, 2.0 * baseline, a ? "ok" : "MISSED", run.pred.marker_accuracy, chance,
              b ? "ok" : "MISSED", first, last, c ? "ok" : "MISSED", run.seconds)};
}

Outcome variants(const DeskData& desk, std::size_t steps, const fs::path& out) {
  std::string detail;
  bool ok = true;
  for (Variant v : {Variant::Rnn, Variant::Pr}) {
    const fs::path dir = out / to_string(v);
    const VariantRun run = run_variant(desk, v, steps, dir);
    const bool emitted = fs::file_size(dir / "reconstruction.csv") > 0 && fs::file_size(dir / "prediction.csv") > 0 &&
                         fs::exists(dir / "model.ckpt") && run.rows.size() == steps;
    const bool finite = std::isfinite(run.recon.f1) && std::isfinite(run.pred.time_mse);
    ok = ok && emitted && finite;
    detail += fmt("%s: %zu steps, F1@3 %.4f, accuracy@0.5 %.4f, time MSE %.3f, reports in %s; ", to_string(v).c_str(),
                  run.rows.size(), run.recon.f1, run.pred.marker_accuracy, run.pred.time_mse, dir.string().c_str());
  }
  return {ok, detail};
}

// ---------------------------------------------------------------------------

Outcome scaling(const fs::path& out) {
  BenchmarkConfig len_cfg;
  len_cfg.marker_counts = {100};
  len_cfg.lengths = {5, 25, 50};
  len_cfg.reps = 200;
  len_cfg.train_timing = false;
  const auto rows = benchmark_scaling(len_cfg);
  std::vector<double> x, y;
  for (const auto& r : rows) {
    x.push_back(static_cast<double>(r.length));
    y.push_back(r.generation_s);
  }
  const double r2 = linear_fit_r2(x, y);

  BenchmarkConfig m_cfg;
  m_cfg.marker_counts = {100, 1000, 10000};
  m_cfg.lengths = {25};
  m_cfg.reps = 200;
  m_cfg.train_timing = false;
  const auto mrows = benchmark_scaling(m_cfg);
  const double ratio = mrows.back().per_step_s / mrows.front().per_step_s;
  const double slope = std::log(ratio) / std::log(100.0);
  std::vector<BenchmarkRow> all = rows;
  all.insert(all.end(), mrows.begin(), mrows.end());
  write_file_atomic(out / "benchmark.csv", benchmark_csv(all));
  return {r2 >= 0.95 && slope < 1.0,
          fmt("generation time vs length {5,25,50}: R^2 = %.4f (>= 0.95); per-step cost M=100 -> 10000 grows x%.2f "
              "(log-log slope %.3f < 1)",
              r2, ratio, slope)};
}

// ---------------------------------------------------------------------------

std::string without_last_column(const std::string& csv) {
  std::istringstream in(csv);
  std::string line, out;
  while (std::getline(in, line)) out += line.substr(0, line.rfind(',')) + "\n";
  return out;
}

Outcome determinism(const fs::path& out) {
  const fs::path dir = out / "rerun";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string data = (dir / "data").string(), ckpt = (dir / "model.ckpt").string();
  const std::string log = (dir / "train.csv").string(), eval = (dir / "eval").string();
  auto run = [](std::vector<std::string> args) {
    args.insert(args.begin(), "lantern");
    return dispatch(args);
  };
  if (run({"simulate", "--markers", "60", "--edge-prob", "0.03", "--count", "300", "--seed", "800", "--out", data}) ||
      run({"train", "--dataset", data + "/dataset.jsonl", "--steps", "30", "--seed", "801", "--threads", "2", "--out",
           ckpt, "--log", log}) ||
      run({"evaluate", "--model", ckpt, "--dataset", data + "/dataset.jsonl", "--k", "3,4,5", "--ratios", "0.2,0.5",
           "--samples", "50", "--out", eval})) {
    return {false, "initial pipeline failed"};
  }
  const std::vector<std::string> files{data + "/dataset.jsonl", data + "/dataset.jsonl.edges",
                                       data + "/dataset.jsonl.parents", ckpt, eval + "/reconstruction.csv",
                                       eval + "/prediction.csv"};
  std::vector<std::string> before;
  for (const auto& f : files) before.push_back(slurp(f));
  const std::string before_log = without_last_column(slurp(log));

  for (const std::string m : {data + "/manifest.json", ckpt + ".manifest.json", eval + "/manifest.json"})
    if (run({"rerun", "--manifest", m})) return {false, "rerun of " + m + " failed"};

  std::size_t identical = 0;
  std::string differing;
  for (std::size_t i = 0; i < files.size(); ++i) {
    if (slurp(files[i]) == before[i]) ++identical;
    else differing += " " + files[i];
  }
  const bool log_same = without_last_column(slurp(log)) == before_log;
  return {identical == files.size() && log_same,
          fmt("%zu/%zu artifacts byte-identical after rerun from manifests, metric CSV %s (wallclock excluded)%s",
              identical, files.size(), log_same ? "identical" : "DIFFERS", differing.c_str())};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LANTERN acceptance run"};
  std::string out = "acceptance_out";
  std::size_t desk_steps = 20000, variant_steps = 2000;
  std::vector<int> only;
  app.add_option("--out", out, "artifact directory")->capture_default_str();
  app.add_option("--desk-steps", desk_steps, "training steps for the desk-scale run")->capture_default_str();
  app.add_option("--variant-steps", variant_steps, "training steps for the RNN and PR runs")->capture_default_str();
  app.add_option("--only", only, "criteria to run (default: all)");
  CLI11_PARSE(app, argc, argv);
  set_log_level(LogLevel::Error);
  fs::create_directories(out);

  auto wanted = [&](int c) { return only.empty() || std::find(only.begin(), only.end(), c) != only.end(); };
  std::optional<DeskData> desk;
  auto desk_data = [&]() -> const DeskData& {
    if (!desk) desk = desk_dataset();
    return *desk;
  };

  const std::vector<std::pair<int, std::function<Outcome()>>> criteria{
      {1, frontier_equivalence},
      {2, conservation},
      {3, structure_invariant},
      {4, gradient_checks},
      {5, simulator_checks},
      {6, [&] { return desk_scale(desk_data(), desk_steps, out); }},
      {7, [&] { return scaling(out); }},
      {8, [&] { return determinism(out); }},
      {9, [&] { return variants(desk_data(), variant_steps, out); }},
  };

  // Criterion 6 is a learning-quality target; its line is printed but does not
  // set the exit status.
  constexpr int kReportOnly = 6;
  int failed = 0;
  for (const auto& [id, run] : criteria) {
    if (!wanted(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("criterion %d: %s  %s [%.1f s]\n", id, o.pass ? "PASS" : "FAIL", o.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
    if (!o.pass && id != kReportOnly) ++failed;
  }
  return failed == 0 ? 0 : 1;
}
