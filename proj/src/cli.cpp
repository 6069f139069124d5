#include "lantern/cli.hpp"

#include <chrono>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"

#include "lantern/dataset_io.hpp"
#include "lantern/evaluation.hpp"
#include "lantern/log.hpp"
#include "lantern/simulator.hpp"
#include "lantern/trainer.hpp"

#ifndef LANTERN_VERSION
#define LANTERN_VERSION "0.0.0"
#endif

namespace lantern {

nlohmann::json RunManifest::to_json() const {
  return {{"command", command}, {"argv", argv},       {"config", config},          {"seed", seed},
          {"inputs", inputs},   {"outputs", outputs}, {"code_version", code_version}, {"wallclock_s", wallclock_s}};
}

RunManifest RunManifest::from_json(const nlohmann::json& j) {
  try {
    RunManifest m;
    m.command = j.at("command").get<std::string>();
    m.argv = j.at("argv").get<std::vector<std::string>>();
    m.config = j.value("config", nlohmann::json::object());
    m.seed = j.value("seed", std::uint64_t{0});
    m.inputs = j.value("inputs", std::vector<std::string>{});
    m.outputs = j.value("outputs", std::vector<std::string>{});
    m.code_version = j.value("code_version", std::string{});
    m.wallclock_s = j.value("wallclock_s", 0.0);
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ParseError, std::string("malformed manifest: ") + e.what());
  }
}

void write_manifest(const RunManifest& manifest, const std::filesystem::path& path) {
  write_file_atomic(path, manifest.to_json().dump(2) + "\n");
}

RunManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot open manifest " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ParseError, path.string() + ": " + e.what());
  }
  return RunManifest::from_json(j);
}

namespace {

using Clock = std::chrono::steady_clock;

template <typename T>
std::vector<T> parse_list(const std::string& text, const std::string& flag) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::istringstream is(item);
    T v{};
    if (!(is >> v) || !is.eof()) throw CLI::ValidationError(flag, "cannot parse list item '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw CLI::ValidationError(flag, "empty list");
  return out;
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(Errc::IoError, "cannot create " + dir.string() + ": " + ec.message());
}

void ensure_parent(const std::filesystem::path& file) {
  if (file.has_parent_path()) ensure_dir(file.parent_path());
}

struct Context {
  std::vector<std::string> argv;
  Clock::time_point start = Clock::now();

  RunManifest manifest(const std::string& command) const {
    RunManifest m;
    m.command = command;
    m.argv = argv;
    m.code_version = LANTERN_VERSION;
    m.wallclock_s = std::chrono::duration<double>(Clock::now() - start).count();
    return m;
  }
};

// ---------------------------------------------------------------------------

struct SimulateOpts {
  SimulationConfig cfg;
  std::string out;
};

void run_simulate(const SimulateOpts& o, const Context& ctx) {
  o.cfg.validate();
  const SimulationResult res = generate_dataset(o.cfg);
  const std::filesystem::path dir(o.out);
  ensure_dir(dir);
  const auto data_path = dir / "dataset.jsonl";
  write_dataset(res.dataset, data_path);
  write_parents(res.parents, parents_sidecar(data_path));
  if (res.truncated > 0) log_warn(res.truncated, " cascades hit the length cap of ", o.cfg.max_length);

  RunManifest m = ctx.manifest("simulate");
  m.seed = o.cfg.seed;
  m.config = {{"markers", o.cfg.marker_count},       {"edge_prob", o.cfg.edge_probability},
              {"window", o.cfg.time_window},         {"count", o.cfg.sequence_count},
              {"delay_a", o.cfg.delay.a},            {"delay_b", o.cfg.delay.b},
              {"max_length", o.cfg.max_length},      {"allow_isolated_sources", o.cfg.allow_isolated_sources},
              {"truncated", res.truncated}};
  m.outputs = {data_path.string(), edges_sidecar(data_path).string(), parents_sidecar(data_path).string()};
  write_manifest(m, dir / "manifest.json");
  log_info("wrote ", res.dataset.sequences.size(), " sequences to ", data_path.string());
}

// ---------------------------------------------------------------------------

struct TrainOpts {
  std::string dataset;
  std::string variant;
  std::string config;
  std::string out;
  std::string log;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> steps;
  std::optional<std::size_t> threads;
};

TrainConfig resolve_train_config(const TrainOpts& o) {
  TrainConfig cfg;
  if (!o.config.empty()) cfg = read_config(o.config);
  for (const auto& kv : o.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw CLI::ValidationError("--set", "expected key=value, got '" + kv + "'");
    set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (!o.variant.empty()) cfg.variant = parse_variant(o.variant);
  if (o.seed) cfg.seed = *o.seed;
  if (o.steps) cfg.steps = *o.steps;
  if (o.threads) cfg.threads = *o.threads;
  cfg.validate();
  return cfg;
}

void run_train(const TrainOpts& o, const Context& ctx) {
  const TrainConfig cfg = resolve_train_config(o);
  const Dataset data = read_dataset(o.dataset);
  const std::filesystem::path ckpt(o.out);
  ensure_parent(ckpt);
  TrainHooks hooks;
  hooks.checkpoint = ckpt;
  if (!o.log.empty()) {
    ensure_parent(o.log);
    hooks.log_csv = std::filesystem::path(o.log);
  }
  const auto every = std::max<std::size_t>(1, cfg.steps / 10);
  hooks.on_step = [&](const TrainRow& row) {
    if ((row.step + 1) % every == 0) {
      log_info("step ", row.step + 1, "/", cfg.steps, " gen ", row.gen_objective, " disc ", row.disc_objective);
    }
  };
  train(data, cfg, hooks);

  RunManifest m = ctx.manifest("train");
  m.seed = cfg.seed;
  m.config = config_to_json(cfg);
  m.inputs = {o.dataset};
  m.outputs = {ckpt.string()};
  if (!o.log.empty()) m.outputs.push_back(o.log);
  write_manifest(m, ckpt.string() + ".manifest.json");
}

// ---------------------------------------------------------------------------

struct EvaluateOpts {
  std::string model;
  std::string dataset;
  std::string ks = "3,4,5";
  std::string ratios = "0.2,0.4,0.6,0.8";
  std::size_t samples = 100;
  std::string table = "topk";
  std::string out;
  std::size_t threads = 1;
};

PredictionTable parse_table(const std::string& s) {
  if (s == "topk") return PredictionTable::TopK;
  if (s == "sampled") return PredictionTable::Sampled;
  throw CLI::ValidationError("--table", "expected topk or sampled");
}

void run_evaluate(const EvaluateOpts& o, const Context& ctx) {
  const auto ks = parse_list<std::size_t>(o.ks, "--k");
  const auto ratios = parse_list<double>(o.ratios, "--ratios");
  const PredictionTable table = parse_table(o.table);
  const Model model = load_checkpoint(o.model);
  const Dataset data = read_dataset(o.dataset);
  if (data.marker_count != model.marker_count) {
    throw Error(Errc::MarkerCountMismatch, "dataset has " + std::to_string(data.marker_count) +
                                               " markers, model " + std::to_string(model.marker_count));
  }
  const std::filesystem::path dir(o.out);
  ensure_dir(dir);
  RunManifest m = ctx.manifest("evaluate");
  m.inputs = {o.model, o.dataset};

  if (data.ground_truth) {
    std::vector<ReconstructionReport> reports;
    for (std::size_t k : ks) {
      reports.push_back(
          score_reconstruction(reconstruct_network(model.generator, model.config.generator(), k), *data.ground_truth, k));
    }
    write_file_atomic(dir / "reconstruction.csv", reconstruction_csv(reports));
    m.outputs.push_back((dir / "reconstruction.csv").string());
  } else {
    log_warn("dataset has no ground-truth network; skipping reconstruction");
  }
  const Split split = split_dataset(data, model.config.train_fraction);
  const auto reports = evaluate_prediction(model, data, split.test, ratios, o.samples, table, o.threads);
  write_file_atomic(dir / "prediction.csv", prediction_csv(reports));
  m.outputs.push_back((dir / "prediction.csv").string());
  m.seed = model.config.seed;
  m.config = {{"k", ks}, {"ratios", ratios}, {"samples", o.samples}, {"table", o.table}};
  write_manifest(m, dir / "manifest.json");
}

// ---------------------------------------------------------------------------

struct PredictOpts {
  std::string model;
  std::string dataset;
  double ratio = 0.5;
  std::size_t samples = 100;
  std::string table = "topk";
  std::string out;
};

void run_predict(const PredictOpts& o, const Context& ctx) {
  const Model model = load_checkpoint(o.model);
  const Dataset data = read_dataset(o.dataset);
  const NextEventPredictor predictor(model, parse_table(o.table));
  const Split split = split_dataset(data, model.config.train_fraction);
  std::ostringstream csv;
  csv << "sequence,prefix_length,predicted_time,predicted_marker,true_time,true_marker\n";
  csv.precision(17);
  for (std::size_t i : split.test) {
    const auto& seq = data.sequences[i];
    const std::size_t len = prefix_length(o.ratio, seq.size());
    if (len >= seq.size()) continue;
    Rng rng = make_stream(model.config.seed, "predict", i);
    const Prediction p = predictor.predict_next(std::span<const Event>(seq.data(), len), o.samples, rng);
    csv << i << "," << len << "," << p.time << "," << p.marker << "," << seq[len].time << "," << seq[len].marker
        << "\n";
  }
  RunManifest m = ctx.manifest("predict");
  m.seed = model.config.seed;
  m.inputs = {o.model, o.dataset};
  m.config = {{"observed_ratio", o.ratio}, {"samples", o.samples}, {"table", o.table}};
  if (o.out.empty()) {
    std::cout << csv.str();
    return;
  }
  ensure_parent(o.out);
  write_file_atomic(o.out, csv.str());
  m.outputs = {o.out};
  write_manifest(m, o.out + ".manifest.json");
}

// ---------------------------------------------------------------------------

struct BenchmarkOpts {
  std::string grid;
  std::string out;
};

BenchmarkConfig read_grid(const std::string& path) {
  BenchmarkConfig cfg;
  if (path.empty()) return cfg;
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot open grid " + path);
  std::string line;
  while (std::getline(in, line)) {
    if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
    const auto eq = line.find('=');
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    if (eq == std::string::npos) throw Error(Errc::ConfigError, "grid line '" + line + "': expected key = value");
    auto trim = [](std::string s) {
      s.erase(0, s.find_first_not_of(" \t\r"));
      s.erase(s.find_last_not_of(" \t\r") + 1);
      return s;
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "markers") cfg.marker_counts = parse_list<std::size_t>(value, key);
    else if (key == "lengths") cfg.lengths = parse_list<std::size_t>(value, key);
    else if (key == "reps") cfg.reps = parse_list<std::size_t>(value, key).front();
    else if (key == "descendants") cfg.descendants = parse_list<std::size_t>(value, key).front();
    else if (key == "dim") cfg.embedding.dim = parse_list<std::size_t>(value, key).front();
    else if (key == "heads") cfg.embedding.heads = parse_list<std::size_t>(value, key).front();
    else if (key == "train_timing") cfg.train_timing = value == "true" || value == "1";
    else if (key == "seed") cfg.seed = parse_list<std::uint64_t>(value, key).front();
    else throw Error(Errc::ConfigError, "unknown grid key '" + key + "'");
  }
  return cfg;
}

void run_benchmark(const BenchmarkOpts& o, const Context& ctx) {
  const BenchmarkConfig cfg = read_grid(o.grid);
  const auto rows = benchmark_scaling(cfg);
  ensure_parent(o.out);
  write_file_atomic(o.out, benchmark_csv(rows));
  for (std::size_t m : cfg.marker_counts) {
    std::vector<double> x, y;
    for (const auto& r : rows) {
      if (r.markers != m) continue;
      x.push_back(static_cast<double>(r.length));
      y.push_back(r.generation_s);
    }
    if (x.size() >= 2) log_info("M=", m, " generation time vs length R^2 = ", linear_fit_r2(x, y));
  }
  RunManifest m = ctx.manifest("benchmark");
  m.seed = cfg.seed;
  m.inputs = {o.grid};
  m.outputs = {o.out};
  m.config = {{"markers", cfg.marker_counts}, {"lengths", cfg.lengths}, {"reps", cfg.reps},
              {"descendants", cfg.descendants}, {"dim", cfg.embedding.dim}};
  write_manifest(m, o.out + ".manifest.json");
}

// ---------------------------------------------------------------------------

std::vector<std::string> apply_overrides(std::vector<std::string> argv, const std::vector<std::string>& overrides) {
  for (const auto& ov : overrides) {
    const auto eq = ov.find('=');
    if (eq == std::string::npos) throw CLI::ValidationError("--override", "expected flag=value, got '" + ov + "'");
    const std::string flag = "--" + ov.substr(0, eq);
    const std::string value = ov.substr(eq + 1);
    bool found = false;
    for (std::size_t i = 0; i + 1 < argv.size(); ++i) {
      if (argv[i] == flag) {
        argv[i + 1] = value;
        found = true;
      }
    }
    if (!found) {
      argv.push_back(flag);
      argv.push_back(value);
    }
  }
  return argv;
}

int run(const std::vector<std::string>& argv_in) {
  Context ctx;
  ctx.argv = argv_in;

  CLI::App app{"LANTERN: marked event sequence generation and relation network inference"};
  app.require_subcommand(1);
  std::string log_level;
  app.add_option("--log-level", log_level, "error|warn|info|debug (overrides LANTERN_LOG)");

  SimulateOpts sim;
  auto* s = app.add_subcommand("simulate", "simulate a Bernoulli network and Rayleigh cascades");
  s->add_option("--markers", sim.cfg.marker_count, "number of markers M")->capture_default_str();
  s->add_option("--edge-prob", sim.cfg.edge_probability, "edge probability p")->capture_default_str();
  s->add_option("--window", sim.cfg.time_window, "observation window T^c")->capture_default_str();
  s->add_option("--count", sim.cfg.sequence_count, "number of sequences")->capture_default_str();
  s->add_option("--seed", sim.cfg.seed, "master seed")->capture_default_str();
  s->add_option("--delay-a", sim.cfg.delay.a, "Rayleigh shift a")->capture_default_str();
  s->add_option("--delay-b", sim.cfg.delay.b, "Rayleigh scale b")->capture_default_str();
  s->add_option("--max-length", sim.cfg.max_length, "cap on events per cascade")->capture_default_str();
  s->add_flag("--allow-isolated-sources", sim.cfg.allow_isolated_sources, "allow sources with no out-edges");
  s->add_option("--out", sim.out, "output directory")->required();

  TrainOpts tr;
  auto* t = app.add_subcommand("train", "adversarial training");
  t->add_option("--dataset", tr.dataset, "dataset JSONL")->required();
  t->add_option("--variant", tr.variant, "lantern|rnn|pr (overrides the config)");
  t->add_option("--config", tr.config, "key = value config file");
  t->add_option("--set", tr.sets, "extra key=value config entries (repeatable)");
  t->add_option("--out", tr.out, "checkpoint file")->required();
  t->add_option("--log", tr.log, "metric CSV");
  t->add_option("--seed", tr.seed, "master seed (overrides the config)");
  t->add_option("--steps", tr.steps, "training steps (overrides the config)");
  t->add_option("--threads", tr.threads, "worker threads for rollouts");

  EvaluateOpts ev;
  auto* e = app.add_subcommand("evaluate", "reconstruction and next-event prediction metrics");
  e->add_option("--model", ev.model, "checkpoint")->required();
  e->add_option("--dataset", ev.dataset, "dataset JSONL")->required();
  e->add_option("--k", ev.ks, "comma-separated top-K cutoffs")->capture_default_str();
  e->add_option("--ratios", ev.ratios, "comma-separated observed ratios")->capture_default_str();
  e->add_option("--samples", ev.samples, "one-step samples per prediction")->capture_default_str();
  e->add_option("--table", ev.table, "descendant table for prediction: topk|sampled")->capture_default_str();
  e->add_option("--threads", ev.threads, "worker threads")->capture_default_str();
  e->add_option("--out", ev.out, "output directory")->required();

  PredictOpts pr;
  auto* p = app.add_subcommand("predict", "next-event predictions for the test split");
  p->add_option("--model", pr.model, "checkpoint")->required();
  p->add_option("--dataset", pr.dataset, "dataset JSONL")->required();
  p->add_option("--observed-ratio", pr.ratio, "fraction of each sequence revealed")->capture_default_str();
  p->add_option("--samples", pr.samples, "one-step samples per prediction")->capture_default_str();
  p->add_option("--table", pr.table, "topk|sampled")->capture_default_str();
  p->add_option("--out", pr.out, "output CSV (stdout if omitted)");

  BenchmarkOpts be;
  auto* b = app.add_subcommand("benchmark", "generation and training runtime grid");
  b->add_option("--grid", be.grid, "grid file (markers, lengths, reps, descendants, dim, heads, seed)");
  b->add_option("--out", be.out, "output CSV")->required();

  std::string manifest_path;
  std::vector<std::string> overrides;
  auto* r = app.add_subcommand("rerun", "re-run the command recorded in a manifest");
  r->add_option("--manifest", manifest_path, "manifest JSON")->required();
  r->add_option("--override", overrides, "flag=value replacing a recorded flag (repeatable)");

  std::vector<std::string> args(argv_in.begin() + (argv_in.empty() ? 0 : 1), argv_in.end());
  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp& err) {
    return app.exit(err);
  } catch (const CLI::CallForAllHelp& err) {
    return app.exit(err);
  } catch (const CLI::ParseError& err) {
    std::cerr << "usage error: " << err.what() << "\n";
    return 1;
  }
  if (!log_level.empty()) {
    if (log_level == "error") set_log_level(LogLevel::Error);
    else if (log_level == "warn") set_log_level(LogLevel::Warn);
    else if (log_level == "info") set_log_level(LogLevel::Info);
    else if (log_level == "debug") set_log_level(LogLevel::Debug);
    else {
      std::cerr << "usage error: --log-level: unknown level '" << log_level << "'\n";
      return 1;
    }
  }

  try {
    if (*s) run_simulate(sim, ctx);
    else if (*t) run_train(tr, ctx);
    else if (*e) run_evaluate(ev, ctx);
    else if (*p) run_predict(pr, ctx);
    else if (*b) run_benchmark(be, ctx);
    else if (*r) {
      const RunManifest m = read_manifest(manifest_path);
      return dispatch(apply_overrides(m.argv, overrides));
    }
  } catch (const CLI::ValidationError& err) {
    std::cerr << "usage error: " << err.what() << "\n";
    return 1;
  } catch (const Error& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 2;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 2;
  }
  return 0;
}

}  // namespace

int dispatch(const std::vector<std::string>& argv) { return run(argv); }

int dispatch(int argc, const char* const* argv) { return run(std::vector<std::string>(argv, argv + argc)); }

}  // namespace lantern
