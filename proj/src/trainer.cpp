#include "lantern/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

#include "lantern/dataset_io.hpp"
#include "lantern/log.hpp"
#include "lantern/policy.hpp"

namespace lantern {

namespace {

constexpr const char* kCheckpointFormat = "lantern-checkpoint";
constexpr int kCheckpointVersion = 1;

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

ad::Matrix time_row(const EventSequence& seq) {
  ad::Matrix t(1, static_cast<Eigen::Index>(seq.size()));
  for (std::size_t i = 0; i < seq.size(); ++i) t(0, static_cast<Eigen::Index>(i)) = seq[i].time;
  return t;
}

std::vector<MarkerId> marker_list(const EventSequence& seq) {
  std::vector<MarkerId> m;
  m.reserve(seq.size());
  for (const auto& e : seq) m.push_back(e.marker);
  return m;
}

double gamma_pow(double gamma, std::size_t k) { return std::pow(gamma, static_cast<double>(k - 1)); }

}  // namespace

const ad::Matrix* Model::shared_embedding() const {
  if (!config.share_embeddings) return nullptr;
  return &generator.get(GeneratorNames().marker_embedding()).value();
}

Model init_model(std::size_t marker_count, const TrainConfig& cfg) {
  cfg.validate();
  Model m;
  m.marker_count = marker_count;
  m.config = cfg;
  cfg.generator().validate(marker_count);
  Rng rng = make_stream(cfg.seed, "init");
  add_generator_parameters(m.generator, marker_count, cfg.generator(), rng);
  if (cfg.variant != Variant::Pr) add_discriminator_parameters(m.discriminator, marker_count, cfg.discriminator(), rng);
  return m;
}

nlohmann::json model_to_json(const Model& model) {
  return {
      {"format", kCheckpointFormat},
      {"version", kCheckpointVersion},
      {"marker_count", model.marker_count},
      {"time_scale", model.time_scale},
      {"step", model.step},
      {"config", config_to_json(model.config)},
      {"generator", model.generator.to_json()},
      {"discriminator", model.discriminator.to_json()},
  };
}

Model model_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != kCheckpointFormat) {
      throw Error(Errc::ParseError, "not a checkpoint file");
    }
    if (j.at("version").get<int>() != kCheckpointVersion) {
      throw Error(Errc::ParseError, "unsupported checkpoint version " + j.at("version").dump());
    }
    Model m;
    m.marker_count = j.at("marker_count").get<std::size_t>();
    m.time_scale = j.at("time_scale").get<double>();
    m.step = j.at("step").get<std::size_t>();
    m.config = config_from_json(j.at("config"));
    m.generator.load_json(j.at("generator"));
    m.discriminator.load_json(j.at("discriminator"));
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ParseError, std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  write_file_atomic(path, model_to_json(model).dump() + "\n");
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot open checkpoint " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ParseError, path.string() + ": " + e.what());
  }
  return model_from_json(j);
}

Split split_dataset(const Dataset& data, double train_fraction) {
  Split s;
  const auto n = data.sequences.size();
  const auto cut = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(n)));
  for (std::size_t i = 0; i < n; ++i) (i < cut ? s.train : s.test).push_back(i);
  return s;
}

double q_log_estimate(std::span<const double> log_pi, std::size_t k) {
  double q = 0.0;
  for (std::size_t i = k; i <= log_pi.size(); ++i) q -= log_pi[i - 1];
  return q;
}

ad::Var discriminator_objective(ad::Tape& tape, ParameterStore& disc, const DiscriminatorConfig& cfg,
                                const EventSequence& generated, const EventSequence& real,
                                const ad::Matrix* shared_embedding) {
  const DiscriminatorVars vars = bind_discriminator(tape, disc, cfg, shared_embedding);
  // log d = -softplus(-x), log(1 - d) = -softplus(x)
  const ad::Var log_d =
      -ad::softplus(-discriminator_logits(vars, tape.constant(time_row(generated)), marker_list(generated)));
  const ad::Var log_1md = -ad::softplus(discriminator_logits(vars, tape.constant(time_row(real)), marker_list(real)));
  return ad::sum(log_d) + ad::sum(log_1md);
}

double discriminator_update(ParameterStore& disc, const DiscriminatorConfig& cfg,
                            std::span<const EventSequence> generated, std::span<const EventSequence> real,
                            const AdamConfig& adam, const ad::Matrix* shared_embedding) {
  const double inv_b = 1.0 / static_cast<double>(generated.size());
  double objective = 0.0;
  for (std::size_t b = 0; b < generated.size(); ++b) {
    ad::Tape tape;
    const ad::Var j = discriminator_objective(tape, disc, cfg, generated[b], real[b], shared_embedding);
    objective += inv_b * j.scalar();
    tape.backward(j * (-inv_b));
  }
  adam_step(disc, adam);
  return objective;
}

std::vector<double> step_costs(const Model& model, const EventSequence& generated, const EventSequence& real) {
  if (model.config.variant == Variant::Pr) {
    auto r = heuristic_reward(generated, real, model.config.pr_constant, model.time_scale);
    for (double& x : r) x = -x;
    return r;
  }
  ad::Tape tape;
  const DiscriminatorVars vars =
      bind_discriminator_frozen(tape, model.discriminator, model.config.discriminator(), model.shared_embedding());
  const ad::Var x = discriminator_logits(vars, tape.constant(time_row(generated)), marker_list(generated));
  std::vector<double> c(static_cast<std::size_t>(x.cols()));
  for (Eigen::Index k = 0; k < x.cols(); ++k) c[static_cast<std::size_t>(k)] = -softplus(-x.value()(0, k));
  return c;
}

ad::Var generator_surrogate(ad::Tape& tape, Model& model, const DescendantTable& table, const Rollout& rollout,
                            const EventSequence& real, std::span<const double> costs, double weight) {
  const TrainConfig& cfg = model.config;
  const bool time_path = cfg.time_gradient == TimeGradient::Pathwise;
  const PolicyGraph graph = build_policy_graph(tape, model.generator, cfg.generator(), table, rollout, time_path);
  const std::size_t t_len = graph.log_pi.size();
  if (costs.size() < t_len) throw Error(Errc::ShapeMismatch, "fewer step costs than generated events");

  std::vector<double> log_pi(t_len);
  for (std::size_t k = 0; k < t_len; ++k) log_pi[k] = graph.log_pi[k].scalar();

  ad::Var total = tape.constant(0.0);
  for (std::size_t k = 1; k <= t_len; ++k) {
    const double w = gamma_pow(cfg.gamma, k) * costs[k - 1] - cfg.entropy_coef * q_log_estimate(log_pi, k);
    total = total + graph.log_pi[k - 1] * w;
  }
  if (cfg.paper_literal_signs) total = -total;

  if (time_path && t_len > 0) {
    // Pathwise part: the same discounted cost as a function of the generated times.
    ad::Var cost;
    if (cfg.variant == Variant::Pr) {
      const std::size_t n = std::min(rollout.events.size(), real.size());
      std::vector<Eigen::Index> cols;
      ad::Matrix target(1, static_cast<Eigen::Index>(n > 0 ? n - 1 : 0));
      for (std::size_t k = 1; k < n; ++k) {
        cols.push_back(static_cast<Eigen::Index>(k));
        target(0, static_cast<Eigen::Index>(k - 1)) = real[k].time;
      }
      if (!cols.empty()) {
        const ad::Var diff = (ad::col_select(graph.times, cols) - tape.constant(target)) * (1.0 / model.time_scale);
        cost = ad::mul(diff, diff);  // -r_k up to terms constant in time
      }
    } else {
      const DiscriminatorVars vars =
          bind_discriminator_frozen(tape, model.discriminator, cfg.discriminator(), model.shared_embedding());
      cost = -ad::softplus(-discriminator_logits(vars, graph.times, marker_list(rollout.events)));
    }
    if (cost.valid()) {
      ad::Matrix disc(1, cost.cols());
      for (Eigen::Index k = 0; k < cost.cols(); ++k) disc(0, k) = gamma_pow(cfg.gamma, static_cast<std::size_t>(k + 1));
      total = total + ad::sum(ad::mul(cost, tape.constant(disc)));
    }
  }
  return total * weight;
}

double generator_update(Model& model, const DescendantTable& table, std::span<const Rollout> rollouts,
                        std::span<const EventSequence> real) {
  const double inv_b = 1.0 / static_cast<double>(rollouts.size());
  double curve = 0.0;
  for (std::size_t b = 0; b < rollouts.size(); ++b) {
    const std::vector<double> costs = step_costs(model, rollouts[b].events, real[b]);
    for (std::size_t k = 1; k <= costs.size(); ++k) curve -= inv_b * gamma_pow(model.config.gamma, k) * costs[k - 1];
    ad::Tape tape;
    tape.backward(generator_surrogate(tape, model, table, rollouts[b], real[b], costs, inv_b));
  }
  adam_step(model.generator, model.config.gen_adam);
  return curve;
}

std::string metrics_csv_header() { return "step,gen_objective,disc_objective,wallclock_s"; }

std::string metrics_csv_row(const TrainRow& row) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.6f", row.step, row.gen_objective, row.disc_objective,
                row.wallclock_s);
  return buf;
}

namespace {

template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn fn) {
  threads = std::min(threads, n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (std::size_t w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += threads) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace

TrainResult train(const Dataset& data, const TrainConfig& cfg, const TrainHooks& hooks) {
  cfg.validate();
  const Split split = split_dataset(data, cfg.train_fraction);
  std::vector<std::size_t> pool;
  double time_scale = 0.0;
  for (std::size_t i : split.train) {
    const auto& s = data.sequences[i];
    if (s.size() < cfg.min_length) continue;
    pool.push_back(i);
    time_scale = std::max(time_scale, s.back().time - s.front().time);
  }
  if (pool.empty()) throw Error(Errc::EmptySequence, "no training sequence has at least min_length events");

  TrainResult result{init_model(data.marker_count, cfg), {}};
  Model& model = result.model;
  model.time_scale = time_scale > 0.0 ? time_scale : 1.0;
  const GeneratorConfig gcfg = cfg.generator();
  const DiscriminatorConfig dcfg = cfg.discriminator();
  const std::size_t batch = std::min(cfg.batch_size, pool.size());

  std::ofstream csv;
  if (hooks.log_csv) {
    csv.open(*hooks.log_csv, std::ios::trunc);
    if (!csv) throw Error(Errc::IoError, "cannot write " + hooks.log_csv->string());
    csv << metrics_csv_header() << "\n";
  }

  DescendantTable table(data.marker_count, cfg.descendants);
  std::uint64_t epoch = 0;
  std::vector<std::size_t> order = pool;
  std::size_t cursor = 0;
  auto start_epoch = [&] {
    order = pool;
    Rng rng = make_stream(cfg.seed, "batches", epoch);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
    cursor = 0;
    table.refresh(model.generator, gcfg, cfg.seed, epoch);
  };
  start_epoch();

  const auto t0 = std::chrono::steady_clock::now();
  std::vector<EventSequence> real(batch);
  std::vector<EventSequence> generated(batch);
  std::vector<Rollout> rollouts(batch);
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    if (cursor + batch > order.size()) {
      ++epoch;
      start_epoch();
    }
    for (std::size_t b = 0; b < batch; ++b) real[b] = data.sequences[order[cursor + b]];
    cursor += batch;

    const SequenceGenerator gen(model.generator, gcfg, table);
    parallel_for(batch, cfg.threads, [&](std::size_t b) {
      Rng rng = make_stream(cfg.seed, "rollouts", step * batch + b);
      const std::size_t len = cfg.rollout_length ? cfg.rollout_length : real[b].size() - 1;
      rollouts[b] = gen.generate(real[b].front(), len, rng);
      generated[b] = rollouts[b].events;
    });
    for (std::size_t b = 0; b < batch; ++b) {
      if (!(generated[b].front() == real[b].front())) {
        throw Error(Errc::SourceMismatch, "rollout source differs from its real pair");
      }
    }

    double disc_obj = std::nan("");
    if (cfg.variant != Variant::Pr) {
      const auto gen_sum = model.generator.checksum();
      disc_obj = discriminator_update(model.discriminator, dcfg, generated, real, cfg.disc_adam,
                                      model.shared_embedding());
      if (model.generator.checksum() != gen_sum) throw Error(Errc::ConfigError, "discriminator step moved the generator");
    }
    const auto disc_sum = model.discriminator.checksum();
    const double gen_obj = generator_update(model, table, rollouts, real);
    if (model.discriminator.checksum() != disc_sum) {
      throw Error(Errc::ConfigError, "generator step moved the discriminator");
    }
    if (!std::isfinite(gen_obj) || (cfg.variant != Variant::Pr && !std::isfinite(disc_obj))) {
      std::ostringstream os;
      os << "non-finite objective at step " << step << " (gen " << gen_obj << ", disc " << disc_obj << "); batch";
      for (std::size_t b = 0; b < batch; ++b) os << " " << order[cursor - batch + b];
      throw Error(Errc::NonFiniteLoss, os.str());
    }
    model.step = step + 1;

    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const TrainRow row{step, gen_obj, disc_obj, wall};
    result.rows.push_back(row);
    if (csv.is_open()) csv << metrics_csv_row(row) << "\n";
    if (hooks.on_step) hooks.on_step(row);
    log_debug("step ", step, " gen ", gen_obj, " disc ", disc_obj);
    if (hooks.checkpoint && cfg.checkpoint_every && model.step % cfg.checkpoint_every == 0) {
      save_checkpoint(model, *hooks.checkpoint);
    }
  }
  if (hooks.checkpoint) save_checkpoint(model, *hooks.checkpoint);
  return result;
}

TrainResult train_variant_pr(const Dataset& data, TrainConfig cfg, const TrainHooks& hooks) {
  cfg.variant = Variant::Pr;
  return train(data, cfg, hooks);
}

}  // namespace lantern
