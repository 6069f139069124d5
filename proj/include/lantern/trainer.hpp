#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "lantern/discriminator.hpp"
#include "lantern/generator.hpp"
#include "lantern/parameters.hpp"
#include "lantern/types.hpp"

namespace lantern {

enum class Variant { Lantern, Rnn, Pr };
enum class TimeGradient { Pathwise, None };

std::string to_string(Variant v);
Variant parse_variant(const std::string& s);

struct TrainConfig {
  Variant variant = Variant::Lantern;
  std::size_t batch_size = 32;
  std::size_t steps = 2000;
  double gamma = 0.99;
  double entropy_coef = 1e-3;  // lambda
  AdamConfig gen_adam{1e-5, 0.9, 0.99, 1e-8};
  AdamConfig disc_adam{1e-4, 0.9, 0.99, 1e-8};
  EmbeddingConfig embedding{};
  std::size_t descendants = 3;
  TimeInput time_input = TimeInput::Parent;
  bool forbid_reactivation = false;
  bool disc_causal = false;
  bool share_embeddings = false;
  bool paper_literal_signs = false;
  TimeGradient time_gradient = TimeGradient::Pathwise;
  std::size_t rollout_length = 0;  // 0: match the paired real sequence
  double pr_constant = 2.0;
  double train_fraction = 0.8;
  std::size_t min_length = 2;
  std::size_t checkpoint_every = 0;
  std::size_t threads = 1;
  std::uint64_t seed = 0;

  void validate() const;
  GeneratorConfig generator() const;
  DiscriminatorConfig discriminator() const;
};

/// Flat `key = value` text; '#' starts a comment. Unknown keys throw ConfigError.
TrainConfig parse_config(const std::string& text, TrainConfig base = {});
TrainConfig read_config(const std::filesystem::path& path, TrainConfig base = {});
/// Applies one key/value pair.
void set_config_value(TrainConfig& cfg, const std::string& key, const std::string& value);
nlohmann::json config_to_json(const TrainConfig& cfg);
TrainConfig config_from_json(const nlohmann::json& j);

/// Generator and discriminator parameters plus what evaluation needs.
struct Model {
  std::size_t marker_count = 0;
  TrainConfig config;
  ParameterStore generator;
  ParameterStore discriminator;  // empty for the PR variant
  double time_scale = 1.0;
  std::size_t step = 0;

  const ad::Matrix* shared_embedding() const;
};

Model init_model(std::size_t marker_count, const TrainConfig& cfg);

nlohmann::json model_to_json(const Model& model);
Model model_from_json(const nlohmann::json& j);
void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

/// Train/test split by dataset order.
struct Split {
  std::vector<std::size_t> train, test;
};
Split split_dataset(const Dataset& data, double train_fraction);

/// Q_log at step k (1-based): sum_{k' >= k} -log pi_{k'}.
double q_log_estimate(std::span<const double> log_pi, std::size_t k);

/// sum_k log d_k(generated) + sum_k log(1 - d_k(real)) for one pair.
ad::Var discriminator_objective(ad::Tape& tape, ParameterStore& disc, const DiscriminatorConfig& cfg,
                                const EventSequence& generated, const EventSequence& real,
                                const ad::Matrix* shared_embedding = nullptr);

/// Ascends the discriminator objective on one batch; returns its value
/// (1/B) sum_b [sum_k log d_k(gen_b) + sum_k log(1 - d_k(real_b))].
double discriminator_update(ParameterStore& disc, const DiscriminatorConfig& cfg,
                            std::span<const EventSequence> generated, std::span<const EventSequence> real,
                            const AdamConfig& adam, const ad::Matrix* shared_embedding = nullptr);

/// Per-step costs for one rollout: log d_k (discriminator) or -r_k (heuristic).
std::vector<double> step_costs(const Model& model, const EventSequence& generated, const EventSequence& real);

/// Surrogate whose gradient is the generator update for one rollout, scaled
/// by `weight`. Returned as a tape scalar.
ad::Var generator_surrogate(ad::Tape& tape, Model& model, const DescendantTable& table, const Rollout& rollout,
                            const EventSequence& real, std::span<const double> costs, double weight);

/// One Adam step on the generator; returns mean_b sum_k gamma^(k-1) (-cost_k).
double generator_update(Model& model, const DescendantTable& table, std::span<const Rollout> rollouts,
                        std::span<const EventSequence> real);

struct TrainRow {
  std::size_t step;
  double gen_objective;
  double disc_objective;  // NaN for the PR variant
  double wallclock_s;
};

struct TrainHooks {
  std::optional<std::filesystem::path> log_csv;
  std::optional<std::filesystem::path> checkpoint;
  std::function<void(const TrainRow&)> on_step;
};

struct TrainResult {
  Model model;
  std::vector<TrainRow> rows;
};

TrainResult train(const Dataset& data, const TrainConfig& cfg, const TrainHooks& hooks = {});

/// Same loop with cfg.variant forced to PR.
TrainResult train_variant_pr(const Dataset& data, TrainConfig cfg, const TrainHooks& hooks = {});

std::string metrics_csv_header();
std::string metrics_csv_row(const TrainRow& row);

}  // namespace lantern
