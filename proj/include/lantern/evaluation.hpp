#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "lantern/generator.hpp"
#include "lantern/trainer.hpp"
#include "lantern/types.hpp"

namespace lantern {

struct ReconstructionReport {
  std::size_t k = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  RelationNetwork estimated;
};

/// For every marker i, edges (i, j) to the K most probable descendants
/// (self excluded, ties by ascending id).
RelationNetwork reconstruct_network(const ParameterStore& gen, const GeneratorConfig& cfg, std::size_t k);

ReconstructionReport score_reconstruction(const RelationNetwork& estimated, const RelationNetwork& truth,
                                          std::size_t k);

/// Expected F1 of K uniformly random out-edges per node on a Bernoulli(p)
/// network: P = p, R = K / (M - 1).
double random_baseline_f1(double p, std::size_t k, std::size_t marker_count);

enum class PredictionTable { TopK, Sampled };

struct Prediction {
  double time = 0.0;
  MarkerId marker = 0;
};

/// Conditions the generator on an observed prefix and samples next events.
class NextEventPredictor {
 public:
  NextEventPredictor(const Model& model, PredictionTable mode = PredictionTable::TopK);

  /// Generation state after replaying `prefix`.
  GenerationState condition(std::span<const Event> prefix) const;

  /// Exact one-step marker distribution of a conditioned state.
  std::map<MarkerId, double> next_marker_marginal(const GenerationState& state) const;

  struct Samples {
    Prediction estimate;  // mean time, modal marker (ties to the smallest id)
    std::map<MarkerId, std::size_t> counts;
  };
  Samples sample(std::span<const Event> prefix, std::size_t n_samples, Rng& rng) const;

  Prediction predict_next(std::span<const Event> prefix, std::size_t n_samples, Rng& rng) const {
    return sample(prefix, n_samples, rng).estimate;
  }

  const DescendantTable& table() const noexcept { return *table_; }

 private:
  const Model* model_;
  GeneratorConfig cfg_;
  std::unique_ptr<DescendantTable> table_;
  std::unique_ptr<SequenceGenerator> generator_;
};

struct PredictionReport {
  double observed_ratio = 0.0;
  double time_mse = 0.0;
  double marker_accuracy = 0.0;
  std::size_t evaluated = 0;
  std::size_t skipped = 0;
};

/// Number of revealed events: ceil(r * len), at least 1.
std::size_t prefix_length(double ratio, std::size_t len);

using PredictFn = std::function<Prediction(std::span<const Event> prefix, std::size_t sequence, std::size_t ratio)>;

/// Harness over the sequences `indices`; sequences whose prefix leaves no
/// next event are skipped and counted.
std::vector<PredictionReport> evaluate_prediction(const Dataset& data, std::span<const std::size_t> indices,
                                                  std::span<const double> ratios, const PredictFn& predict,
                                                  std::size_t threads = 1);

std::vector<PredictionReport> evaluate_prediction(const Model& model, const Dataset& data,
                                                  std::span<const std::size_t> indices,
                                                  std::span<const double> ratios, std::size_t n_samples,
                                                  PredictionTable mode = PredictionTable::TopK,
                                                  std::size_t threads = 1);

struct BenchmarkRow {
  std::size_t markers = 0;
  std::size_t length = 0;
  std::size_t reps = 0;
  double generation_s = 0.0;  // mean seconds per generated sequence
  double per_step_s = 0.0;    // generation_s / length
  double train_step_s = 0.0;  // mean seconds per generator+discriminator update on one sequence
};

struct BenchmarkConfig {
  std::vector<std::size_t> marker_counts{100};
  std::vector<std::size_t> lengths{5, 25, 50};
  std::size_t reps = 20;
  std::size_t descendants = 3;
  EmbeddingConfig embedding{};
  bool train_timing = true;
  std::uint64_t seed = 0;
};

std::vector<BenchmarkRow> benchmark_scaling(const BenchmarkConfig& cfg);

/// R^2 of the least-squares line through (x, y).
double linear_fit_r2(std::span<const double> x, std::span<const double> y);

std::string reconstruction_csv(const std::vector<ReconstructionReport>& reports);
std::string prediction_csv(const std::vector<PredictionReport>& reports);
std::string benchmark_csv(const std::vector<BenchmarkRow>& rows);

}  // namespace lantern
