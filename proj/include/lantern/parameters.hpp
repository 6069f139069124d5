#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"

#include "lantern/autodiff.hpp"
#include "lantern/rng.hpp"

namespace lantern {

struct AdamConfig {
  double alpha = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

}  // namespace lantern

namespace lantern::ad {

/// A trainable array with its gradient slot and Adam state.
class Parameter {
 public:
  Parameter(std::string name, Matrix value)
      : name_(std::move(name)),
        value_(std::move(value)),
        grad_(Matrix::Zero(value_.rows(), value_.cols())),
        m_(Matrix::Zero(value_.rows(), value_.cols())),
        v_(Matrix::Zero(value_.rows(), value_.cols())) {}

  const std::string& name() const noexcept { return name_; }
  Matrix& value() noexcept { return value_; }
  const Matrix& value() const noexcept { return value_; }
  Matrix& grad() noexcept { return grad_; }
  const Matrix& grad() const noexcept { return grad_; }
  const Matrix& first_moment() const noexcept { return m_; }
  const Matrix& second_moment() const noexcept { return v_; }
  std::int64_t steps() const noexcept { return steps_; }

  void adam_update(const AdamConfig& cfg);

 private:
  std::string name_;
  Matrix value_;
  Matrix grad_;
  Matrix m_;
  Matrix v_;
  std::int64_t steps_ = 0;
};

}  // namespace lantern::ad

namespace lantern {

/// Named trainable arrays. Shapes are fixed at construction; insertion order
/// is the serialisation order. Parameter addresses are stable.
class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(const ParameterStore& other);
  ParameterStore& operator=(const ParameterStore& other);
  ParameterStore(ParameterStore&&) noexcept = default;
  ParameterStore& operator=(ParameterStore&&) noexcept = default;

  ad::Parameter& add(const std::string& name, ad::Matrix init);
  ad::Parameter& get(const std::string& name);
  const ad::Parameter& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.contains(name); }
  std::size_t size() const noexcept { return params_.size(); }
  bool empty() const noexcept { return params_.empty(); }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.cbegin(); }
  auto end() const { return params_.cend(); }

  void zero_grad();
  /// Order-sensitive hash of all parameter values; used to assert freezes.
  std::uint64_t checksum() const;
  std::size_t scalar_count() const;
  double grad_norm() const;

  nlohmann::json to_json() const;
  /// Loads values into a store with matching names and shapes, or builds a
  /// fresh store when this one is empty.
  void load_json(const nlohmann::json& j);

 private:
  std::vector<std::unique_ptr<ad::Parameter>> params_;
  std::map<std::string, std::size_t> index_;
};

/// Bias-corrected Adam on every parameter with a non-zero gradient, then
/// zeroes all gradients. Parameters with an all-zero gradient are left alone.
void adam_step(ParameterStore& store, const AdamConfig& cfg);

/// Gaussian(0, stddev) matrix from the given stream.
ad::Matrix gaussian_matrix(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng);

}  // namespace lantern
