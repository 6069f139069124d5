#include "lantern/parameters.hpp"

#include <cmath>
#include <cstring>

#include "lantern/error.hpp"

namespace lantern {

void AdamConfig::validate() const {
  if (!(alpha > 0.0)) throw Error(Errc::ConfigError, "adam alpha must be > 0");
  if (!(beta1 > 0.0 && beta1 < 1.0)) throw Error(Errc::ConfigError, "adam beta1 must be in (0,1)");
  if (!(beta2 > 0.0 && beta2 < 1.0)) throw Error(Errc::ConfigError, "adam beta2 must be in (0,1)");
  if (!(epsilon > 0.0)) throw Error(Errc::ConfigError, "adam epsilon must be > 0");
}

}  // namespace lantern

namespace lantern::ad {

void Parameter::adam_update(const AdamConfig& cfg) {
  ++steps_;
  m_ = cfg.beta1 * m_ + (1.0 - cfg.beta1) * grad_;
  v_ = cfg.beta2 * v_ + (1.0 - cfg.beta2) * grad_.cwiseProduct(grad_);
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(steps_));
  value_.array() -= cfg.alpha * (m_.array() / c1) / ((v_.array() / c2).sqrt() + cfg.epsilon);
}

}  // namespace lantern::ad

namespace lantern {

ParameterStore::ParameterStore(const ParameterStore& other) { *this = other; }

ParameterStore& ParameterStore::operator=(const ParameterStore& other) {
  if (this == &other) return *this;
  params_.clear();
  index_ = other.index_;
  params_.reserve(other.params_.size());
  for (const auto& p : other.params_) params_.push_back(std::make_unique<ad::Parameter>(*p));
  return *this;
}

ad::Parameter& ParameterStore::add(const std::string& name, ad::Matrix init) {
  if (index_.contains(name)) throw Error(Errc::ConfigError, "duplicate parameter " + name);
  index_.emplace(name, params_.size());
  params_.push_back(std::make_unique<ad::Parameter>(name, std::move(init)));
  return *params_.back();
}

ad::Parameter& ParameterStore::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error(Errc::ConfigError, "unknown parameter " + name);
  return *params_[it->second];
}

const ad::Parameter& ParameterStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error(Errc::ConfigError, "unknown parameter " + name);
  return *params_[it->second];
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p->grad().setZero();
}

std::uint64_t ParameterStore::checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& p : params_) {
    const ad::Matrix& v = p->value();
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      std::uint64_t bits = 0;
      const double x = v.data()[i];
      std::memcpy(&bits, &x, sizeof bits);
      h = splitmix64(h ^ bits);
    }
  }
  return h;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p->value().size());
  return n;
}

double ParameterStore::grad_norm() const {
  double s = 0.0;
  for (const auto& p : params_) s += p->grad().squaredNorm();
  return std::sqrt(s);
}

nlohmann::json ParameterStore::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& p : params_) {
    const ad::Matrix& v = p->value();
    std::vector<double> data;
    data.reserve(static_cast<std::size_t>(v.size()));
    // Row-major on disk.
    for (Eigen::Index r = 0; r < v.rows(); ++r)
      for (Eigen::Index c = 0; c < v.cols(); ++c) data.push_back(v(r, c));
    arr.push_back({{"name", p->name()}, {"shape", {v.rows(), v.cols()}}, {"data", std::move(data)}});
  }
  return arr;
}

void ParameterStore::load_json(const nlohmann::json& j) {
  const bool fresh = params_.empty();
  for (const auto& entry : j) {
    const std::string name = entry.at("name").get<std::string>();
    const auto rows = entry.at("shape").at(0).get<Eigen::Index>();
    const auto cols = entry.at("shape").at(1).get<Eigen::Index>();
    const auto& data = entry.at("data");
    if (static_cast<Eigen::Index>(data.size()) != rows * cols) {
      throw Error(Errc::ShapeMismatch, "checkpoint entry " + name + " has wrong element count");
    }
    ad::Matrix m(rows, cols);
    std::size_t k = 0;
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[k++].get<double>();
    if (fresh) {
      add(name, std::move(m));
      continue;
    }
    ad::Parameter& p = get(name);
    if (p.value().rows() != rows || p.value().cols() != cols) {
      throw Error(Errc::ShapeMismatch, "checkpoint entry " + name + " shape differs from model");
    }
    p.value() = std::move(m);
  }
}

void adam_step(ParameterStore& store, const AdamConfig& cfg) {
  for (auto& p : store) {
    if (p->grad().isZero(0.0)) continue;
    p->adam_update(cfg);
  }
  store.zero_grad();
}

ad::Matrix gaussian_matrix(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng) {
  ad::Matrix m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = stddev * standard_normal(rng);
  return m;
}

}  // namespace lantern
