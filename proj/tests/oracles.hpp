#pragma once

// Independent reference computations used by the tests. Nothing here calls
// into the library's numeric code paths.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "lantern/parameters.hpp"

namespace oracle {

using Mat = std::vector<std::vector<double>>;  // row-major, [row][col]

inline Mat to_mat(const Eigen::MatrixXd& m) {
  Mat out(static_cast<std::size_t>(m.rows()), std::vector<double>(static_cast<std::size_t>(m.cols())));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) out[r][c] = m(r, c);
  return out;
}

inline std::vector<double> matvec(const Mat& a, const std::vector<double>& x) {
  std::vector<double> y(a.size(), 0.0);
  for (std::size_t r = 0; r < a.size(); ++r)
    for (std::size_t c = 0; c < x.size(); ++c) y[r] += a[r][c] * x[c];
  return y;
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline std::vector<double> softmax(const std::vector<double>& x) {
  double mx = x[0];
  for (double v : x) mx = std::max(mx, v);
  std::vector<double> e(x.size());
  double z = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) z += e[i] = std::exp(x[i] - mx);
  for (double& v : e) v /= z;
  return e;
}

inline double softplus(double x) { return std::log(1.0 + std::exp(x)); }
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Literal multi-head attention: for position n, head l,
///   alpha_jn = exp((W_K e_j).(W_Q e_n)) / sum_{i in visible} exp(...)
///   h^l_n = sum_j alpha_jn W_V e_j,  h_n = W_O [h^1_n; ...; h^L_n].
/// `causal` restricts j to 0..n.
inline std::vector<std::vector<double>> attention(const std::vector<std::vector<double>>& e,
                                                  const std::vector<Mat>& wv, const std::vector<Mat>& wk,
                                                  const std::vector<Mat>& wq, const Mat& wo, bool causal) {
  const std::size_t n = e.size();
  std::vector<std::vector<double>> h;
  for (std::size_t q = 0; q < n; ++q) {
    std::vector<double> stacked;
    for (std::size_t l = 0; l < wv.size(); ++l) {
      const auto query = matvec(wq[l], e[q]);
      const std::size_t last = causal ? q : n - 1;
      std::vector<double> num;
      double z = 0.0;
      for (std::size_t j = 0; j <= last; ++j) {
        const double s = std::exp(dot(matvec(wk[l], e[j]), query));
        num.push_back(s);
        z += s;
      }
      std::vector<double> head(wv[l].size(), 0.0);
      for (std::size_t j = 0; j <= last; ++j) {
        const auto v = matvec(wv[l], e[j]);
        for (std::size_t d = 0; d < head.size(); ++d) head[d] += num[j] / z * v[d];
      }
      stacked.insert(stacked.end(), head.begin(), head.end());
    }
    h.push_back(matvec(wo, stacked));
  }
  return h;
}

/// Central finite-difference gradient of f with respect to every entry of
/// `param`, restoring its value afterwards.
inline Eigen::MatrixXd numeric_grad(Eigen::MatrixXd& param, const std::function<double()>& f, double step = 1e-6) {
  Eigen::MatrixXd g(param.rows(), param.cols());
  for (Eigen::Index r = 0; r < param.rows(); ++r) {
    for (Eigen::Index c = 0; c < param.cols(); ++c) {
      const double keep = param(r, c);
      param(r, c) = keep + step;
      const double up = f();
      param(r, c) = keep - step;
      const double down = f();
      param(r, c) = keep;
      g(r, c) = (up - down) / (2 * step);
    }
  }
  return g;
}

/// ||a - b|| / max(||a||, ||b||, floor).
inline double relative_error(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double floor = 1e-8) {
  return (a - b).norm() / std::max({a.norm(), b.norm(), floor});
}

/// Largest relative error between the stored gradients of `store` (filled by
/// `analytic`) and finite differences of `f` over every parameter.
inline double store_gradient_error(lantern::ParameterStore& store, const std::function<void()>& analytic,
                                   const std::function<double()>& f) {
  store.zero_grad();
  analytic();
  double worst = 0.0;
  for (auto& p : store) {
    const Eigen::MatrixXd g = p->grad();
    const Eigen::MatrixXd n = numeric_grad(p->value(), f);
    // The floor keeps finite-difference roundoff (~1e-11) on saturated graphs
    // from counting as a relative error.
    worst = std::max(worst, relative_error(g, n, 1e-5));
  }
  store.zero_grad();
  return worst;
}

/// URBG that replays a fixed list of uniforms and throws when it runs dry.
struct UniformTape {
  using result_type = std::uint64_t;
  std::vector<double> u;
  std::size_t i = 0;
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }
  result_type operator()() {
    if (i >= u.size()) throw std::out_of_range("uniform tape exhausted");
    return static_cast<result_type>(u[i++] * 0x1.0p53) << 11;
  }
};

/// Kolmogorov-Smirnov statistic of a sample against a continuous CDF.
inline double ks_statistic(std::vector<double> xs, const std::function<double(double)>& cdf) {
  std::sort(xs.begin(), xs.end());
  const auto n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = cdf(xs[i]);
    d = std::max({d, (i + 1) / n - f, f - i / n});
  }
  return d;
}

/// Asymptotic KS critical value at level alpha: sqrt(-ln(alpha/2)/2) / sqrt(n).
inline double ks_critical(std::size_t n, double alpha) {
  return std::sqrt(-0.5 * std::log(alpha / 2)) / std::sqrt(static_cast<double>(n));
}

}  // namespace oracle
