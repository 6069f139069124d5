#pragma once

#include <cstddef>
#include <vector>

namespace lantern {

/// Prefix sums over non-negative weights with O(log n) update and inverse-CDF
/// search. Indices are insertion order.
class FenwickTree {
 public:
  FenwickTree() : tree_(1, 0.0) {}
  explicit FenwickTree(std::size_t n) : tree_(n + 1, 0.0), values_(n, 0.0) {}

  std::size_t size() const noexcept { return values_.size(); }
  double value(std::size_t i) const { return values_[i]; }

  void push_back(double w) {
    values_.push_back(0.0);
    const std::size_t i = values_.size();  // 1-based position
    // A new node covers (i - lowbit(i), i]; seed it from existing prefix sums.
    const std::size_t low = i - (i & (~i + 1));
    double node = 0.0;
    for (std::size_t j = i - 1; j > low; j -= (j & (~j + 1))) node += tree_[j];
    tree_.push_back(node);
    add(i - 1, w);
  }

  void add(std::size_t i, double delta) {
    values_[i] += delta;
    for (std::size_t j = i + 1; j < tree_.size(); j += (j & (~j + 1))) tree_[j] += delta;
  }

  void set(std::size_t i, double w) { add(i, w - values_[i]); }

  /// Sum of values[0..i).
  double prefix(std::size_t i) const {
    double s = 0.0;
    for (std::size_t j = i; j > 0; j -= (j & (~j + 1))) s += tree_[j];
    return s;
  }

  double total() const { return prefix(values_.size()); }

  /// Smallest index whose cumulative sum exceeds u; size() if none.
  std::size_t find(double u) const {
    std::size_t pos = 0;
    std::size_t step = 1;
    while (step * 2 < tree_.size()) step *= 2;
    for (; step > 0; step /= 2) {
      const std::size_t next = pos + step;
      if (next < tree_.size() && tree_[next] <= u) {
        pos = next;
        u -= tree_[next];
      }
    }
    return pos;
  }

  void rebuild(const std::vector<double>& values) {
    values_ = values;
    tree_.assign(values.size() + 1, 0.0);
    for (std::size_t i = 0; i < values.size(); ++i) {
      tree_[i + 1] += values[i];
      const std::size_t parent = (i + 1) + ((i + 1) & (~(i + 1) + 1));
      if (parent < tree_.size()) tree_[parent] += tree_[i + 1];
    }
  }

 private:
  std::vector<double> tree_;
  std::vector<double> values_;
};

}  // namespace lantern
