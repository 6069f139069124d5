#include "lantern/autodiff.hpp"

#include <cmath>
#include <sstream>
#include <utility>

#include "lantern/error.hpp"
#include "lantern/parameters.hpp"

namespace lantern::ad {

namespace {

std::string shape_of(const Matrix& m) {
  std::ostringstream os;
  os << "(" << m.rows() << "x" << m.cols() << ")";
  return os.str();
}

[[noreturn]] void shape_mismatch(const char* op, const Matrix& a, const Matrix& b) {
  throw Error(Errc::ShapeMismatch, std::string(op) + " " + shape_of(a) + " vs " + shape_of(b));
}

Tape& tape_of(const Var& a) {
  if (!a.valid()) throw Error(Errc::ShapeMismatch, "operation on an empty Var");
  return *a.tape();
}

Tape& tape_of(const Var& a, const Var& b) {
  Tape& t = tape_of(a);
  if (b.tape() != &t) throw Error(Errc::ShapeMismatch, "operands recorded on different tapes");
  return t;
}

bool is_scalar(const Matrix& m) { return m.rows() == 1 && m.cols() == 1; }

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double stable_softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

}  // namespace

const Matrix& Var::value() const { return tape_->value(id_); }
const Matrix& Var::grad() const { return tape_->grad(id_); }

void Tape::accumulate(Matrix& slot, const Matrix& contribution) {
  if (slot.size() == 0) {
    slot = contribution;
  } else {
    slot += contribution;
  }
}

Var Tape::push(Node node) {
  node.grad = Matrix::Zero(node.value.rows(), node.value.cols());
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::constant(double value) { return constant(Matrix::Constant(1, 1, value)); }

Var Tape::variable(Matrix value) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = true;
  return push(std::move(n));
}

Var Tape::parameter(Parameter& param) {
  Node n;
  n.value = param.value();
  n.needs_grad = true;
  n.param = &param;
  return push(std::move(n));
}

Var Tape::record(Matrix value, std::vector<std::size_t> inputs, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  for (std::size_t i : inputs) n.needs_grad = n.needs_grad || nodes_[i].needs_grad;
  n.inputs = std::move(inputs);
  if (n.needs_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

void Tape::backward(const Var& root) {
  if (root.tape() != this) throw Error(Errc::NonScalarRoot, "root belongs to another tape");
  const Matrix& rv = nodes_[root.id()].value;
  if (!is_scalar(rv)) throw Error(Errc::NonScalarRoot, "root has shape " + shape_of(rv));

  Adjoints adj(root.id() + 1);
  adj[root.id()] = Matrix::Ones(1, 1);
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (adj[i].size() == 0 || !n.needs_grad) continue;
    if (n.backward) n.backward(adj[i], adj);
  }
  for (std::size_t i = 0; i <= root.id(); ++i) {
    if (adj[i].size() == 0 || !nodes_[i].needs_grad) continue;
    nodes_[i].grad += adj[i];
    if (nodes_[i].param != nullptr) nodes_[i].param->grad() += adj[i];
  }
}

void Tape::zero_grad() {
  for (Node& n : nodes_) n.grad.setZero();
}

Var matmul(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.cols() != bv.rows()) shape_mismatch("matmul", av, bv);
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(av * bv, {ia, ib}, [&t, ia, ib](const Matrix& g, Tape::Adjoints& adj) {
    if (t.needs_grad(ia)) Tape::accumulate(adj[ia], g * t.value(ib).transpose());
    if (t.needs_grad(ib)) Tape::accumulate(adj[ib], t.value(ia).transpose() * g);
  });
}

namespace {

// Shared implementation of add/sub with optional 1x1 broadcasting.
Var add_like(const Var& a, const Var& b, double sign, const char* name) {
  Tape& t = tape_of(a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  const std::size_t ia = a.id(), ib = b.id();
  const bool same = av.rows() == bv.rows() && av.cols() == bv.cols();
  if (same) {
    return t.record(av + sign * bv, {ia, ib}, [&t, ia, ib, sign](const Matrix& g, Tape::Adjoints& adj) {
      if (t.needs_grad(ia)) Tape::accumulate(adj[ia], g);
      if (t.needs_grad(ib)) Tape::accumulate(adj[ib], sign * g);
    });
  }
  if (is_scalar(bv)) {
    Matrix out = (av.array() + sign * bv(0, 0)).matrix();
    return t.record(std::move(out), {ia, ib}, [&t, ia, ib, sign](const Matrix& g, Tape::Adjoints& adj) {
      if (t.needs_grad(ia)) Tape::accumulate(adj[ia], g);
      if (t.needs_grad(ib)) Tape::accumulate(adj[ib], Matrix::Constant(1, 1, sign * g.sum()));
    });
  }
  if (is_scalar(av)) {
    Matrix out = (sign * bv.array() + av(0, 0)).matrix();
    return t.record(std::move(out), {ia, ib}, [&t, ia, ib, sign](const Matrix& g, Tape::Adjoints& adj) {
      if (t.needs_grad(ia)) Tape::accumulate(adj[ia], Matrix::Constant(1, 1, g.sum()));
      if (t.needs_grad(ib)) Tape::accumulate(adj[ib], sign * g);
    });
  }
  shape_mismatch(name, av, bv);
}

template <typename F, typename DF>
Var unary(const Var& a, F f, DF df_from_x_y) {
  Tape& t = tape_of(a);
  const Matrix& av = a.value();
  Matrix out = av.unaryExpr(f);
  const std::size_t ia = a.id();
  const std::size_t iout = t.size();
  return t.record(std::move(out), {ia}, [&t, ia, iout, df_from_x_y](const Matrix& g, Tape::Adjoints& adj) {
    const Matrix& x = t.value(ia);
    const Matrix& y = t.value(iout);
    Matrix d = x.binaryExpr(y, df_from_x_y);
    Tape::accumulate(adj[ia], (g.array() * d.array()).matrix());
  });
}

}  // namespace

Var add(const Var& a, const Var& b) { return add_like(a, b, 1.0, "add"); }
Var sub(const Var& a, const Var& b) { return add_like(a, b, -1.0, "sub"); }

Var mul(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  const std::size_t ia = a.id(), ib = b.id();
  if (av.rows() == bv.rows() && av.cols() == bv.cols()) {
    return t.record((av.array() * bv.array()).matrix(), {ia, ib}, [&t, ia, ib](const Matrix& g, Tape::Adjoints& adj) {
      if (t.needs_grad(ia)) Tape::accumulate(adj[ia], (g.array() * t.value(ib).array()).matrix());
      if (t.needs_grad(ib)) Tape::accumulate(adj[ib], (g.array() * t.value(ia).array()).matrix());
    });
  }
  if (is_scalar(bv) || is_scalar(av)) {
    const bool b_is_scalar = is_scalar(bv);
    const std::size_t im = b_is_scalar ? ia : ib;  // matrix operand
    const std::size_t is = b_is_scalar ? ib : ia;  // scalar operand
    const double s = t.value(is)(0, 0);
    return t.record(t.value(im) * s, {ia, ib}, [&t, im, is](const Matrix& g, Tape::Adjoints& adj) {
      if (t.needs_grad(im)) Tape::accumulate(adj[im], g * t.value(is)(0, 0));
      if (t.needs_grad(is)) {
        Tape::accumulate(adj[is], Matrix::Constant(1, 1, (g.array() * t.value(im).array()).sum()));
      }
    });
  }
  shape_mismatch("mul", av, bv);
}

Var scalar_mul(const Var& a, double s) {
  Tape& t = tape_of(a);
  const std::size_t ia = a.id();
  return t.record(a.value() * s, {ia}, [ia, s](const Matrix& g, Tape::Adjoints& adj) {
    Tape::accumulate(adj[ia], g * s);
  });
}

Var add_constant(const Var& a, double c) {
  Tape& t = tape_of(a);
  const std::size_t ia = a.id();
  return t.record((a.value().array() + c).matrix(), {ia}, [ia](const Matrix& g, Tape::Adjoints& adj) {
    Tape::accumulate(adj[ia], g);
  });
}

Var neg(const Var& a) { return scalar_mul(a, -1.0); }

Var transpose(const Var& a) {
  Tape& t = tape_of(a);
  const std::size_t ia = a.id();
  return t.record(a.value().transpose(), {ia}, [ia](const Matrix& g, Tape::Adjoints& adj) {
    Tape::accumulate(adj[ia], g.transpose());
  });
}

Var concat(std::span<const Var> parts, int axis) {
  if (parts.empty()) throw Error(Errc::ShapeMismatch, "concat of zero parts");
  Tape& t = tape_of(parts.front());
  std::vector<std::size_t> ids;
  ids.reserve(parts.size());
  Eigen::Index rows = 0, cols = 0;
  const Matrix& first = parts.front().value();
  for (const Var& p : parts) {
    tape_of(parts.front(), p);
    const Matrix& v = p.value();
    if (axis == 0) {
      if (v.cols() != first.cols()) shape_mismatch("concat(axis=0)", first, v);
      rows += v.rows();
      cols = v.cols();
    } else {
      if (v.rows() != first.rows()) shape_mismatch("concat(axis=1)", first, v);
      cols += v.cols();
      rows = v.rows();
    }
    ids.push_back(p.id());
  }
  Matrix out(rows, cols);
  Eigen::Index offset = 0;
  for (const Var& p : parts) {
    const Matrix& v = p.value();
    if (axis == 0) {
      out.middleRows(offset, v.rows()) = v;
      offset += v.rows();
    } else {
      out.middleCols(offset, v.cols()) = v;
      offset += v.cols();
    }
  }
  auto inputs = ids;
  return t.record(std::move(out), std::move(inputs), [&t, ids, axis](const Matrix& g, Tape::Adjoints& adj) {
    Eigen::Index off = 0;
    for (std::size_t id : ids) {
      const Matrix& v = t.value(id);
      if (axis == 0) {
        if (t.needs_grad(id)) Tape::accumulate(adj[id], g.middleRows(off, v.rows()));
        off += v.rows();
      } else {
        if (t.needs_grad(id)) Tape::accumulate(adj[id], g.middleCols(off, v.cols()));
        off += v.cols();
      }
    }
  });
}

Var row_select(const Var& a, std::span<const Eigen::Index> rows) {
  Tape& t = tape_of(a);
  const Matrix& av = a.value();
  std::vector<Eigen::Index> idx(rows.begin(), rows.end());
  Matrix out(static_cast<Eigen::Index>(idx.size()), av.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] < 0 || idx[r] >= av.rows()) {
      throw Error(Errc::ShapeMismatch, "row_select index " + std::to_string(idx[r]) + " out of " + shape_of(av));
    }
    out.row(static_cast<Eigen::Index>(r)) = av.row(idx[r]);
  }
  const std::size_t ia = a.id();
  return t.record(std::move(out), {ia}, [&t, ia, idx](const Matrix& g, Tape::Adjoints& adj) {
    const Matrix& x = t.value(ia);
    if (adj[ia].size() == 0) adj[ia] = Matrix::Zero(x.rows(), x.cols());
    for (std::size_t r = 0; r < idx.size(); ++r) adj[ia].row(idx[r]) += g.row(static_cast<Eigen::Index>(r));
  });
}

Var col_select(const Var& a, std::span<const Eigen::Index> cols) {
  Tape& t = tape_of(a);
  const Matrix& av = a.value();
  std::vector<Eigen::Index> idx(cols.begin(), cols.end());
  Matrix out(av.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t c = 0; c < idx.size(); ++c) {
    if (idx[c] < 0 || idx[c] >= av.cols()) {
      throw Error(Errc::ShapeMismatch, "col_select index " + std::to_string(idx[c]) + " out of " + shape_of(av));
    }
    out.col(static_cast<Eigen::Index>(c)) = av.col(idx[c]);
  }
  const std::size_t ia = a.id();
  return t.record(std::move(out), {ia}, [&t, ia, idx](const Matrix& g, Tape::Adjoints& adj) {
    const Matrix& x = t.value(ia);
    if (adj[ia].size() == 0) adj[ia] = Matrix::Zero(x.rows(), x.cols());
    for (std::size_t c = 0; c < idx.size(); ++c) adj[ia].col(idx[c]) += g.col(static_cast<Eigen::Index>(c));
  });
}

Var element(const Var& a, Eigen::Index row, Eigen::Index col) {
  const Eigen::Index r[] = {row};
  const Eigen::Index c[] = {col};
  return col_select(row_select(a, r), c);
}

Var softmax_masked(const Var& a, const Mask& mask) {
  Tape& t = tape_of(a);
  const Matrix& x = a.value();
  if (mask.rows() != x.rows() || mask.cols() != x.cols()) {
    throw Error(Errc::ShapeMismatch, "softmax_masked mask (" + std::to_string(mask.rows()) + "x" +
                                         std::to_string(mask.cols()) + ") vs " + shape_of(x));
  }
  Matrix y = Matrix::Zero(x.rows(), x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index r = 0; r < x.rows(); ++r)
      if (mask(r, c)) mx = std::max(mx, x(r, c));
    if (!std::isfinite(mx)) continue;
    double z = 0.0;
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      if (!mask(r, c)) continue;
      y(r, c) = std::exp(x(r, c) - mx);
      z += y(r, c);
    }
    y.col(c) /= z;
  }
  const std::size_t ia = a.id();
  const std::size_t iout = t.size();
  return t.record(std::move(y), {ia}, [&t, ia, iout](const Matrix& g, Tape::Adjoints& adj) {
    const Matrix& y = t.value(iout);
    // Masked entries have y == 0 so they receive no gradient.
    Matrix gy = (g.array() * y.array()).matrix();
    Matrix d = gy - y * gy.colwise().sum().asDiagonal();
    Tape::accumulate(adj[ia], d);
  });
}

Var softmax(const Var& a) { return softmax_masked(a, full_mask(a.rows(), a.cols())); }

Var exp(const Var& a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(const Var& a) {
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var tanh(const Var& a) {
  return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(const Var& a) {
  return unary(a, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Var softplus(const Var& a) {
  return unary(a, stable_softplus, [](double x, double) { return stable_sigmoid(x); });
}

Var sum(const Var& a) {
  Tape& t = tape_of(a);
  const std::size_t ia = a.id();
  return t.record(Matrix::Constant(1, 1, a.value().sum()), {ia}, [&t, ia](const Matrix& g, Tape::Adjoints& adj) {
    const Matrix& x = t.value(ia);
    Tape::accumulate(adj[ia], Matrix::Constant(x.rows(), x.cols(), g(0, 0)));
  });
}

Var mean(const Var& a) {
  const auto n = static_cast<double>(a.value().size());
  return scalar_mul(sum(a), 1.0 / n);
}

Mask causal_mask(Eigen::Index n) {
  Mask m(n, n);
  for (Eigen::Index q = 0; q < n; ++q)
    for (Eigen::Index k = 0; k < n; ++k) m(k, q) = k <= q;
  return m;
}

Mask full_mask(Eigen::Index rows, Eigen::Index cols) { return Mask::Constant(rows, cols, true); }

}  // namespace lantern::ad
