#pragma once

// Reverse-mode automatic differentiation over dense fp64 matrices.
//
// Values are handles to tape nodes; each op records the parents it needs and
// a pull-back that accumulates gradients into them. Scalars are 1x1, vectors
// are n x 1. backward() overwrites gradients of every node reachable from the
// loss, so repeated calls never accumulate stale gradients.

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <cmath>
#include <functional>
#include <memory>
#include <numbers>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "nlgp/errors.hpp"

namespace nlgp::ad {

struct Node {
  Eigen::MatrixXd data;
  Eigen::MatrixXd grad;
  bool requires_grad = false;
  bool grad_set = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backprop;  // pulls this->grad into parents

  void accumulate(const Eigen::MatrixXd& g) {
    if (!requires_grad) return;
    if (!grad_set) {
      grad = g;
      grad_set = true;
    } else {
      grad += g;
    }
  }
};

using NodePtr = std::shared_ptr<Node>;

class Value {
 public:
  Value() = default;
  explicit Value(NodePtr n) : n_(std::move(n)) {}

  static Value constant(Eigen::MatrixXd m) {
    auto n = std::make_shared<Node>();
    n->data = std::move(m);
    return Value(n);
  }
  static Value scalar(double v) { return constant(Eigen::MatrixXd::Constant(1, 1, v)); }
  static Value leaf(Eigen::MatrixXd m) {
    auto n = std::make_shared<Node>();
    n->data = std::move(m);
    n->requires_grad = true;
    return Value(n);
  }

  bool defined() const { return n_ != nullptr; }
  const Eigen::MatrixXd& data() const { return n_->data; }
  Eigen::MatrixXd& mutable_data() { return n_->data; }
  const Eigen::MatrixXd& grad() const { return n_->grad; }
  bool has_grad() const { return n_->grad_set; }
  bool requires_grad() const { return n_->requires_grad; }
  Eigen::Index rows() const { return n_->data.rows(); }
  Eigen::Index cols() const { return n_->data.cols(); }
  double item() const { return n_->data(0, 0); }
  const NodePtr& node() const { return n_; }

  void zero_grad() {
    n_->grad_set = false;
    n_->grad.setZero(n_->data.rows(), n_->data.cols());
  }

 private:
  NodePtr n_;
};

namespace detail {

inline Value make_op(Eigen::MatrixXd out, std::vector<NodePtr> parents,
                     std::function<void(Node&)> backprop) {
  auto n = std::make_shared<Node>();
  n->data = std::move(out);
  n->parents = std::move(parents);
  for (const auto& p : n->parents)
    if (p->requires_grad) n->requires_grad = true;
  if (n->requires_grad) n->backprop = std::move(backprop);
  return Value(n);
}

inline void check_same_shape(const Value& a, const Value& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw NumericalError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) +
                         "x" + std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) +
                         "x" + std::to_string(b.cols()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise arithmetic

inline Value add(const Value& a, const Value& b) {
  detail::check_same_shape(a, b, "add");
  auto pa = a.node(), pb = b.node();
  return detail::make_op(a.data() + b.data(), {pa, pb}, [pa, pb](Node& n) {
    pa->accumulate(n.grad);
    pb->accumulate(n.grad);
  });
}

inline Value sub(const Value& a, const Value& b) {
  detail::check_same_shape(a, b, "sub");
  auto pa = a.node(), pb = b.node();
  return detail::make_op(a.data() - b.data(), {pa, pb}, [pa, pb](Node& n) {
    pa->accumulate(n.grad);
    pb->accumulate(-n.grad);
  });
}

inline Value mul(const Value& a, const Value& b) {
  detail::check_same_shape(a, b, "mul");
  auto pa = a.node(), pb = b.node();
  return detail::make_op(a.data().cwiseProduct(b.data()), {pa, pb}, [pa, pb](Node& n) {
    pa->accumulate(n.grad.cwiseProduct(pb->data));
    pb->accumulate(n.grad.cwiseProduct(pa->data));
  });
}

inline Value div(const Value& a, const Value& b) {
  detail::check_same_shape(a, b, "div");
  auto pa = a.node(), pb = b.node();
  return detail::make_op(a.data().cwiseQuotient(b.data()), {pa, pb}, [pa, pb](Node& n) {
    pa->accumulate(n.grad.cwiseQuotient(pb->data));
    pb->accumulate(-(n.grad.cwiseProduct(pa->data).cwiseQuotient(pb->data.cwiseProduct(pb->data))));
  });
}

inline Value neg(const Value& a) {
  auto pa = a.node();
  return detail::make_op(-a.data(), {pa}, [pa](Node& n) { pa->accumulate(-n.grad); });
}

inline Value scale(const Value& a, double c) {
  auto pa = a.node();
  return detail::make_op(c * a.data(), {pa}, [pa, c](Node& n) { pa->accumulate(c * n.grad); });
}

inline Value add_const(const Value& a, double c) {
  auto pa = a.node();
  return detail::make_op((a.data().array() + c).matrix(), {pa}, [pa](Node& n) { pa->accumulate(n.grad); });
}

inline Value add_const(const Value& a, const Eigen::MatrixXd& c) {
  auto pa = a.node();
  return detail::make_op(a.data() + c, {pa}, [pa](Node& n) { pa->accumulate(n.grad); });
}

// out = s * m for a 1x1 Value s
inline Value scalar_mul(const Value& s, const Value& m) {
  auto ps = s.node(), pm = m.node();
  return detail::make_op(s.item() * m.data(), {ps, pm}, [ps, pm](Node& n) {
    ps->accumulate(Eigen::MatrixXd::Constant(1, 1, n.grad.cwiseProduct(pm->data).sum()));
    pm->accumulate(ps->data(0, 0) * n.grad);
  });
}

inline Value operator+(const Value& a, const Value& b) { return add(a, b); }
inline Value operator-(const Value& a, const Value& b) { return sub(a, b); }
inline Value operator-(const Value& a) { return neg(a); }
inline Value operator*(const Value& a, const Value& b) { return mul(a, b); }
inline Value operator*(double c, const Value& a) { return scale(a, c); }

// ---------------------------------------------------------------------------
// elementwise nonlinearities

inline Value exp(const Value& a) {
  auto pa = a.node();
  Eigen::MatrixXd out = a.data().array().exp().matrix();
  auto saved = out;
  return detail::make_op(std::move(out), {pa}, [pa, saved](Node& n) {
    pa->accumulate(n.grad.cwiseProduct(saved));
  });
}

inline Value log(const Value& a) {
  auto pa = a.node();
  return detail::make_op(a.data().array().log().matrix(), {pa}, [pa](Node& n) {
    pa->accumulate(n.grad.cwiseQuotient(pa->data));
  });
}

inline Value sqrt(const Value& a) {
  auto pa = a.node();
  Eigen::MatrixXd out = a.data().array().sqrt().matrix();
  auto saved = out;
  return detail::make_op(std::move(out), {pa}, [pa, saved](Node& n) {
    pa->accumulate((n.grad.array() * 0.5 / saved.array()).matrix());
  });
}

inline Value square(const Value& a) {
  auto pa = a.node();
  return detail::make_op(a.data().array().square().matrix(), {pa}, [pa](Node& n) {
    pa->accumulate((n.grad.array() * 2.0 * pa->data.array()).matrix());
  });
}

inline Value tanh(const Value& a) {
  auto pa = a.node();
  Eigen::MatrixXd out = a.data().array().tanh().matrix();
  auto saved = out;
  return detail::make_op(std::move(out), {pa}, [pa, saved](Node& n) {
    pa->accumulate((n.grad.array() * (1.0 - saved.array().square())).matrix());
  });
}

inline Value erf(const Value& a) {
  auto pa = a.node();
  Eigen::MatrixXd out = a.data().unaryExpr([](double x) { return std::erf(x); });
  return detail::make_op(std::move(out), {pa}, [pa](Node& n) {
    const double two_over_sqrt_pi = 2.0 / std::sqrt(std::numbers::pi);
    Eigen::MatrixXd d = pa->data.unaryExpr(
        [two_over_sqrt_pi](double x) { return two_over_sqrt_pi * std::exp(-x * x); });
    pa->accumulate(n.grad.cwiseProduct(d));
  });
}

inline Value sigmoid(const Value& a) {
  auto pa = a.node();
  Eigen::MatrixXd out = a.data().unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
  auto saved = out;
  return detail::make_op(std::move(out), {pa}, [pa, saved](Node& n) {
    pa->accumulate((n.grad.array() * saved.array() * (1.0 - saved.array())).matrix());
  });
}

inline Value clamp_min(const Value& a, double c) {
  auto pa = a.node();
  return detail::make_op(a.data().cwiseMax(c), {pa}, [pa, c](Node& n) {
    Eigen::MatrixXd mask = (pa->data.array() > c).cast<double>();
    pa->accumulate(n.grad.cwiseProduct(mask));
  });
}

inline Value clamp_max(const Value& a, double c) {
  auto pa = a.node();
  return detail::make_op(a.data().cwiseMin(c), {pa}, [pa, c](Node& n) {
    Eigen::MatrixXd mask = (pa->data.array() < c).cast<double>();
    pa->accumulate(n.grad.cwiseProduct(mask));
  });
}

inline Value relu(const Value& a) { return clamp_min(a, 0.0); }

inline Value leaky_relu(const Value& a, double eps) {
  auto pa = a.node();
  Eigen::MatrixXd out = a.data().unaryExpr([eps](double x) { return x >= 0.0 ? x : eps * x; });
  return detail::make_op(std::move(out), {pa}, [pa, eps](Node& n) {
    Eigen::MatrixXd slope =
        pa->data.unaryExpr([eps](double x) { return x >= 0.0 ? 1.0 : eps; });
    pa->accumulate(n.grad.cwiseProduct(slope));
  });
}

// ---------------------------------------------------------------------------
// linear algebra

inline Value matmul(const Value& a, const Value& b) {
  if (a.cols() != b.rows())
    throw NumericalError("matmul: inner dimension mismatch");
  auto pa = a.node(), pb = b.node();
  return detail::make_op(a.data() * b.data(), {pa, pb}, [pa, pb](Node& n) {
    pa->accumulate(n.grad * pb->data.transpose());
    pb->accumulate(pa->data.transpose() * n.grad);
  });
}

inline Value transpose(const Value& a) {
  auto pa = a.node();
  return detail::make_op(a.data().transpose(), {pa},
                         [pa](Node& n) { pa->accumulate(n.grad.transpose()); });
}

// Lower Cholesky factor of a symmetric PD matrix. The pull-back follows the
// standard result expressed with triangular solves; the input gradient is
// symmetrized since A enters as a symmetric matrix.
inline Value cholesky(const Value& a) {
  if (a.rows() != a.cols()) throw NumericalError("cholesky: matrix not square");
  Eigen::LLT<Eigen::MatrixXd> llt(a.data());
  if (llt.info() != Eigen::Success)
    throw NumericalError("cholesky: factorization failed (matrix not PD)");
  Eigen::MatrixXd L = llt.matrixL();
  auto pa = a.node();
  auto saved = L;
  return detail::make_op(std::move(L), {pa}, [pa, saved](Node& n) {
    const Eigen::MatrixXd& Lm = saved;
    Eigen::MatrixXd Lbar = n.grad;  // grads on the unused upper part are spurious
    Lbar.triangularView<Eigen::StrictlyUpper>().setZero();
    Eigen::MatrixXd P = Lm.transpose() * Lbar;
    P.triangularView<Eigen::StrictlyUpper>().setZero();
    P.diagonal() *= 0.5;
    // Abar = L^{-T} P L^{-1}
    Eigen::MatrixXd t = Lm.transpose().triangularView<Eigen::Upper>().solve(P);
    Eigen::MatrixXd Abar =
        Lm.transpose().triangularView<Eigen::Upper>().solve(t.transpose()).transpose();
    pa->accumulate(0.5 * (Abar + Abar.transpose()));
  });
}

// X = L^{-1} B with L lower triangular
inline Value solve_lower(const Value& l, const Value& b) {
  if (l.rows() != l.cols() || l.rows() != b.rows())
    throw NumericalError("solve_lower: shape mismatch");
  Eigen::MatrixXd X = l.data().triangularView<Eigen::Lower>().solve(b.data());
  auto pl = l.node(), pb = b.node();
  auto saved = X;
  return detail::make_op(std::move(X), {pl, pb}, [pl, pb, saved](Node& n) {
    Eigen::MatrixXd gB = pl->data.transpose().triangularView<Eigen::Upper>().solve(n.grad);
    pb->accumulate(gB);
    Eigen::MatrixXd gL = -(gB * saved.transpose());
    gL.triangularView<Eigen::StrictlyUpper>().setZero();
    pl->accumulate(gL);
  });
}

// X = L^{-T} B with L lower triangular
inline Value solve_lower_t(const Value& l, const Value& b) {
  if (l.rows() != l.cols() || l.rows() != b.rows())
    throw NumericalError("solve_lower_t: shape mismatch");
  Eigen::MatrixXd X = l.data().transpose().triangularView<Eigen::Upper>().solve(b.data());
  auto pl = l.node(), pb = b.node();
  auto saved = X;
  return detail::make_op(std::move(X), {pl, pb}, [pl, pb, saved](Node& n) {
    Eigen::MatrixXd gB = pl->data.triangularView<Eigen::Lower>().solve(n.grad);
    pb->accumulate(gB);
    Eigen::MatrixXd gL = -(saved * gB.transpose());
    gL.triangularView<Eigen::StrictlyUpper>().setZero();
    pl->accumulate(gL);
  });
}

inline Value diag_vec(const Value& a) {
  auto pa = a.node();
  return detail::make_op(a.data().diagonal(), {pa}, [pa](Node& n) {
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(pa->data.rows(), pa->data.cols());
    g.diagonal() = n.grad.col(0);
    pa->accumulate(g);
  });
}

inline Value make_diag(const Value& v) {
  auto pv = v.node();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(v.rows(), v.rows());
  out.diagonal() = v.data().col(0);
  return detail::make_op(std::move(out), {pv},
                         [pv](Node& n) { pv->accumulate(n.grad.diagonal()); });
}

// ---------------------------------------------------------------------------
// reductions and broadcasts

inline Value sum(const Value& a) {
  auto pa = a.node();
  return detail::make_op(Eigen::MatrixXd::Constant(1, 1, a.data().sum()), {pa}, [pa](Node& n) {
    pa->accumulate(Eigen::MatrixXd::Constant(pa->data.rows(), pa->data.cols(), n.grad(0, 0)));
  });
}

inline Value rowsum(const Value& a) {  // n x m -> n x 1
  auto pa = a.node();
  return detail::make_op(a.data().rowwise().sum(), {pa}, [pa](Node& n) {
    pa->accumulate(n.grad.col(0).replicate(1, pa->data.cols()));
  });
}

inline Value colsum(const Value& a) {  // n x m -> 1 x m
  auto pa = a.node();
  return detail::make_op(a.data().colwise().sum(), {pa}, [pa](Node& n) {
    pa->accumulate(n.grad.row(0).replicate(pa->data.rows(), 1));
  });
}

inline Value broadcast_col(const Value& v, Eigen::Index m) {  // n x 1 -> n x m
  auto pv = v.node();
  return detail::make_op(v.data().col(0).replicate(1, m), {pv}, [pv](Node& n) {
    pv->accumulate(n.grad.rowwise().sum());
  });
}

inline Value broadcast_row(const Value& v, Eigen::Index n) {  // 1 x m -> n x m
  auto pv = v.node();
  return detail::make_op(v.data().row(0).replicate(n, 1), {pv}, [pv](Node& nd) {
    pv->accumulate(nd.grad.colwise().sum());
  });
}

inline Value tile_rows(const Value& a, Eigen::Index times) {  // [A; A; ...]
  auto pa = a.node();
  const Eigen::Index r = a.rows();
  return detail::make_op(a.data().replicate(times, 1), {pa}, [pa, times, r](Node& n) {
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(r, pa->data.cols());
    for (Eigen::Index t = 0; t < times; ++t) g += n.grad.middleRows(t * r, r);
    pa->accumulate(g);
  });
}

inline Value tile_cols(const Value& a, Eigen::Index times) {  // [A A ...]
  auto pa = a.node();
  const Eigen::Index c = a.cols();
  return detail::make_op(a.data().replicate(1, times), {pa}, [pa, times, c](Node& n) {
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(pa->data.rows(), c);
    for (Eigen::Index t = 0; t < times; ++t) g += n.grad.middleCols(t * c, c);
    pa->accumulate(g);
  });
}

// row i of a repeated `times` consecutive times
inline Value repeat_each_row(const Value& a, Eigen::Index times) {
  auto pa = a.node();
  const Eigen::Index r = a.rows(), c = a.cols();
  Eigen::MatrixXd out(r * times, c);
  for (Eigen::Index i = 0; i < r; ++i) out.middleRows(i * times, times) = a.data().row(i).replicate(times, 1);
  return detail::make_op(std::move(out), {pa}, [pa, times, r](Node& n) {
    Eigen::MatrixXd g(r, pa->data.cols());
    for (Eigen::Index i = 0; i < r; ++i) g.row(i) = n.grad.middleRows(i * times, times).colwise().sum();
    pa->accumulate(g);
  });
}

// sum groups of `block` consecutive columns: n x (k*block) -> n x k
inline Value block_colsum(const Value& a, Eigen::Index block) {
  if (a.cols() % block != 0) throw NumericalError("block_colsum: cols not divisible by block");
  auto pa = a.node();
  const Eigen::Index k = a.cols() / block;
  Eigen::MatrixXd out(a.rows(), k);
  for (Eigen::Index j = 0; j < k; ++j) out.col(j) = a.data().middleCols(j * block, block).rowwise().sum();
  return detail::make_op(std::move(out), {pa}, [pa, block, k](Node& n) {
    Eigen::MatrixXd g(pa->data.rows(), pa->data.cols());
    for (Eigen::Index j = 0; j < k; ++j)
      g.middleCols(j * block, block) = n.grad.col(j).replicate(1, block);
    pa->accumulate(g);
  });
}

inline Value gather_rows(const Value& a, std::vector<Eigen::Index> idx) {
  auto pa = a.node();
  Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), a.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = a.data().row(idx[i]);
  return detail::make_op(std::move(out), {pa}, [pa, idx = std::move(idx)](Node& n) {
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(pa->data.rows(), pa->data.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) g.row(idx[i]) += n.grad.row(static_cast<Eigen::Index>(i));
    pa->accumulate(g);
  });
}

inline Value gather_cols(const Value& a, std::vector<Eigen::Index> idx) {
  auto pa = a.node();
  Eigen::MatrixXd out(a.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = a.data().col(idx[j]);
  return detail::make_op(std::move(out), {pa}, [pa, idx = std::move(idx)](Node& n) {
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(pa->data.rows(), pa->data.cols());
    for (std::size_t j = 0; j < idx.size(); ++j) g.col(idx[j]) += n.grad.col(static_cast<Eigen::Index>(j));
    pa->accumulate(g);
  });
}

// column-major reshape; element order is preserved
inline Value reshape(const Value& a, Eigen::Index r, Eigen::Index c) {
  if (r * c != a.rows() * a.cols()) throw NumericalError("reshape: element count mismatch");
  auto pa = a.node();
  Eigen::MatrixXd out = Eigen::Map<const Eigen::MatrixXd>(a.data().data(), r, c);
  return detail::make_op(std::move(out), {pa}, [pa](Node& n) {
    pa->accumulate(Eigen::Map<const Eigen::MatrixXd>(n.grad.data(), pa->data.rows(), pa->data.cols()));
  });
}

inline Value vec(const Value& a) { return reshape(a, a.rows() * a.cols(), 1); }

inline Value hstack(const std::vector<Value>& vs) {
  if (vs.empty()) throw NumericalError("hstack: empty input");
  Eigen::Index rows = vs[0].rows(), cols = 0;
  for (const auto& v : vs) {
    if (v.rows() != rows) throw NumericalError("hstack: row mismatch");
    cols += v.cols();
  }
  Eigen::MatrixXd out(rows, cols);
  std::vector<NodePtr> parents;
  std::vector<Eigen::Index> widths;
  Eigen::Index at = 0;
  for (const auto& v : vs) {
    out.middleCols(at, v.cols()) = v.data();
    at += v.cols();
    parents.push_back(v.node());
    widths.push_back(v.cols());
  }
  auto ps = parents;
  return detail::make_op(std::move(out), std::move(parents), [ps, widths](Node& n) {
    Eigen::Index at2 = 0;
    for (std::size_t i = 0; i < ps.size(); ++i) {
      ps[i]->accumulate(n.grad.middleCols(at2, widths[i]));
      at2 += widths[i];
    }
  });
}

// ---------------------------------------------------------------------------
// backward

inline void backward(const Value& loss) {
  if (loss.rows() != 1 || loss.cols() != 1)
    throw NumericalError("backward: loss must be scalar");
  if (!std::isfinite(loss.item()))
    throw NumericalError("backward: loss is not finite");

  // iterative DFS topological order
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  // gradients are overwritten, never accumulated across calls
  for (Node* n : order) {
    n->grad_set = false;
    n->grad.resize(0, 0);
  }
  Node* root = loss.node().get();
  root->grad = Eigen::MatrixXd::Constant(1, 1, 1.0);
  root->grad_set = true;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backprop && n->grad_set) n->backprop(*n);
  }
}

}  // namespace nlgp::ad
