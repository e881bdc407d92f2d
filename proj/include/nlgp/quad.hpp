#pragma once

// Gauss-Hermite quadrature (weight e^{-x^2}) and first/second moments of the
// activation family {relu, leaky, erf, sherf} under Gaussian inputs. The
// closed forms take sigma as a standard deviation; sigma = 0 degenerates to a
// point mass at mu.

#include <Eigen/Core>
#include <algorithm>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <numbers>

#include "nlgp/errors.hpp"

namespace nlgp::quad {

struct QuadratureRule {
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;
  int order = 0;
};

namespace detail {

// One pass of the orthonormal Hermite recurrence at x (weight e^{-x^2}),
// dynamically rescaled by powers of two to avoid overflow at large |x| and
// high order. Returns the Newton step p_n / p_n' and the Christoffel weight
// 1 / sum_{k<n} p_k(x)^2.
struct HermiteEval {
  double newton_step;
  double weight;
};

inline HermiteEval hermite_eval(int n, double x) {
  const double sqrt_pi = std::sqrt(std::numbers::pi);
  // stored values are p_k * pi^{1/4} * 2^c with a shared shift c
  double q_prev = 1.0;                   // p~_0
  double q = std::numbers::sqrt2 * x;    // p~_1
  double s = q_prev * q_prev;            // sum over k = 0 .. n-1
  double pow4c = 1.0;                    // 4^c
  if (n > 1) s += q * q;
  for (int k = 1; k < n; ++k) {
    double q_next = x * std::sqrt(2.0 / (k + 1)) * q - std::sqrt(k / (k + 1.0)) * q_prev;
    q_prev = q;
    q = q_next;
    if (k + 1 < n) s += q * q;
    if (std::abs(q) > 1e150 || std::abs(q_prev) > 1e150) {
      const double f = 0x1p-512;
      q *= f;
      q_prev *= f;
      s *= f * f;
      pow4c *= f * f;
    }
  }
  HermiteEval out;
  out.newton_step = q / (std::sqrt(2.0 * n) * q_prev);
  out.weight = sqrt_pi * pow4c / s;
  return out;
}

}  // namespace detail

// Golub-Welsch eigen-decomposition of the Jacobi matrix for initial nodes,
// then Newton refinement on the orthonormal recurrence and Christoffel
// weights, which keeps high orders accurate to near machine precision.
inline QuadratureRule gh_rule(int order) {
  if (order < 1) throw NumericalError("gh_rule: order must be >= 1");
  const double sqrt_pi = std::sqrt(std::numbers::pi);
  QuadratureRule rule;
  rule.order = order;
  if (order == 1) {
    rule.nodes = Eigen::VectorXd::Zero(1);
    rule.weights = Eigen::VectorXd::Constant(1, sqrt_pi);
    return rule;
  }
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(order, order);
  for (int k = 1; k < order; ++k) {
    const double b = std::sqrt(k / 2.0);
    jacobi(k, k - 1) = b;
    jacobi(k - 1, k) = b;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jacobi);
  rule.nodes = es.eigenvalues();
  rule.weights.resize(order);
  for (int i = 0; i < order; ++i) {
    double x = rule.nodes(i);
    for (int it = 0; it < 3; ++it) {
      double step = detail::hermite_eval(order, x).newton_step;
      if (!std::isfinite(step) || std::abs(step) > 0.1) break;
      x -= step;
      if (std::abs(step) < 1e-15 * std::max(1.0, std::abs(x))) break;
    }
    rule.nodes(i) = x;
    rule.weights(i) = detail::hermite_eval(order, x).weight;
  }
  // enforce the exact symmetry of the rule about zero
  for (int i = 0; i < order / 2; ++i) {
    const int j = order - 1 - i;
    const double x = 0.5 * (rule.nodes(j) - rule.nodes(i));
    rule.nodes(i) = -x;
    rule.nodes(j) = x;
    const double w = 0.5 * (rule.weights(i) + rule.weights(j));
    rule.weights(i) = w;
    rule.weights(j) = w;
  }
  if (order % 2 == 1) rule.nodes((order - 1) / 2) = 0.0;
  return rule;
}

enum class ActKind { relu, leaky, erf, sherf };

struct Activation {
  ActKind kind = ActKind::erf;
  double leaky_eps = 0.35;  // slope for x < 0, in (0, 1)
};

struct GaussianScalar {
  double mu = 0.0;
  double sigma = 0.0;  // standard deviation, >= 0
};

inline double apply(const Activation& act, double x) {
  switch (act.kind) {
    case ActKind::relu:
      return x > 0.0 ? x : 0.0;
    case ActKind::leaky:
      return x >= 0.0 ? x : act.leaky_eps * x;
    case ActKind::erf:
      return std::erf(x);
    case ActKind::sherf:
      return 1.0 + std::erf(x);
  }
  return 0.0;
}

namespace detail {
inline double std_normal_pdf(double z) {
  return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
}
inline double std_normal_cdf(double z) { return 0.5 * (1.0 + std::erf(z / std::numbers::sqrt2)); }

inline double relu_mean(double mu, double sigma) {
  if (sigma <= 0.0) return mu > 0.0 ? mu : 0.0;
  const double z = mu / sigma;
  return mu * std_normal_cdf(z) + sigma * std_normal_pdf(z);
}

inline double relu_second(double mu, double sigma) {
  if (sigma <= 0.0) {
    const double r = mu > 0.0 ? mu : 0.0;
    return r * r;
  }
  const double z = mu / sigma;
  return (mu * mu + sigma * sigma) * std_normal_cdf(z) + mu * sigma * std_normal_pdf(z);
}
}  // namespace detail

// E_{N(mu, sigma)}[ act(x) ] in closed form.
inline double act_mean(const Activation& act, const GaussianScalar& g) {
  switch (act.kind) {
    case ActKind::relu:
      return detail::relu_mean(g.mu, g.sigma);
    case ActKind::leaky:
      return act.leaky_eps * g.mu + (1.0 - act.leaky_eps) * detail::relu_mean(g.mu, g.sigma);
    case ActKind::erf:
      return std::erf(g.mu / std::sqrt(1.0 + 2.0 * g.sigma * g.sigma));
    case ActKind::sherf:
      return 1.0 + std::erf(g.mu / std::sqrt(1.0 + 2.0 * g.sigma * g.sigma));
  }
  return 0.0;
}

// E[ x^n erf(x) ] for n in {1, 2}; reduces to mu^n erf(mu) at sigma = 0.
inline double act_poly_erf_mean(int n, const GaussianScalar& g) {
  const double s2 = g.sigma * g.sigma;
  const double t = 1.0 + 2.0 * s2;
  const double e = std::erf(g.mu / std::sqrt(t));
  const double gauss = std::exp(-g.mu * g.mu / t);
  const double sqrt_pi = std::sqrt(std::numbers::pi);
  if (n == 1) return g.mu * e + 2.0 * s2 / (sqrt_pi * std::sqrt(t)) * gauss;
  if (n == 2)
    return (g.mu * g.mu + s2) * e + 4.0 * g.mu * s2 * (1.0 + s2) / (sqrt_pi * t * std::sqrt(t)) * gauss;
  throw NumericalError("act_poly_erf_mean: unsupported degree");
}

// E[ act(x)^2 ]. erf and sherf use the change-of-variables quadrature sum
//   (1/sqrt(pi)) sum_i w_i act(sqrt(2) sigma x_i + mu)^2;
// relu and leaky use the closed forms from splitting the integral at zero,
// since quadrature converges too slowly across the kink.
inline double act_second_moment(const Activation& act, const GaussianScalar& g,
                                const QuadratureRule& rule) {
  switch (act.kind) {
    case ActKind::relu:
      return detail::relu_second(g.mu, g.sigma);
    case ActKind::leaky: {
      const double e = act.leaky_eps;
      return e * e * (g.mu * g.mu + g.sigma * g.sigma) +
             (1.0 - e * e) * detail::relu_second(g.mu, g.sigma);
    }
    case ActKind::erf:
    case ActKind::sherf:
      break;
  }
  if (g.sigma <= 0.0) {
    const double v = apply(act, g.mu);
    return v * v;
  }
  double acc = 0.0;
  for (int i = 0; i < rule.order; ++i) {
    const double v = apply(act, std::numbers::sqrt2 * g.sigma * rule.nodes(i) + g.mu);
    acc += rule.weights(i) * v * v;
  }
  return acc / std::sqrt(std::numbers::pi);
}

namespace detail {

// Gauss-Legendre on [-1, 1] by Golub-Welsch; used for the kink-split outer
// integral of the piecewise-linear activations.
inline QuadratureRule gauss_legendre(int order) {
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(order, order);
  for (int k = 1; k < order; ++k) {
    const double b = k / std::sqrt(4.0 * k * k - 1.0);
    jacobi(k, k - 1) = b;
    jacobi(k - 1, k) = b;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jacobi);
  QuadratureRule rule;
  rule.order = order;
  rule.nodes = es.eigenvalues();
  rule.weights.resize(order);
  for (int i = 0; i < order; ++i) {
    const double v0 = es.eigenvectors()(0, i);
    rule.weights(i) = 2.0 * v0 * v0;
  }
  return rule;
}

}  // namespace detail

// E[ act(x1) act(x2) ] for (x1, x2) ~ N(mu2, cov2): the inner expectation is
// the closed-form mean, the outer integral is one-dimensional quadrature.
// Zero correlation short-circuits to the exact product of means; a perfectly
// correlated pair with equal marginals reduces to the second moment. The
// marginal with larger variance is integrated on the outside, which makes the
// result exactly symmetric in its two arguments. For relu and leaky the outer
// integral is split at the activation kink (Gauss-Hermite converges too
// slowly across it) and integrated with Gauss-Legendre on each smooth piece.
inline double act_cross_moment(const Activation& act, const Eigen::Vector2d& mu2,
                               const Eigen::Matrix2d& cov2, const QuadratureRule& rule) {
  double v1 = cov2(0, 0), v2 = cov2(1, 1), c = cov2(0, 1);
  double m1 = mu2(0), m2 = mu2(1);
  if (v1 < 0.0 || v2 < 0.0 || c * c > v1 * v2 * (1.0 + 1e-9) + 1e-300)
    throw NumericalError("act_cross_moment: covariance not PSD");
  if (c == 0.0)
    return act_mean(act, {m1, std::sqrt(v1)}) * act_mean(act, {m2, std::sqrt(v2)});
  if (m1 == m2 && v1 == v2 && c == v1) return act_second_moment(act, {m1, std::sqrt(v1)}, rule);
  if (v1 < v2 || (v1 == v2 && m1 < m2)) {
    std::swap(v1, v2);
    std::swap(m1, m2);
  }
  const double l11 = std::sqrt(v1);
  const double l21 = c / l11;
  const double l22 = std::sqrt(std::max(v2 - l21 * l21, 0.0));

  if (act.kind == ActKind::relu || act.kind == ActKind::leaky) {
    static const QuadratureRule gl = detail::gauss_legendre(200);
    const double reach = 15.0;
    const double kink = std::clamp(-m1 / std::max(std::numbers::sqrt2 * l11, 1e-300),
                                   -reach, reach);
    double acc = 0.0;
    for (const auto [lo, hi] : {std::pair{-reach, kink}, {kink, reach}}) {
      if (hi - lo < 1e-14) continue;
      const double mid = 0.5 * (lo + hi), half = 0.5 * (hi - lo);
      for (int i = 0; i < gl.order; ++i) {
        const double t = mid + half * gl.nodes(i);
        const double outer = apply(act, std::numbers::sqrt2 * l11 * t + m1);
        const double inner = act_mean(act, {std::numbers::sqrt2 * l21 * t + m2, l22});
        acc += half * gl.weights(i) * std::exp(-t * t) * outer * inner;
      }
    }
    return acc / std::sqrt(std::numbers::pi);
  }

  double acc = 0.0;
  for (int i = 0; i < rule.order; ++i) {
    const double t = rule.nodes(i);
    const double outer = apply(act, std::numbers::sqrt2 * l11 * t + m1);
    const double inner = act_mean(act, {std::numbers::sqrt2 * l21 * t + m2, l22});
    acc += rule.weights(i) * outer * inner;
  }
  return acc / std::sqrt(std::numbers::pi);
}

// Linear combination of independent Gaussians: sum_i b_i a_i with
// a_i ~ N(means_i, variances_i).
inline GaussianScalar linear_gaussian_closure(const Eigen::VectorXd& coeffs,
                                              const Eigen::VectorXd& means,
                                              const Eigen::VectorXd& variances) {
  if (coeffs.size() != means.size() || coeffs.size() != variances.size())
    throw NumericalError("linear_gaussian_closure: length mismatch");
  const double mu = coeffs.dot(means);
  const double var = (coeffs.array().square() * variances.array()).sum();
  return {mu, std::sqrt(var)};
}

}  // namespace nlgp::quad
