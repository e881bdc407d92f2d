#pragma once

// Differentiable (tape) versions of the activation moment calculus, batched
// over matrices: every function maps elementwise over same-shaped mean /
// standard deviation values. Quadrature sums are vectorized as (numel x N_q)
// matrix ops.
//
// erf and sherf second moments use the Gauss-Hermite sum; relu and leaky use
// the closed forms obtained by splitting the Gaussian integral at zero, which
// quadrature cannot resolve to tight tolerances across the kink.

#include <Eigen/Core>
#include <cmath>
#include <numbers>

#include "nlgp/ad.hpp"
#include "nlgp/quad.hpp"

namespace nlgp::admom {

using ad::Value;
using quad::ActKind;
using quad::Activation;
using quad::QuadratureRule;

inline Value activation(const Activation& act, const Value& x) {
  switch (act.kind) {
    case ActKind::relu:
      return ad::relu(x);
    case ActKind::leaky:
      return ad::leaky_relu(x, act.leaky_eps);
    case ActKind::erf:
      return ad::erf(x);
    case ActKind::sherf:
      return ad::add_const(ad::erf(x), 1.0);
  }
  throw NumericalError("activation: unknown kind");
}

namespace detail {

const double kSigmaFloor = 1e-30;

inline Value std_normal_cdf(const Value& z) {
  return ad::scale(ad::add_const(ad::erf(ad::scale(z, 1.0 / std::numbers::sqrt2)), 1.0), 0.5);
}

inline Value std_normal_pdf(const Value& z) {
  const double c = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  return ad::scale(ad::exp(ad::scale(ad::square(z), -0.5)), c);
}

// mu Phi(mu/sigma) + sigma phi(mu/sigma); the floor turns sigma = 0 into the
// exact point-mass limit with zero gradient into sigma.
inline Value relu_mean(const Value& mu, const Value& sigma) {
  Value s = ad::clamp_min(sigma, kSigmaFloor);
  Value z = ad::div(mu, s);
  return ad::add(ad::mul(mu, std_normal_cdf(z)), ad::mul(s, std_normal_pdf(z)));
}

// (mu^2 + sigma^2) Phi(mu/sigma) + mu sigma phi(mu/sigma)
inline Value relu_second(const Value& mu, const Value& sigma) {
  Value s = ad::clamp_min(sigma, kSigmaFloor);
  Value z = ad::div(mu, s);
  Value a = ad::mul(ad::add(ad::square(mu), ad::square(s)), std_normal_cdf(z));
  Value b = ad::mul(ad::mul(mu, s), std_normal_pdf(z));
  return ad::add(a, b);
}

inline Value erf_mean(const Value& mu, const Value& sigma) {
  Value t = ad::add_const(ad::scale(ad::square(sigma), 2.0), 1.0);
  return ad::erf(ad::div(mu, ad::sqrt(t)));
}

}  // namespace detail

// E[act(x)] elementwise for x ~ N(mu_ij, sigma_ij^2)
inline Value act_mean(const Activation& act, const Value& mu, const Value& sigma) {
  switch (act.kind) {
    case ActKind::relu:
      return detail::relu_mean(mu, sigma);
    case ActKind::leaky: {
      Value r = detail::relu_mean(mu, sigma);
      return ad::add(ad::scale(mu, act.leaky_eps), ad::scale(r, 1.0 - act.leaky_eps));
    }
    case ActKind::erf:
      return detail::erf_mean(mu, sigma);
    case ActKind::sherf:
      return ad::add_const(detail::erf_mean(mu, sigma), 1.0);
  }
  throw NumericalError("act_mean: unknown kind");
}

// E[act(x)^2] elementwise
inline Value act_second_moment(const Activation& act, const Value& mu, const Value& sigma,
                               const QuadratureRule& rule) {
  switch (act.kind) {
    case ActKind::relu:
      return detail::relu_second(mu, sigma);
    case ActKind::leaky: {
      const double e = act.leaky_eps;
      Value base = ad::add(ad::square(mu), ad::square(ad::clamp_min(sigma, detail::kSigmaFloor)));
      return ad::add(ad::scale(base, e * e), ad::scale(detail::relu_second(mu, sigma), 1.0 - e * e));
    }
    case ActKind::erf:
    case ActKind::sherf: {
      const Eigen::Index r = mu.rows(), c = mu.cols();
      Value vmu = ad::vec(mu), vs = ad::vec(sigma);
      Value nodes_row = ad::Value::constant(
          Eigen::MatrixXd(std::numbers::sqrt2 * rule.nodes.transpose()));
      Value args = ad::add(ad::matmul(vs, nodes_row), ad::broadcast_col(vmu, rule.order));
      Value sq = ad::square(activation(act, args));
      Value w = ad::Value::constant(
          Eigen::MatrixXd(rule.weights / std::sqrt(std::numbers::pi)));
      return ad::reshape(ad::matmul(sq, w), r, c);
    }
  }
  throw NumericalError("act_second_moment: unknown kind");
}

// E[act(x1) act(x2)] elementwise for bivariate Gaussians given by their
// Cholesky pieces (l11, l21, l22) and means (mu1, mu2); inner expectation in
// closed form, outer integral by quadrature.
inline Value act_cross_moment(const Activation& act, const Value& mu1, const Value& mu2,
                              const Value& l11, const Value& l21, const Value& l22,
                              const QuadratureRule& rule) {
  const Eigen::Index r = mu1.rows(), c = mu1.cols();
  const Eigen::Index q = rule.order;
  Value nodes_row =
      ad::Value::constant(Eigen::MatrixXd(std::numbers::sqrt2 * rule.nodes.transpose()));
  Value outer_arg = ad::add(ad::matmul(ad::vec(l11), nodes_row), ad::broadcast_col(ad::vec(mu1), q));
  Value outer = activation(act, outer_arg);
  Value inner_mu = ad::add(ad::matmul(ad::vec(l21), nodes_row), ad::broadcast_col(ad::vec(mu2), q));
  Value inner = act_mean(act, inner_mu, ad::broadcast_col(ad::vec(l22), q));
  Value w =
      ad::Value::constant(Eigen::MatrixXd(rule.weights / std::sqrt(std::numbers::pi)));
  return ad::reshape(ad::matmul(ad::mul(outer, inner), w), r, c);
}

// Moments of the hidden activations sigma(a) for jointly Gaussian
// pre-activations: means/variances per unit plus covariances for the listed
// (h, h') pairs. Correlations are clamped to keep each 2x2 block PSD.
struct HiddenMoments {
  Value mean;      // n x H
  Value var_diag;  // n x H, >= 0
  Value cov_off;   // n x P covariance for each listed pair (empty if P = 0)
};

inline HiddenMoments hidden_moments(const Activation& act, const Value& pre_mean,
                                    const Value& pre_var, const Value& pre_cov,
                                    const std::vector<Eigen::Index>& pair_h1,
                                    const std::vector<Eigen::Index>& pair_h2,
                                    const QuadratureRule& rule) {
  HiddenMoments out;
  Value sd = ad::sqrt(ad::clamp_min(pre_var, detail::kSigmaFloor));
  out.mean = act_mean(act, pre_mean, sd);
  Value second = act_second_moment(act, pre_mean, sd, rule);
  out.var_diag = ad::clamp_min(ad::sub(second, ad::square(out.mean)), 0.0);
  if (!pair_h1.empty()) {
    Value mu1 = ad::gather_cols(pre_mean, pair_h1);
    Value mu2 = ad::gather_cols(pre_mean, pair_h2);
    Value v1 = ad::clamp_min(ad::gather_cols(pre_var, pair_h1), detail::kSigmaFloor);
    Value v2 = ad::clamp_min(ad::gather_cols(pre_var, pair_h2), detail::kSigmaFloor);
    Value rho = ad::div(pre_cov, ad::sqrt(ad::mul(v1, v2)));
    rho = ad::clamp_min(ad::clamp_max(rho, 1.0 - 1e-9), -1.0 + 1e-9);
    Value l11 = ad::sqrt(v1);
    Value sd2 = ad::sqrt(v2);
    Value l21 = ad::mul(rho, sd2);
    Value l22 = ad::sqrt(ad::clamp_min(
        ad::mul(v2, ad::add_const(ad::neg(ad::square(rho)), 1.0)), detail::kSigmaFloor));
    Value cross = act_cross_moment(act, mu1, mu2, l11, l21, l22, rule);
    Value m1 = ad::gather_cols(out.mean, pair_h1);
    Value m2 = ad::gather_cols(out.mean, pair_h2);
    out.cov_off = ad::sub(cross, ad::mul(m1, m2));
  }
  return out;
}

}  // namespace nlgp::admom
