#pragma once

// Likelihood heads: the maps from latent GP values F(x) to observation means,
// their exact means/variances under the variational posterior (the analytic
// expected-log-likelihood path), the conditional moments used by the sampling
// path, the diagonal-Gaussian noise model, and missing-output masking.
//
// Conventions: batches are rows; per-point mixing matrices are stored
// flattened with output k occupying the contiguous column block
// [k*cols, (k+1)*cols).

#include <Eigen/Core>
#include <cmath>
#include <memory>
#include <numbers>
#include <vector>

#include "nlgp/ad.hpp"
#include "nlgp/admoments.hpp"
#include "nlgp/gauss.hpp"
#include "nlgp/param.hpp"
#include "nlgp/quad.hpp"
#include "nlgp/rng.hpp"

namespace nlgp::lik {

using ad::Value;

struct NoiseModel {
  ParamPtr log_beta;  // D_Y x 1 precisions

  static NoiseModel create(const std::string& name, Eigen::Index d_y, double beta_init = 1.0) {
    return {make_param(name + ".log_beta", log_init(d_y, 1, beta_init), Constraint::positive)};
  }
  Eigen::Index dim() const { return log_beta->raw.rows(); }
  Value beta() const { return ad::exp(log_beta->raw); }
  Eigen::VectorXd beta_plain() const { return log_beta->raw.data().array().exp(); }
  void collect(std::vector<ParamPtr>& out) const { out.push_back(log_beta); }
};

// ---------------------------------------------------------------------------
// Gaussian expected log likelihood

// Sum over observed entries of
//   1/2 log(beta_k / 2 pi) - beta_k / 2 ((y_ik - m_ik)^2 + v_ik).
// Masked entries of y must already be zeroed so their values never enter.
inline Value ell_gaussian(const Eigen::MatrixXd& y_clean, const Value& m, const Value& v,
                          const NoiseModel& noise, const Eigen::MatrixXd& mask) {
  const Eigen::Index n = y_clean.rows();
  Value beta_row = ad::transpose(noise.beta());
  Value b = ad::broadcast_row(beta_row, n);
  Value log_b = ad::broadcast_row(ad::transpose(noise.log_beta->raw), n);
  Value maskv = Value::constant(mask);
  Value resid = ad::sub(Value::constant(y_clean), m);
  Value quad = ad::add(ad::square(resid), v);
  Value per = ad::sub(ad::scale(ad::add_const(log_b, -std::log(2.0 * std::numbers::pi)), 0.5),
                      ad::scale(ad::mul(b, quad), 0.5));
  return ad::sum(ad::mul(maskv, per));
}

// Scalar (plain) version for one datapoint.
inline double ell_gaussian_point(const Eigen::VectorXd& y, const Eigen::VectorXd& m,
                                 const Eigen::VectorXd& v, const Eigen::VectorXd& beta,
                                 const Eigen::ArrayXd& mask_row) {
  if (y.size() != m.size() || y.size() != v.size() || y.size() != beta.size())
    throw NumericalError("ell_gaussian_point: dimension mismatch");
  if (v.minCoeff() < 0.0) throw NumericalError("ell_gaussian_point: negative variance");
  double total = 0.0;
  for (Eigen::Index k = 0; k < y.size(); ++k) {
    if (mask_row(k) == 0.0) continue;
    const double r = y(k) - m(k);
    total += 0.5 * std::log(beta(k) / (2.0 * std::numbers::pi)) -
             0.5 * beta(k) * (r * r + v(k));
  }
  return total;
}

// ---------------------------------------------------------------------------
// linear Bayesian mixing: y ~ N(M F, beta), q(M) diagonal Normal

struct LinearBayesMix {
  Eigen::Index d_y = 0, cols = 0;
  ParamPtr m0;         // D_Y x cols posterior means
  ParamPtr log_sig_m;  // D_Y x cols posterior scales (null when fixed)
  bool fixed = false;  // point mass at m0, no KL, not trainable

  static LinearBayesMix create(const std::string& name, Eigen::Index d_y, Eigen::Index cols,
                               Rng& rng, double m0_scale = 0.1, double sig_init = 1e-2) {
    LinearBayesMix m;
    m.d_y = d_y;
    m.cols = cols;
    m.m0 = make_param(name + ".m0", Eigen::MatrixXd(m0_scale * rng.normal_matrix(d_y, cols)));
    m.log_sig_m = make_param(name + ".log_sig_m", log_init(d_y, cols, sig_init),
                             Constraint::positive);
    return m;
  }

  static LinearBayesMix fixed_identity(const std::string& name, Eigen::Index d_y,
                                       Eigen::Index cols) {
    LinearBayesMix m;
    m.d_y = d_y;
    m.cols = cols;
    m.m0 = make_param(name + ".m0", Eigen::MatrixXd::Ones(d_y, cols));
    m.m0->trainable = false;
    m.fixed = true;
    return m;
  }

  void collect(std::vector<ParamPtr>& out) const {
    out.push_back(m0);
    if (log_sig_m) out.push_back(log_sig_m);
  }

  // m_k = sum_l M0[k,l] fmean[l]
  // v_k = sum_l (M0[k,l]^2 + sig^2) fvar[l] + sig^2 fmean[l]^2
  std::pair<Value, Value> moments(const Value& f_mean, const Value& f_var) const {
    Value m = ad::matmul(f_mean, ad::transpose(m0->raw));
    if (fixed) {
      Value v = ad::matmul(f_var, ad::transpose(ad::square(m0->raw)));
      return {m, v};
    }
    Value sig2 = ad::square(ad::exp(log_sig_m->raw));
    Value v = ad::add(ad::matmul(f_var, ad::transpose(ad::add(ad::square(m0->raw), sig2))),
                      ad::matmul(ad::square(f_mean), ad::transpose(sig2)));
    return {m, v};
  }

  // conditional on a sampled (deterministic) input: fvar = 0
  std::pair<Value, Value> conditional_moments(const Value& f) const {
    Value m = ad::matmul(f, ad::transpose(m0->raw));
    if (fixed) return {m, Value::constant(Eigen::MatrixXd::Zero(f.rows(), d_y))};
    Value sig2 = ad::square(ad::exp(log_sig_m->raw));
    return {m, ad::matmul(ad::square(f), ad::transpose(sig2))};
  }

  void conditional_moments_plain(const Eigen::VectorXd& f, Eigen::VectorXd& m,
                                 Eigen::VectorXd& v) const {
    m = m0->raw.data() * f;
    if (fixed) {
      v = Eigen::VectorXd::Zero(d_y);
    } else {
      Eigen::MatrixXd sig2 = log_sig_m->raw.data().array().exp().square();
      v = sig2 * f.cwiseProduct(f);
    }
  }

  Value kl() const {
    if (fixed) return Value::scalar(0.0);
    return gauss::kl_diag_std(m0->raw, ad::exp(log_sig_m->raw));
  }
};

// ---------------------------------------------------------------------------
// the neural hidden layer sigma(Mtilde F + b)

struct HiddenLayer {
  Eigen::Index hidden = 0, in = 0;
  ParamPtr m_tilde;         // H x L, MAP with L2 penalty
  ParamPtr bias_mean;       // H x 1
  ParamPtr log_bias_scale;  // H x 1
  quad::Activation act;
  double l2_lambda = 1e-4;
  std::vector<Eigen::Index> pair_h1, pair_h2;  // h < h' enumeration

  static HiddenLayer create(const std::string& name, Eigen::Index hidden, Eigen::Index in,
                            const quad::Activation& act, Rng& rng, double l2_lambda = 1e-4) {
    HiddenLayer h;
    h.hidden = hidden;
    h.in = in;
    h.act = act;
    h.l2_lambda = l2_lambda;
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    h.m_tilde = make_param(name + ".m_tilde", rng.uniform_matrix(hidden, in, -bound, bound));
    h.bias_mean = make_param(name + ".bias_mean", Eigen::MatrixXd::Zero(hidden, 1));
    h.log_bias_scale =
        make_param(name + ".log_bias_scale", log_init(hidden, 1, 1e-2), Constraint::positive);
    for (Eigen::Index a = 0; a < hidden; ++a)
      for (Eigen::Index b = a + 1; b < hidden; ++b) {
        h.pair_h1.push_back(a);
        h.pair_h2.push_back(b);
      }
    return h;
  }

  void collect(std::vector<ParamPtr>& out) const {
    out.push_back(m_tilde);
    out.push_back(bias_mean);
    out.push_back(log_bias_scale);
  }

  // Pre-activation joint moments under q(F) q(b):
  //   mean = F_mean Mtilde^T + bias_mean
  //   var  = F_var (Mtilde*Mtilde)^T + bias_var
  //   cov(h,h') = sum_l Mt[h,l] Mt[h',l] F_var[l]   (bias terms independent)
  struct Preact {
    Value mean;  // n x H
    Value var;   // n x H
    Value cov;   // n x P
  };

  Preact preact_moments(const Value& f_mean, const Value& f_var) const {
    const Eigen::Index n = f_mean.rows();
    Preact p;
    p.mean = ad::add(ad::matmul(f_mean, ad::transpose(m_tilde->raw)),
                     ad::broadcast_row(ad::transpose(bias_mean->raw), n));
    Value bias_var = ad::square(ad::exp(log_bias_scale->raw));
    p.var = ad::add(ad::matmul(f_var, ad::transpose(ad::square(m_tilde->raw))),
                    ad::broadcast_row(ad::transpose(bias_var), n));
    if (!pair_h1.empty()) {
      Value prod = ad::mul(ad::gather_rows(m_tilde->raw, pair_h1),
                           ad::gather_rows(m_tilde->raw, pair_h2));
      p.cov = ad::matmul(f_var, ad::transpose(prod));
    }
    return p;
  }

  admom::HiddenMoments moments(const Value& f_mean, const Value& f_var,
                               const quad::QuadratureRule& rule) const {
    Preact p = preact_moments(f_mean, f_var);
    return admom::hidden_moments(act, p.mean, p.var, p.cov, pair_h1, pair_h2, rule);
  }

  // sigma(F Mtilde^T + b) for sampled F rows and matching sampled bias rows
  Value apply_sampled(const Value& f, const Value& bias_rows) const {
    return admom::activation(act, ad::add(ad::matmul(f, ad::transpose(m_tilde->raw)), bias_rows));
  }

  Eigen::VectorXd apply_sampled_plain(const Eigen::VectorXd& f,
                                      const Eigen::VectorXd& bias) const {
    Eigen::VectorXd pre = m_tilde->raw.data() * f + bias;
    for (Eigen::Index i = 0; i < pre.size(); ++i) pre(i) = quad::apply(act, pre(i));
    return pre;
  }

  Value kl() const { return gauss::kl_diag_std(bias_mean->raw, ad::exp(log_bias_scale->raw)); }

  Value l2() const { return ad::scale(ad::sum(ad::square(m_tilde->raw)), l2_lambda); }
};

// ---------------------------------------------------------------------------
// input-conditioned mixing network M(x): two tanh hidden layers of 50 units

struct MixNet {
  static constexpr Eigen::Index kHidden = 50;
  Eigen::Index d_x = 0, rows = 0, cols = 0;  // output is rows x cols per point
  ParamPtr w1, b1, w2, b2, w3, b3;
  double l2_lambda = 1e-4;

  static MixNet create(const std::string& name, Eigen::Index d_x, Eigen::Index rows,
                       Eigen::Index cols, Rng& rng, double l2_lambda = 1e-4) {
    MixNet net;
    net.d_x = d_x;
    net.rows = rows;
    net.cols = cols;
    net.l2_lambda = l2_lambda;
    auto fan_init = [&](Eigen::Index r, Eigen::Index c) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(c));
      return rng.uniform_matrix(r, c, -bound, bound);
    };
    net.w1 = make_param(name + ".w1", fan_init(kHidden, d_x));
    net.b1 = make_param(name + ".b1", Eigen::MatrixXd::Zero(1, kHidden));
    net.w2 = make_param(name + ".w2", fan_init(kHidden, kHidden));
    net.b2 = make_param(name + ".b2", Eigen::MatrixXd::Zero(1, kHidden));
    net.w3 = make_param(name + ".w3", fan_init(rows * cols, kHidden));
    net.b3 = make_param(name + ".b3", Eigen::MatrixXd::Zero(1, rows * cols));
    return net;
  }

  void collect(std::vector<ParamPtr>& out) const {
    out.push_back(w1);
    out.push_back(b1);
    out.push_back(w2);
    out.push_back(b2);
    out.push_back(w3);
    out.push_back(b3);
  }

  // n x (rows*cols) with output k in columns [k*cols, (k+1)*cols)
  Value forward(const Value& x) const {
    const Eigen::Index n = x.rows();
    Value h1 = ad::tanh(ad::add(ad::matmul(x, ad::transpose(w1->raw)),
                                ad::broadcast_row(b1->raw, n)));
    Value h2 = ad::tanh(ad::add(ad::matmul(h1, ad::transpose(w2->raw)),
                                ad::broadcast_row(b2->raw, n)));
    return ad::add(ad::matmul(h2, ad::transpose(w3->raw)), ad::broadcast_row(b3->raw, n));
  }

  Eigen::MatrixXd forward_plain(const Eigen::MatrixXd& x) const {
    Eigen::MatrixXd h1 =
        ((x * w1->raw.data().transpose()).rowwise() + b1->raw.data().row(0)).array().tanh();
    Eigen::MatrixXd h2 =
        ((h1 * w2->raw.data().transpose()).rowwise() + b2->raw.data().row(0)).array().tanh();
    return (h2 * w3->raw.data().transpose()).rowwise() + b3->raw.data().row(0);
  }

  Value l2() const {
    Value s = ad::add(ad::sum(ad::square(w1->raw)),
                      ad::add(ad::sum(ad::square(w2->raw)), ad::sum(ad::square(w3->raw))));
    return ad::scale(s, l2_lambda);
  }
};

// ---------------------------------------------------------------------------
// head mean/variance assemblies (the analytic ELL path)

// N-MOGP head: m = M0 m_sigma, v = v1 + v2 + v3 with
//   v1_k = sum_{hh'} M0[k,h] vsig[h,h'] M0[k,h']
//   v2_k = sum_h sig_M[k,h]^2 m_sigma[h]^2
//   v3_k = sum_h sig_M[k,h]^2 vsig[h,h]
inline std::pair<Value, Value> neural_head_moments(const LinearBayesMix& mix,
                                                   const HiddenLayer& hidden,
                                                   const admom::HiddenMoments& hm) {
  Value m = ad::matmul(hm.mean, ad::transpose(mix.m0->raw));
  Value v1 = ad::matmul(hm.var_diag, ad::transpose(ad::square(mix.m0->raw)));
  if (!hidden.pair_h1.empty()) {
    Value poff = ad::mul(ad::gather_cols(mix.m0->raw, hidden.pair_h1),
                         ad::gather_cols(mix.m0->raw, hidden.pair_h2));
    v1 = ad::add(v1, ad::scale(ad::matmul(hm.cov_off, ad::transpose(poff)), 2.0));
  }
  if (mix.fixed) return {m, v1};
  Value sig2 = ad::square(ad::exp(mix.log_sig_m->raw));
  Value v2 = ad::matmul(ad::square(hm.mean), ad::transpose(sig2));
  Value v3 = ad::matmul(hm.var_diag, ad::transpose(sig2));
  return {m, ad::add(v1, ad::add(v2, v3))};
}

// SBGPRN head: deterministic per-point mixing of independent Gaussians.
//   m_k = sum_l M(x)[k,l] fmean[l],  v_k = sum_l M(x)[k,l]^2 fvar[l]
inline std::pair<Value, Value> sbgprn_head_moments(const Value& net_out, const Value& f_mean,
                                                   const Value& f_var, Eigen::Index d_y) {
  const Eigen::Index l = f_mean.cols();
  Value m = ad::block_colsum(ad::mul(net_out, ad::tile_cols(f_mean, d_y)), l);
  Value v = ad::block_colsum(ad::mul(ad::square(net_out), ad::tile_cols(f_var, d_y)), l);
  return {m, v};
}

// N-SBGPRN head: v_k = sum_{hh'} M(x)[k,h] vsig[h,h'] M(x)[k,h']
inline std::pair<Value, Value> nsbgprn_head_moments(const Value& net_out,
                                                    const HiddenLayer& hidden,
                                                    const admom::HiddenMoments& hm,
                                                    Eigen::Index d_y) {
  const Eigen::Index h = hidden.hidden;
  Value m = ad::block_colsum(ad::mul(net_out, ad::tile_cols(hm.mean, d_y)), h);
  Value v = ad::block_colsum(ad::mul(ad::square(net_out), ad::tile_cols(hm.var_diag, d_y)), h);
  if (!hidden.pair_h1.empty()) {
    const Eigen::Index p = static_cast<Eigen::Index>(hidden.pair_h1.size());
    std::vector<Eigen::Index> idx1, idx2;
    idx1.reserve(d_y * p);
    idx2.reserve(d_y * p);
    for (Eigen::Index k = 0; k < d_y; ++k)
      for (Eigen::Index q = 0; q < p; ++q) {
        idx1.push_back(k * h + hidden.pair_h1[q]);
        idx2.push_back(k * h + hidden.pair_h2[q]);
      }
    Value pairprod = ad::mul(ad::gather_cols(net_out, idx1), ad::gather_cols(net_out, idx2));
    Value covt = ad::tile_cols(hm.cov_off, d_y);
    v = ad::add(v, ad::scale(ad::block_colsum(ad::mul(pairprod, covt), p), 2.0));
  }
  return {m, v};
}

// GPRN head: M[k,l](x) and F_l(x) independent Gaussians, exact product
// moments. m_mean/m_var are n x (D_Y * L) marginals of the mixing GPs.
inline std::pair<Value, Value> gprn_head_moments(const Value& m_mean, const Value& m_var,
                                                 const Value& f_mean, const Value& f_var,
                                                 Eigen::Index d_y) {
  const Eigen::Index l = f_mean.cols();
  Value fm = ad::tile_cols(f_mean, d_y);
  Value fv = ad::tile_cols(f_var, d_y);
  Value m = ad::block_colsum(ad::mul(m_mean, fm), l);
  Value v = ad::block_colsum(
      ad::add(ad::mul(ad::square(m_mean), fv),
              ad::add(ad::mul(m_var, ad::square(fm)), ad::mul(m_var, fv))),
      l);
  return {m, v};
}

}  // namespace nlgp::lik
