#pragma once

// Covariance and mean functions: ARD or shared-lengthscale RBF, an optional
// network-warped (deep) kernel, and zero/constant means. All evaluations are
// tape expressions so hyperparameters, inducing locations and (for latent or
// layered models) the inputs themselves receive gradients.

#include <Eigen/Core>
#include <cmath>
#include <memory>
#include <vector>

#include "nlgp/ad.hpp"
#include "nlgp/param.hpp"
#include "nlgp/rng.hpp"

namespace nlgp::kernels {

using ad::Value;

struct RbfKernel {
  Eigen::Index input_dim = 0;
  bool ard = true;
  ParamPtr log_signal_var;    // 1x1
  ParamPtr log_lengthscales;  // d x 1 when ard, else 1x1
  ParamPtr log_diag_noise;    // 1x1, null unless the kernel carries a white noise term

  static std::shared_ptr<RbfKernel> create(const std::string& name, Eigen::Index dim, bool ard,
                                           double lengthscale_init = 1.0,
                                           double signal_var_init = 1.0,
                                           double diag_noise_init = 0.0) {
    auto k = std::make_shared<RbfKernel>();
    k->input_dim = dim;
    k->ard = ard;
    k->log_signal_var = make_param(name + ".log_signal_var",
                                   log_init(1, 1, signal_var_init), Constraint::positive);
    k->log_lengthscales = make_param(name + ".log_lengthscales",
                                     log_init(ard ? dim : 1, 1, lengthscale_init),
                                     Constraint::positive);
    if (diag_noise_init > 0.0)
      k->log_diag_noise = make_param(name + ".log_diag_noise", log_init(1, 1, diag_noise_init),
                                     Constraint::positive);
    return k;
  }

  void collect(std::vector<ParamPtr>& out) const {
    out.push_back(log_signal_var);
    out.push_back(log_lengthscales);
    if (log_diag_noise) out.push_back(log_diag_noise);
  }

  // inverse lengthscales as a 1 x d row
  Value inv_lengthscale_row() const {
    Value inv = ad::exp(ad::neg(log_lengthscales->raw));
    if (!ard && input_dim > 1) inv = ad::tile_rows(inv, input_dim);
    return ad::transpose(inv);
  }
};

// Feature network used by the deep kernel: two tanh hidden layers of 50
// units, output dimension equal to the input dimension, blended with the raw
// inputs so that blend -> 0 recovers the identity warp.
struct DeepWarp {
  static constexpr Eigen::Index kHidden = 50;
  Eigen::Index dim = 0;
  ParamPtr w1, b1, w2, b2, w3, b3;
  ParamPtr blend_raw;  // blend = sigmoid(blend_raw), initialized near zero

  static std::shared_ptr<DeepWarp> create(const std::string& name, Eigen::Index dim, Rng& rng) {
    auto w = std::make_shared<DeepWarp>();
    w->dim = dim;
    auto fan_init = [&](Eigen::Index rows, Eigen::Index cols) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
      return rng.uniform_matrix(rows, cols, -bound, bound);
    };
    w->w1 = make_param(name + ".w1", fan_init(kHidden, dim));
    w->b1 = make_param(name + ".b1", Eigen::MatrixXd::Zero(1, kHidden));
    w->w2 = make_param(name + ".w2", fan_init(kHidden, kHidden));
    w->b2 = make_param(name + ".b2", Eigen::MatrixXd::Zero(1, kHidden));
    w->w3 = make_param(name + ".w3", fan_init(dim, kHidden));
    w->b3 = make_param(name + ".b3", Eigen::MatrixXd::Zero(1, dim));
    w->blend_raw = make_param(name + ".blend_raw", Eigen::MatrixXd::Constant(1, 1, -4.0));
    return w;
  }

  void collect(std::vector<ParamPtr>& out) const {
    out.push_back(w1);
    out.push_back(b1);
    out.push_back(w2);
    out.push_back(b2);
    out.push_back(w3);
    out.push_back(b3);
    out.push_back(blend_raw);
  }

  Value net(const Value& x) const {
    const Eigen::Index n = x.rows();
    Value h1 = ad::tanh(ad::add(ad::matmul(x, ad::transpose(w1->raw)),
                                ad::broadcast_row(b1->raw, n)));
    Value h2 = ad::tanh(ad::add(ad::matmul(h1, ad::transpose(w2->raw)),
                                ad::broadcast_row(b2->raw, n)));
    return ad::add(ad::matmul(h2, ad::transpose(w3->raw)), ad::broadcast_row(b3->raw, n));
  }

  // (1 - blend) x + blend net(x)
  Value warp(const Value& x) const {
    Value blend = ad::sigmoid(blend_raw->raw);
    return ad::add(x, ad::scalar_mul(blend, ad::sub(net(x), x)));
  }
};

struct Kernel {
  std::shared_ptr<RbfKernel> rbf;
  std::shared_ptr<DeepWarp> deep;  // null for a plain RBF

  Value warp_inputs(const Value& x) const { return deep ? deep->warp(x) : x; }

  // Gram matrix k(X, X2); same_object indicates X and X2 are the same set of
  // points, which is when the white-noise term lands on the diagonal.
  Value gram(const Value& x, const Value& x2, bool same_object) const {
    Value xs = ad::mul(warp_inputs(x), ad::broadcast_row(rbf->inv_lengthscale_row(), x.rows()));
    Value x2s = same_object
                    ? xs
                    : ad::mul(warp_inputs(x2),
                              ad::broadcast_row(rbf->inv_lengthscale_row(), x2.rows()));
    Value sq1 = ad::rowsum(ad::square(xs));
    Value sq2 = same_object ? sq1 : ad::rowsum(ad::square(x2s));
    Value cross = ad::matmul(xs, ad::transpose(x2s));
    Value sq = ad::add(ad::sub(ad::broadcast_col(sq1, x2.rows()), ad::scale(cross, 2.0)),
                       ad::broadcast_row(ad::transpose(sq2), x.rows()));
    sq = ad::clamp_min(sq, 0.0);
    Value k = ad::scalar_mul(ad::exp(rbf->log_signal_var->raw), ad::exp(ad::scale(sq, -0.5)));
    if (same_object && rbf->log_diag_noise) {
      Value eye = Value::constant(Eigen::MatrixXd::Identity(x.rows(), x.rows()));
      k = ad::add(k, ad::scalar_mul(ad::exp(rbf->log_diag_noise->raw), eye));
    }
    return k;
  }

  // k(x, x) for each row of X, as an n x 1 vector
  Value diag(const Value& x) const {
    Value ones = Value::constant(Eigen::MatrixXd::Ones(x.rows(), 1));
    Value d = ad::scalar_mul(ad::exp(rbf->log_signal_var->raw), ones);
    if (rbf->log_diag_noise)
      d = ad::add(d, ad::scalar_mul(ad::exp(rbf->log_diag_noise->raw), ones));
    return d;
  }

  void collect(std::vector<ParamPtr>& out) const {
    rbf->collect(out);
    if (deep) deep->collect(out);
  }
};

struct MeanFunction {
  bool constant = false;
  ParamPtr value;  // 1x1 when constant

  static MeanFunction zero() { return {}; }
  static MeanFunction trainable_constant(const std::string& name, double init = 0.0) {
    MeanFunction m;
    m.constant = true;
    m.value = make_param(name, Eigen::MatrixXd::Constant(1, 1, init));
    return m;
  }

  Value eval(Eigen::Index n) const {
    if (!constant) return Value::constant(Eigen::MatrixXd::Zero(n, 1));
    return ad::broadcast_row(value->raw, n);
  }

  void collect(std::vector<ParamPtr>& out) const {
    if (constant) out.push_back(value);
  }
};

}  // namespace nlgp::kernels
