#pragma once

// Sparse variational GP units: inducing augmentation, per-point predictive
// marginals q(f_i), the inducing KL, and reparameterized sampling. Banks of
// units that share a kernel and inducing locations reuse the Cholesky and the
// projected cross-covariances, which is what makes the GPRN's D_Y * L mixing
// units affordable.

#include <Eigen/Core>
#include <map>
#include <memory>
#include <tuple>
#include <vector>

#include "nlgp/ad.hpp"
#include "nlgp/gauss.hpp"
#include "nlgp/kernels.hpp"
#include "nlgp/param.hpp"

namespace nlgp::svgp {

using ad::Value;

struct SvgpUnit {
  kernels::Kernel kernel;
  kernels::MeanFunction mean_fn;
  ParamPtr z;        // N_ind x d_in inducing locations
  ParamPtr qu_mean;  // N_ind x 1
  ParamPtr qu_chol;  // N_ind x N_ind, chol_free constraint
  double jitter = 1e-6;

  Eigen::Index n_inducing() const { return z->raw.rows(); }

  void collect(std::vector<ParamPtr>& out) const {
    kernel.collect(out);
    mean_fn.collect(out);
    out.push_back(z);
    out.push_back(qu_mean);
    out.push_back(qu_chol);
  }
};

inline SvgpUnit make_unit(const std::string& name, kernels::Kernel kernel,
                          kernels::MeanFunction mean_fn, Eigen::MatrixXd z_init,
                          double qu_chol_init = 1e-2, double jitter = 1e-6) {
  SvgpUnit u;
  u.kernel = std::move(kernel);
  u.mean_fn = std::move(mean_fn);
  const Eigen::Index m = z_init.rows();
  u.z = make_param(name + ".z", std::move(z_init));
  u.qu_mean = make_param(name + ".qu_mean", Eigen::MatrixXd::Zero(m, 1));
  u.qu_chol = make_param(name + ".qu_chol", log_init(m, m, qu_chol_init), Constraint::chol_free);
  // off-diagonal entries start at zero, the log-diagonal carries the scale
  Eigen::MatrixXd raw = u.qu_chol->raw.mutable_data();
  Eigen::VectorXd d = raw.diagonal();
  u.qu_chol->raw.mutable_data().setZero();
  u.qu_chol->raw.mutable_data().diagonal() = d;
  u.jitter = jitter;
  return u;
}

struct GpBank {
  std::vector<SvgpUnit> units;
  bool share_z = true;
};

struct Marginals {
  Value mean;  // n x L
  Value var;   // n x L, clamped at zero
};

namespace detail {

// Work shared by all units with the same kernel and inducing locations.
struct PriorCache {
  Value l;      // chol(K_ZZ + jitter I)
  Value a;      // L^{-1} K_ZX,  M x n
  Value t;      // L^{-T} a,     M x n
  Value kdiag;  // n x 1
  Value prior_reduction;  // n x 1, colsum(a * a)^T
};

struct CacheKey {
  const void* rbf;
  const void* deep;
  const void* z;
  bool operator<(const CacheKey& o) const {
    return std::tie(rbf, deep, z) < std::tie(o.rbf, o.deep, o.z);
  }
};

// the prior covariance over inducing values is K_ZZ + jitter I; escalation
// beyond the base jitter happens only if that still fails to factor
inline Value prior_chol(const SvgpUnit& u) {
  Value kzz = u.kernel.gram(u.z->raw, u.z->raw, true);
  Eigen::MatrixXd eye =
      u.jitter * Eigen::MatrixXd::Identity(u.n_inducing(), u.n_inducing());
  return gauss::cholesky_jittered(ad::add_const(kzz, eye), u.jitter);
}

inline PriorCache build_cache(const SvgpUnit& u, const Value& x) {
  PriorCache c;
  c.l = prior_chol(u);
  Value kxz = u.kernel.gram(x, u.z->raw, false);
  c.a = ad::solve_lower(c.l, ad::transpose(kxz));
  c.t = ad::solve_lower_t(c.l, c.a);
  c.kdiag = u.kernel.diag(x);
  c.prior_reduction = ad::transpose(ad::colsum(ad::square(c.a)));
  return c;
}

}  // namespace detail

// Predictive marginals of one unit given its cache:
//   mean = m(X) + A^T L^{-1} (m_u - m(Z))
//   var  = k(x,x) - sum(A*A) + sum(C*C),  C = L_u^T L^{-T} A
inline std::pair<Value, Value> unit_marginals(const SvgpUnit& u, const Value& x,
                                              const detail::PriorCache& cache) {
  const Eigen::Index n = x.rows();
  Value mz = u.mean_fn.eval(u.n_inducing());
  Value c = ad::solve_lower(cache.l, ad::sub(u.qu_mean->raw, mz));
  Value mean = ad::add(u.mean_fn.eval(n), ad::matmul(ad::transpose(cache.a), c));
  Value lu = u.qu_chol->view();
  Value proj = ad::matmul(ad::transpose(lu), cache.t);
  Value var = ad::add(ad::sub(cache.kdiag, cache.prior_reduction),
                      ad::transpose(ad::colsum(ad::square(proj))));
  return {mean, ad::clamp_min(var, 0.0)};
}

inline std::pair<Value, Value> predict_marginals(const SvgpUnit& u, const Value& x) {
  return unit_marginals(u, x, detail::build_cache(u, x));
}

// KL( q(u) || p(u) ) with p(u) = N(m(Z), K_ZZ + jitter I)
inline Value kl_inducing(const SvgpUnit& u) {
  Value l = detail::prior_chol(u);
  return gauss::kl_full(u.qu_mean->raw, u.qu_chol->view(), u.mean_fn.eval(u.n_inducing()), l);
}

// mean + sqrt(var) * noise, elementwise over the marginals
inline Value sample_marginals(const Value& mean, const Value& var, const Eigen::MatrixXd& noise) {
  return ad::add(mean, ad::mul(ad::sqrt(var), ad::Value::constant(noise)));
}

// Marginals of every unit in a bank at the same inputs, n x L stacked.
inline Marginals predict_bank(const GpBank& bank, const Value& x) {
  std::map<detail::CacheKey, detail::PriorCache> caches;
  std::vector<Value> means, vars;
  means.reserve(bank.units.size());
  vars.reserve(bank.units.size());
  for (const auto& u : bank.units) {
    detail::CacheKey key{u.kernel.rbf.get(), u.kernel.deep.get(), u.z.get()};
    auto it = caches.find(key);
    if (it == caches.end()) it = caches.emplace(key, detail::build_cache(u, x)).first;
    auto [mean, var] = unit_marginals(u, x, it->second);
    means.push_back(mean);
    vars.push_back(var);
  }
  return {ad::hstack(means), ad::hstack(vars)};
}

// Sum of inducing KLs over a bank, with K_ZZ factored once per group.
inline Value kl_bank(const GpBank& bank) {
  std::map<detail::CacheKey, Value> chols;
  Value total = Value::scalar(0.0);
  for (const auto& u : bank.units) {
    detail::CacheKey key{u.kernel.rbf.get(), u.kernel.deep.get(), u.z.get()};
    auto it = chols.find(key);
    if (it == chols.end()) it = chols.emplace(key, detail::prior_chol(u)).first;
    total = ad::add(total, gauss::kl_full(u.qu_mean->raw, u.qu_chol->view(),
                                          u.mean_fn.eval(u.n_inducing()), it->second));
  }
  return total;
}

inline void collect_bank(const GpBank& bank, std::vector<ParamPtr>& out) {
  for (const auto& u : bank.units) u.collect(out);
}

}  // namespace nlgp::svgp
