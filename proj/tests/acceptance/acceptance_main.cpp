// Acceptance suite: one pass/fail line per criterion. Every tolerance is
// pinned in code. Exits nonzero if any criterion fails.
//
// Usage: acceptance [path-to-cli] [criterion numbers...]

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <future>
#include <iostream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "nlgp/checkpoint.hpp"
#include "nlgp/config.hpp"
#include "nlgp/data.hpp"
#include "nlgp/model.hpp"
#include "nlgp/train.hpp"

using namespace nlgp;
using model::EllMode;
using model::ModelSpec;
using model::Variant;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double median3(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

data::Dataset toy_data(Eigen::Index n, Eigen::Index d_x, Eigen::Index d_y, std::uint64_t seed) {
  Rng rng(seed);
  data::Dataset ds;
  ds.x = rng.normal_matrix(n, d_x);
  ds.y = rng.normal_matrix(n, d_y);
  ds.mask = Eigen::MatrixXd::Ones(n, d_y);
  return ds;
}

ModelSpec toy_spec(Variant v) {
  ModelSpec s;
  s.variant = v;
  s.d_x = 2;
  s.d_y = 3;
  s.l = 2;
  s.l_prime = model::is_dgp(v) ? 2 : 0;
  s.d_h = model::is_neural(v) ? 3 : 0;
  s.activation = quad::ActKind::sherf;
  s.n_ind = 4;
  s.quad_order = 60;
  s.ell_mode = model::analytic_supported(v) ? EllMode::analytic : EllMode::sgvb;
  s.n_samples = 3;
  return s;
}

// shake the variational parameters off their symmetric initialization so no
// gradient is structurally zero
void randomize_posteriors(model::Model& m, std::uint64_t seed) {
  Rng rng(seed);
  for (auto& p : m.params) {
    if (p->name.find("qu_mean") != std::string::npos)
      p->raw.mutable_data() = 0.5 * rng.normal_matrix(p->raw.rows(), 1);
    if (p->name.find("qu_chol") != std::string::npos) {
      Eigen::MatrixXd lower = 0.1 * rng.normal_matrix(p->raw.rows(), p->raw.cols());
      lower.triangularView<Eigen::Upper>().setZero();
      p->raw.mutable_data() += lower;
    }
    if (p->name.find("bias_mean") != std::string::npos)
      p->raw.mutable_data() = 0.3 * rng.normal_matrix(p->raw.rows(), 1);
  }
}

// -------------------------------------------------------------------------
// 1. gradient correctness for all seven variants

Outcome criterion1() {
  auto ds = toy_data(8, 2, 3, 101);
  std::ostringstream msg;
  bool ok = true;
  for (Variant v : {Variant::mogp, Variant::gprn, Variant::dgp, Variant::sbgprn, Variant::nmogp,
                    Variant::nsbgprn, Variant::ndgp}) {
    auto m = model::build(toy_spec(v), ds, 7);
    randomize_posteriors(m, 13);
    std::vector<Eigen::Index> idx{0, 1, 2, 3, 4, 5, 6, 7};
    auto f = [&] { return m.elbo_minibatch(ds, idx, 3, 1.0).objective; };
    double err = finite_diff_check(f, m.params, 1e-5);
    msg << model::variant_name(v) << "=" << err << " ";
    if (!(err < 1e-4)) ok = false;
  }
  return {ok, "max rel grad err per variant: " + msg.str() + "(threshold 1e-4)"};
}

// -------------------------------------------------------------------------
// 2. analytic ELL equals the mean of 1e6 SGVB samples within 3 SE

Outcome criterion2() {
  auto ds = toy_data(8, 2, 3, 202);
  Eigen::MatrixXd y_clean = ds.y_clean();
  std::ostringstream msg;
  bool ok = true;
  for (Variant v : {Variant::mogp, Variant::gprn, Variant::sbgprn, Variant::nmogp,
                    Variant::nsbgprn}) {
    auto spec = toy_spec(v);
    spec.quad_order = 100;
    auto m = model::build(spec, ds, 17);
    randomize_posteriors(m, 19);
    Rng dummy(0);
    double analytic = m.ell(ad::Value::constant(ds.x), y_clean, ds.mask, dummy).item();

    m.spec.ell_mode = EllMode::sgvb;
    const int chunk = 2000, reps = 500;  // 1e6 samples total
    m.spec.n_samples = chunk;
    double acc = 0.0, acc2 = 0.0;
    for (int r = 0; r < reps; ++r) {
      Rng rng(derive_seed(404, static_cast<std::uint64_t>(r)));
      double e = m.ell(ad::Value::constant(ds.x), y_clean, ds.mask, rng).item();
      acc += e;
      acc2 += e * e;
    }
    const double mean = acc / reps;
    const double se = std::sqrt(std::max(acc2 / reps - mean * mean, 0.0) / reps);
    const double gap = std::abs(analytic - mean);
    msg << model::variant_name(v) << ": |gap|=" << gap << " 3SE=" << 3 * se << "  ";
    if (!(gap < 3 * se + 1e-9)) ok = false;
  }
  return {ok, msg.str()};
}

// -------------------------------------------------------------------------
// 3. moment oracle suite

// independent oracle: composite Simpson against the Gaussian density, domain
// split at the activation kink
double simpson_moment(const std::function<double(double)>& f, double mu, double sigma) {
  auto density = [&](double x) {
    const double z = (x - mu) / sigma;
    return std::exp(-0.5 * z * z) / (sigma * std::sqrt(2 * std::numbers::pi));
  };
  auto simpson = [&](double a, double b) {
    const int n = 20000;
    const double h = (b - a) / n;
    double acc = f(a) * density(a) + f(b) * density(b);
    for (int i = 1; i < n; ++i) acc += f(a + i * h) * density(a + i * h) * (i % 2 ? 4.0 : 2.0);
    return acc * h / 3.0;
  };
  const double lo = mu - 14 * sigma, hi = mu + 14 * sigma;
  if (lo < 0.0 && hi > 0.0) return simpson(lo, 0.0) + simpson(0.0, hi);
  return simpson(lo, hi);
}

Outcome criterion3() {
  const std::vector<double> mus = {-2.0, -0.5, 0.0, 0.5, 3.0};
  const std::vector<double> sigmas = {0.1, 1.0, 2.0};
  const std::vector<quad::Activation> acts = {{quad::ActKind::relu, 0.35},
                                              {quad::ActKind::leaky, 0.35},
                                              {quad::ActKind::erf, 0.35},
                                              {quad::ActKind::sherf, 0.35}};
  quad::QuadratureRule rule = quad::gh_rule(512);
  double worst_uni = 0.0;
  for (const auto& act : acts) {
    for (double mu : mus)
      for (double s : sigmas) {
        quad::GaussianScalar g{mu, s};
        double m1 = quad::act_mean(act, g);
        double o1 = simpson_moment([&](double x) { return quad::apply(act, x); }, mu, s);
        double m2 = quad::act_second_moment(act, g, rule);
        double o2 = simpson_moment(
            [&](double x) {
              const double v = quad::apply(act, x);
              return v * v;
            },
            mu, s);
        worst_uni = std::max({worst_uni, std::abs(m1 - o1), std::abs(m2 - o2)});
      }
  }
  for (int n : {1, 2})
    for (double mu : mus)
      for (double s : sigmas) {
        double impl = quad::act_poly_erf_mean(n, {mu, s});
        double oracle =
            simpson_moment([&](double x) { return std::pow(x, n) * std::erf(x); }, mu, s);
        worst_uni = std::max(worst_uni, std::abs(impl - oracle));
      }

  // cross moments against 1e7-sample Monte Carlo, 3 SE tolerance
  bool cross_ok = true;
  double worst_z = 0.0;
  Rng rng(31337);
  const int total = 10000000, chunk = 500000;
  for (const auto& act : acts) {
    for (double rho : {-0.9, 0.7}) {
      for (std::size_t g1 = 0; g1 < 15; g1 += 3) {
        const std::size_t g2 = (g1 + 4) % 15;
        const double mu1 = mus[g1 / 3], s1 = sigmas[g1 % 3];
        const double mu2 = mus[g2 / 3], s2 = sigmas[g2 % 3];
        Eigen::Vector2d mu(mu1, mu2);
        Eigen::Matrix2d cov;
        cov << s1 * s1, rho * s1 * s2, rho * s1 * s2, s2 * s2;
        const double impl = quad::act_cross_moment(act, mu, cov, rule);
        const double l21 = rho * s2, l22 = s2 * std::sqrt(1 - rho * rho);
        double acc = 0.0, acc2 = 0.0;
        for (int c = 0; c < total / chunk; ++c) {
          Eigen::ArrayXd z1 = rng.normal_matrix(chunk, 1).array();
          Eigen::ArrayXd z2 = rng.normal_matrix(chunk, 1).array();
          Eigen::ArrayXd x1 = mu1 + s1 * z1;
          Eigen::ArrayXd x2 = mu2 + l21 * z1 + l22 * z2;
          for (Eigen::Index i = 0; i < chunk; ++i) {
            const double p = quad::apply(act, x1(i)) * quad::apply(act, x2(i));
            acc += p;
            acc2 += p * p;
          }
        }
        const double mc = acc / total;
        const double se = std::sqrt(std::max(acc2 / total - mc * mc, 0.0) / total);
        // Deep-tail configs (e.g. relu at mu=-0.5, sigma=0.1) put the whole
        // cross moment into events of probability ~3e-7; with 1e7 samples the
        // empirical SE is a Poisson underestimate, so the comparison carries
        // an absolute floor of 3e-8 on top of the 3-SE band.
        const double z = std::abs(impl - mc) / (se + 1e-8);
        worst_z = std::max(worst_z, z);
        if (std::abs(impl - mc) > 3.0 * se + 3e-8) cross_ok = false;
      }
      // zero correlation factorizes exactly
      Eigen::Vector2d mu(0.5, -2.0);
      Eigen::Matrix2d cov;
      cov << 1.0, 0.0, 0.0, 4.0;
      const double prod = quad::act_mean(act, {0.5, 1.0}) * quad::act_mean(act, {-2.0, 2.0});
      if (std::abs(quad::act_cross_moment(act, mu, cov, rule) - prod) > 1e-12) cross_ok = false;
    }
  }
  std::ostringstream msg;
  msg << "univariate max abs err " << worst_uni << " (tol 1e-8); cross-moment max |z| " << worst_z
      << " (tol 3)";
  return {worst_uni < 1e-8 && cross_ok, msg.str()};
}

// -------------------------------------------------------------------------
// 4. synthetic experiment: N-MOGP against MOGP on cos(4||x||)

struct SynthRun {
  double ll_nmogp, ll_mogp, mrmse_nmogp;
};

// The synthetic data is bounded and zero-one scale already; the paper's
// reported numbers (noise floor 0.1) are in this raw space, so the harness
// trains and evaluates unstandardized.
SynthRun run_synth_pair(std::uint64_t seed, Eigen::Index missing_outputs) {
  data::SynthConfig scfg;
  scfg.n = 1000;
  scfg.seed = derive_seed(seed, 0xda7a);
  auto full = data::gen_synthetic(scfg);
  auto [train_ds, test_ds] = data::split(full, 0.2, derive_seed(seed, 0x5b117), false);
  if (missing_outputs > 0)
    train_ds = data::mask_outputs(train_ds, missing_outputs, derive_seed(seed, 0xba5c));

  // the regression protocol: 250 epochs, stepwise decay, restart screening
  train::TrainConfig tcfg;
  tcfg.epochs = 250;
  tcfg.minibatch = 250;
  tcfg.lr = 0.02;
  tcfg.lr_milestones = {125, 200};
  tcfg.restarts = 2;
  tcfg.screen_epochs = 8;
  tcfg.seed = seed;

  train::EvalConfig ecfg;
  ecfg.seed = derive_seed(seed, 0xe7a1);

  ModelSpec nspec;
  nspec.variant = Variant::nmogp;
  nspec.d_x = 5;
  nspec.d_y = 8;
  nspec.l = 3;
  nspec.d_h = 8;
  nspec.n_ind = 200;
  nspec.activation = quad::ActKind::sherf;
  nspec.ell_mode = EllMode::analytic;
  nspec.quad_order = 100;

  ModelSpec mspec = nspec;
  mspec.variant = Variant::mogp;
  mspec.d_h = 0;

  auto [nm, nh] = train::train(nspec, train_ds, tcfg);
  auto [mm, mh] = train::train(mspec, train_ds, tcfg);

  SynthRun out;
  out.ll_nmogp = train::test_ll(nm, test_ds.x, test_ds.y, test_ds.mask, ecfg);
  out.ll_mogp = train::test_ll(mm, test_ds.x, test_ds.y, test_ds.mask, ecfg);
  auto [pmean, pvar] = nm.predict(test_ds.x);
  out.mrmse_nmogp = train::mrmse(pmean, test_ds.y_clean(), test_ds.mask);
  return out;
}

Outcome criterion4() {
  std::vector<std::future<SynthRun>> futs;
  for (std::uint64_t seed : {11u, 22u, 33u})
    futs.push_back(std::async(std::launch::async, run_synth_pair, seed, 0));
  std::vector<double> ll_n, ll_m, rm, gap;
  std::ostringstream msg;
  for (auto& f : futs) {
    auto r = f.get();
    ll_n.push_back(r.ll_nmogp);
    ll_m.push_back(r.ll_mogp);
    rm.push_back(r.mrmse_nmogp);
    gap.push_back(r.ll_nmogp - r.ll_mogp);
    msg << "[nmogp ll=" << r.ll_nmogp << " mrmse=" << r.mrmse_nmogp << " mogp ll=" << r.ll_mogp
        << "] ";
  }
  const double med_rm = median3(rm), med_ll = median3(ll_n), med_gap = median3(gap);
  const bool rm_ok = med_rm <= 0.13, ll_ok = med_ll >= 3.0, gap_ok = med_gap >= 2.0;
  std::ostringstream sum;
  sum << "medians: nmogp mrmse=" << med_rm << (rm_ok ? " (PASS" : " (FAIL")
      << " <= 0.13), nmogp ll=" << med_ll << (ll_ok ? " (PASS" : " (FAIL")
      << " >= 3.0), ll gap=" << med_gap << (gap_ok ? " (PASS" : " (FAIL")
      << " >= 2.0)  " << msg.str();
  return {rm_ok && ll_ok && gap_ok, sum.str()};
}

// -------------------------------------------------------------------------
// 5. conjugate sanity bound

Outcome criterion5() {
  // one-output GP regression data
  Rng rng(555);
  const Eigen::Index n = 20;
  data::Dataset ds;
  ds.x = rng.normal_matrix(n, 1);
  ds.y.resize(n, 1);
  for (Eigen::Index i = 0; i < n; ++i)
    ds.y(i, 0) = std::sin(1.5 * ds.x(i, 0)) + 0.1 * rng.normal();
  ds.mask = Eigen::MatrixXd::Ones(n, 1);

  ModelSpec spec;
  spec.variant = Variant::mogp;
  spec.d_x = 1;
  spec.d_y = 1;
  spec.l = 1;
  spec.n_ind = n;
  spec.fix_mixing_identity = true;
  spec.train_inducing = false;
  auto m = model::build(spec, ds, 3);
  m.f_bank.units[0].z->raw.mutable_data() = ds.x;  // Z = X

  std::vector<Eigen::Index> idx(n);
  for (Eigen::Index i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
  AdamState opt;
  for (int it = 0; it < 24000; ++it) {
    zero_grads(m.params);
    auto parts = m.elbo_minibatch(ds, idx, 1, 1.0);
    ad::backward(ad::neg(parts.objective));
    const double lr = it < 10000 ? 0.02 : (it < 20000 ? 0.005 : 5e-4);
    adam_step(m.params, opt, lr);
  }
  const double elbo = m.elbo_minibatch(ds, idx, 1, 1.0).objective.item();

  // exact log marginal N(y | c, K + beta^{-1} I) at the trained parameters
  const auto& u = m.f_bank.units[0];
  Eigen::MatrixXd k = u.kernel.gram(ad::Value::constant(ds.x), ad::Value::constant(ds.x), true).data();
  k.diagonal().array() += 1.0 / m.noise.beta_plain()(0);
  const double c = u.mean_fn.value->raw.data()(0, 0);
  gauss::FullGaussian exact_gp{Eigen::VectorXd::Constant(n, c),
                               Eigen::MatrixXd(Eigen::LLT<Eigen::MatrixXd>(k).matrixL())};
  const double exact = gauss::mvn_logpdf(ds.y.col(0), exact_gp);
  std::ostringstream msg;
  msg << "optimized ELBO " << elbo << " vs exact log marginal " << exact << ", gap "
      << exact - elbo << " (tol 0.1 nat, ELBO must not exceed the marginal by > 1e-6)";
  return {exact - elbo < 0.1 && elbo <= exact + 1e-6, msg.str()};
}

// -------------------------------------------------------------------------
// 6. SVGP prior consistency and KL properties

Outcome criterion6() {
  Rng rng(666);
  bool ok = true;
  std::ostringstream msg;
  // prior consistency at N_ind up to 50
  for (Eigen::Index m_ind : {5, 20, 50}) {
    kernels::Kernel k;
    k.rbf = kernels::RbfKernel::create("c6", 2, true);
    auto unit = svgp::make_unit("c6u", k, kernels::MeanFunction::trainable_constant("c6m", 0.2),
                                rng.normal_matrix(m_ind, 2));
    Eigen::MatrixXd kzz = unit.kernel.gram(unit.z->raw, unit.z->raw, true).data();
    kzz.diagonal().array() += unit.jitter;
    Eigen::MatrixXd l = gauss::cholesky_jittered(kzz, unit.jitter).factor;
    unit.qu_mean->raw.mutable_data().array() = 0.2;
    Eigen::MatrixXd raw = l;
    raw.diagonal() = l.diagonal().array().log();
    unit.qu_chol->raw.mutable_data() = raw;

    Eigen::MatrixXd x = rng.normal_matrix(25, 2);
    auto [mean, var] = svgp::predict_marginals(unit, ad::Value::constant(x));
    const double mean_err = (mean.data().array() - 0.2).abs().maxCoeff();
    const double var_err = (var.data().array() - 1.0).abs().maxCoeff();
    const double kl = svgp::kl_inducing(unit).item();
    if (mean_err > 1e-10 || var_err > 1e-10 || std::abs(kl) > 1e-10) ok = false;
    msg << "M=" << m_ind << ": mean_err=" << mean_err << " var_err=" << var_err << " kl=" << kl
        << "  ";
  }
  // kl_full non-negative on 1000 random pairs
  double min_kl = 1e300;
  for (int t = 0; t < 1000; ++t) {
    auto draw = [&](double boost) {
      Eigen::MatrixXd b = rng.normal_matrix(4, 4);
      gauss::FullGaussian g;
      g.mean = rng.normal_matrix(4, 1);
      Eigen::MatrixXd cov = b * b.transpose() + boost * Eigen::MatrixXd::Identity(4, 4);
      g.chol = Eigen::LLT<Eigen::MatrixXd>(cov).matrixL();
      return g;
    };
    min_kl = std::min(min_kl, gauss::kl_full(draw(0.1), draw(0.1)));
  }
  msg << "min kl over 1000 pairs = " << min_kl;
  if (min_kl < 0.0) ok = false;
  return {ok, msg.str()};
}

// -------------------------------------------------------------------------
// 7. estimator reduction on a deterministic model

Outcome criterion7() {
  auto ds = toy_data(10, 2, 3, 777);
  auto spec = toy_spec(Variant::nmogp);
  auto m = model::build(spec, ds, 5);
  for (auto& p : m.params) {
    if (p->name.find("log_signal_var") != std::string::npos)
      p->raw.mutable_data().array() = -1400.0;
    if (p->name.find("log_sig_m") != std::string::npos ||
        p->name.find("log_bias_scale") != std::string::npos)
      p->raw.mutable_data().array() = -350.0;
    if (p->name.find("qu_chol") != std::string::npos) {
      p->raw.mutable_data().setZero();
      p->raw.mutable_data().diagonal().array() = -350.0;
    }
  }
  auto [mean, var] = m.predict(ds.x);
  Eigen::VectorXd beta = m.noise.beta_plain();
  double exact = 0.0;
  for (Eigen::Index i = 0; i < ds.n(); ++i)
    for (Eigen::Index k = 0; k < ds.d_y(); ++k) {
      const double r = ds.y(i, k) - mean(i, k);
      exact += 0.5 * std::log(beta(k) / (2 * std::numbers::pi)) - 0.5 * beta(k) * r * r;
    }
  exact /= static_cast<double>(ds.n());
  double worst = 0.0;
  for (auto [no, ni] : {std::pair{1, 1}, {2, 7}, {25, 50}, {40, 3}}) {
    train::EvalConfig ecfg;
    ecfg.n_outer = no;
    ecfg.n_inner = ni;
    ecfg.seed = derive_seed(7777, no, ni);
    worst = std::max(worst, std::abs(train::test_ll(m, ds.x, ds.y, ds.mask, ecfg) - exact));
  }
  std::ostringstream msg;
  msg << "max |estimator - exact| over (N_outer, N_inner) combos = " << worst << " (tol 1e-12)";
  return {worst < 1e-12, msg.str()};
}

// -------------------------------------------------------------------------
// 8. missing-output correctness

Outcome criterion8() {
  // bitwise invariance of the masked objective and metrics
  auto ds = toy_data(12, 2, 3, 888);
  ds.mask(2, 1) = 0.0;
  ds.mask(7, 0) = 0.0;
  auto spec = toy_spec(Variant::nmogp);
  auto m = model::build(spec, ds, 9);
  std::vector<Eigen::Index> idx(12);
  for (Eigen::Index i = 0; i < 12; ++i) idx[static_cast<std::size_t>(i)] = i;
  const double base = m.elbo_minibatch(ds, idx, 3, 1.0).objective.item();
  auto perturbed = ds;
  perturbed.y(2, 1) = 123456.0;
  perturbed.y(7, 0) = std::numeric_limits<double>::quiet_NaN();
  const double after = m.elbo_minibatch(perturbed, idx, 3, 1.0).objective.item();
  auto [pm, pv] = m.predict(ds.x);
  const bool bitwise = (base == after) &&
                       (train::mrmse(pm, ds.y_clean(), ds.mask) ==
                        train::mrmse(pm, perturbed.y_clean(), perturbed.mask));

  // training with 25% of the outputs missing still favors the neural head
  std::vector<std::future<SynthRun>> futs;
  for (std::uint64_t seed : {44u, 55u, 66u})
    futs.push_back(std::async(std::launch::async, run_synth_pair, seed, 2));
  std::vector<double> gaps;
  std::ostringstream msg;
  for (auto& f : futs) {
    auto r = f.get();
    gaps.push_back(r.ll_nmogp - r.ll_mogp);
    msg << "[gap=" << r.ll_nmogp - r.ll_mogp << "] ";
  }
  const double med_gap = median3(gaps);
  std::ostringstream sum;
  sum << "bitwise invariance " << (bitwise ? "holds" : "BROKEN") << "; masked-training ll gaps "
      << msg.str() << "median=" << med_gap << " (must be > 0)";
  return {bitwise && med_gap > 0.0, sum.str()};
}

// -------------------------------------------------------------------------
// 9. LVM round trip on data generated from a known 2-d latent MOGP

data::Dataset gen_latent_mogp(Eigen::Index n, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd lat = rng.normal_matrix(n, 2);
  // exact draws of two GP functions over the latent points
  Eigen::MatrixXd k(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      k(i, j) = std::exp(-0.5 * (lat.row(i) - lat.row(j)).squaredNorm() / (1.2 * 1.2));
  k.diagonal().array() += 1e-8;
  Eigen::MatrixXd l = Eigen::LLT<Eigen::MatrixXd>(k).matrixL();
  Eigen::MatrixXd f(n, 2);
  f.col(0) = l * rng.normal_matrix(n, 1);
  f.col(1) = l * rng.normal_matrix(n, 1);
  Eigen::MatrixXd mix = rng.normal_matrix(6, 2);
  data::Dataset ds;
  ds.x.resize(n, 0);
  ds.y = f * mix.transpose() + 0.05 * rng.normal_matrix(n, 6);
  ds.mask = Eigen::MatrixXd::Ones(n, 6);
  return ds;
}

double lvm_test_ll(Variant v, const data::Dataset& train_ds, const data::Dataset& test_ds,
                   std::uint64_t seed) {
  ModelSpec spec;
  spec.variant = v;
  spec.latent_inputs = true;
  spec.d_x = 4;
  spec.d_y = 6;
  spec.l = 4;
  spec.d_h = model::is_neural(v) ? 12 : 0;
  spec.activation = quad::ActKind::leaky;
  spec.n_ind = 32;
  spec.ard = false;  // shared lengthscale per the unsupervised protocol
  spec.ell_mode = EllMode::analytic;
  spec.quad_order = 100;

  train::TrainConfig tcfg;
  tcfg.epochs = 120;
  tcfg.minibatch = 256;
  tcfg.lr = 0.03;
  tcfg.lr_milestones = {80};
  tcfg.restarts = 2;
  tcfg.screen_epochs = 8;
  tcfg.seed = seed;
  auto [m, hist] = train::train(spec, train_ds, tcfg);

  auto latents = train::fit_test_latents(m, train_ds, test_ds.y, test_ds.mask, 250, 0.05,
                                         derive_seed(seed, 0xf17));
  train::EvalConfig ecfg;
  ecfg.seed = derive_seed(seed, 0xe7a1);
  return train::test_ll(m, test_ds.x, test_ds.y, test_ds.mask, ecfg, &latents);
}

Outcome criterion9() {
  auto run_seed = [&](std::uint64_t seed) {
    auto full = gen_latent_mogp(260, derive_seed(seed, 0x9));
    auto [train_ds, test_ds] = data::split(full, 0.25, derive_seed(seed, 0x99));
    const double n_ll = lvm_test_ll(Variant::nmogp, train_ds, test_ds, seed);
    const double m_ll = lvm_test_ll(Variant::mogp, train_ds, test_ds, seed);
    return std::pair{n_ll, m_ll};
  };
  std::vector<std::future<std::pair<double, double>>> futs;
  for (std::uint64_t seed : {1u, 2u, 3u}) futs.push_back(std::async(std::launch::async, run_seed, seed));
  int wins = 0;
  std::ostringstream msg;
  for (auto& f : futs) {
    auto [n_ll, m_ll] = f.get();
    if (n_ll > m_ll) ++wins;
    msg << "[nmogp=" << n_ll << " mogp=" << m_ll << "] ";
  }
  msg << wins << "/3 wins (need >= 2)";
  return {wins >= 2, msg.str()};
}

// -------------------------------------------------------------------------
// 10. CLI ingestion of robotics-shaped CSVs with the protocol configs

Outcome criterion10(const std::string& cli) {
  if (cli.empty()) return {false, "no CLI path given"};
  // a Sarcos-shaped file at desk scale: 21 inputs, 7 outputs
  Rng rng(1010);
  data::Dataset ds;
  const Eigen::Index n = 240;
  ds.x = rng.normal_matrix(n, 21);
  Eigen::MatrixXd w = rng.normal_matrix(7, 21);
  ds.y = ds.x * w.transpose() / 4.0 + 0.1 * rng.normal_matrix(n, 7);
  ds.mask = Eigen::MatrixXd::Ones(n, 7);
  data::save_csv("/tmp/nlgp_accept_robot.csv", ds);

  std::ofstream cfg("/tmp/nlgp_accept_cfg.json");
  cfg << R"({"train": {"epochs": 2, "minibatch": 500, "lr": 0.02, "restarts": 1,
              "screen_epochs": 0, "seed": 1},
             "eval": {"N_outer": 2, "N_inner": 3}})";
  cfg.close();

  bool ok = true;
  std::ostringstream msg;
  for (const std::string v : {"mogp", "gprn", "dgp", "sbgprn", "nmogp", "nsbgprn", "ndgp"}) {
    const std::string ckpt = "/tmp/nlgp_accept_" + v + ".ckpt";
    const std::string cmd = cli + " train --variant " + v +
                            " --config /tmp/nlgp_accept_cfg.json"
                            " --data /tmp/nlgp_accept_robot.csv --d-x 21 --test-fraction 0.1"
                            " --split-seed 3 --seed 5 --out " + ckpt +
                            " --metrics /tmp/nlgp_accept_metrics.jsonl > /dev/null";
    const int rc = std::system(cmd.c_str());
    if (rc != 0) {
      ok = false;
      msg << v << ": exit " << rc << "  ";
      continue;
    }
    auto loaded = checkpoint::load(ckpt);
    const auto& s = loaded.m.spec;
    bool dims = s.l == 4;  // ceil(7/2)
    if (model::is_dgp(loaded.m.spec.variant)) dims = dims && s.l_prime == 6;  // ceil(21/4)
    if (v == "nmogp" || v == "ndgp") dims = dims && s.d_h == 14;
    if (v == "nsbgprn") dims = dims && s.d_h == 7;
    dims = dims && (v == "gprn" ? s.n_ind == 100 : s.n_ind == 400);
    if (model::is_dgp(loaded.m.spec.variant)) dims = dims && s.n_ind_layer2 == 100;
    if (!dims) {
      ok = false;
      msg << v << ": wrong architecture dims  ";
    } else {
      msg << v << ": ok  ";
    }
  }
  return {ok, msg.str()};
}

}  // namespace

int main(int argc, char** argv) {
  const std::string cli = argc > 1 ? argv[1] : "";
  std::vector<int> only;
  for (int i = 2; i < argc; ++i) only.push_back(std::atoi(argv[i]));
  auto wanted = [&](int i) { return only.empty() || std::find(only.begin(), only.end(), i) != only.end(); };

  struct Criterion {
    int number;
    std::string title;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "gradient correctness across all seven variants", criterion1},
      {2, "analytic ELL equals Monte Carlo SGVB in expectation", criterion2},
      {3, "activation moment oracle suite", criterion3},
      {4, "synthetic experiment: neural likelihood beats the linear head", criterion4},
      {5, "conjugate sanity bound against the exact GP marginal", criterion5},
      {6, "SVGP prior consistency and KL positivity", criterion6},
      {7, "test-LL estimator reduction on a deterministic model", criterion7},
      {8, "missing-output masking and masked training", criterion8},
      {9, "unsupervised round trip on latent MOGP data", criterion9},
      {10, "CLI ingestion of robotics-shaped data with protocol configs",
       [&] { return criterion10(cli); }},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    if (!wanted(c.number)) continue;
    auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    auto secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("[criterion %2d] %s — %s (%.1fs)\n    %s\n", c.number,
                out.pass ? "PASS" : "FAIL", c.title.c_str(), secs, out.detail.c_str());
    std::fflush(stdout);
    if (!out.pass) ++failures;
  }
  if (failures > 0) std::printf("%d criterion(s) FAILED\n", failures);
  else std::printf("all criteria passed\n");
  return failures == 0 ? 0 : 1;
}
