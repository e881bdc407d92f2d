#pragma once

// Model assembly for the seven supervised variants and the latent-input
// variants, plus ELBO evaluation in both modes: analytic expected log
// likelihoods (all single-layer variants) and reparameterized sampling (all
// variants, and the only mode for the deep models).

#include <Eigen/Core>
#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "nlgp/ad.hpp"
#include "nlgp/data.hpp"
#include "nlgp/gauss.hpp"
#include "nlgp/likelihoods.hpp"
#include "nlgp/param.hpp"
#include "nlgp/quad.hpp"
#include "nlgp/rng.hpp"
#include "nlgp/svgp.hpp"

namespace nlgp::model {

using ad::Value;

enum class Variant { mogp, gprn, dgp, sbgprn, nmogp, nsbgprn, ndgp };
enum class EllMode { analytic, sgvb };

inline bool is_neural(Variant v) {
  return v == Variant::nmogp || v == Variant::nsbgprn || v == Variant::ndgp;
}
inline bool is_dgp(Variant v) { return v == Variant::dgp || v == Variant::ndgp; }
inline bool has_mixnet(Variant v) { return v == Variant::sbgprn || v == Variant::nsbgprn; }
inline bool analytic_supported(Variant v) { return !is_dgp(v); }

inline std::string variant_name(Variant v) {
  switch (v) {
    case Variant::mogp: return "mogp";
    case Variant::gprn: return "gprn";
    case Variant::dgp: return "dgp";
    case Variant::sbgprn: return "sbgprn";
    case Variant::nmogp: return "nmogp";
    case Variant::nsbgprn: return "nsbgprn";
    case Variant::ndgp: return "ndgp";
  }
  return "?";
}

inline Variant variant_from(const std::string& s) {
  for (Variant v : {Variant::mogp, Variant::gprn, Variant::dgp, Variant::sbgprn, Variant::nmogp,
                    Variant::nsbgprn, Variant::ndgp})
    if (variant_name(v) == s) return v;
  throw ConfigError("unknown variant '" + s + "'");
}

struct ModelSpec {
  Variant variant = Variant::mogp;
  Eigen::Index d_x = 0;  // input dimension (latent dimension for LVMs)
  Eigen::Index d_y = 0;
  Eigen::Index l = 1;
  Eigen::Index l_prime = 0;  // deep variants only
  Eigen::Index d_h = 0;      // neural variants only
  quad::ActKind activation = quad::ActKind::sherf;
  double leaky_eps = 0.35;
  Eigen::Index n_ind = 16;
  Eigen::Index n_ind_layer2 = 0;  // defaults to n_ind when zero
  bool ard = true;
  bool deep_kernel = false;
  bool latent_inputs = false;
  EllMode ell_mode = EllMode::analytic;
  int n_samples = 250;  // SGVB draws per step
  int quad_order = 100;
  bool train_inducing = true;
  bool fix_mixing_identity = false;  // collapse M to a constant 1 (conjugate checks)
  double jitter = 1e-6;
  double l2_lambda = 1e-4;
  double beta_init = 1.0;

  quad::Activation act() const { return {activation, leaky_eps}; }

  void validate() const {
    if (d_x < 1 || d_y < 1) throw ConfigError("spec: bad dimensions");
    if (l < 1) throw ConfigError("spec: L must be >= 1");
    if (is_dgp(variant) && l_prime < 1) throw ConfigError("spec: deep variants need L_prime >= 1");
    if (is_neural(variant) && d_h < 1) throw ConfigError("spec: neural variants need D_H >= 1");
    if (n_ind < 1) throw ConfigError("spec: N_ind must be >= 1");
    if (ell_mode == EllMode::analytic && !analytic_supported(variant))
      throw ConfigError("spec: analytic ELL is not available for deep variants");
    if (latent_inputs &&
        !(variant == Variant::mogp || variant == Variant::nmogp || variant == Variant::nsbgprn))
      throw ConfigError("spec: latent inputs are supported for mogp, nmogp, nsbgprn only");
    if (latent_inputs && d_x < 1) throw ConfigError("spec: latent models need a latent dimension");
  }

  // Architecture defaults from the experimental protocol: L = ceil(D_Y/2),
  // L' = ceil(3/4 D_Y); D_H = 2 D_Y (n-mogp, n-dgp) or D_Y (n-sbgprn);
  // N_ind 400 except 100 for the GPRN and the second deep layer.
  static ModelSpec defaults_for(Variant v, Eigen::Index d_x, Eigen::Index d_y) {
    ModelSpec s;
    s.variant = v;
    s.d_x = d_x;
    s.d_y = d_y;
    s.l = (d_y + 1) / 2;
    s.l_prime = is_dgp(v) ? (3 * d_y + 3) / 4 : 0;
    if (v == Variant::nmogp || v == Variant::ndgp) s.d_h = 2 * d_y;
    if (v == Variant::nsbgprn) s.d_h = d_y;
    s.n_ind = v == Variant::gprn ? 100 : 400;
    s.n_ind_layer2 = is_dgp(v) ? 100 : 0;
    s.ell_mode = analytic_supported(v) ? EllMode::analytic : EllMode::sgvb;
    s.n_samples = is_dgp(v) ? 5 : 250;
    return s;
  }
};

// Variational posterior over held-out latent inputs (LVM test time).
struct LatentPosterior {
  Eigen::MatrixXd mean;       // N x D_X
  Eigen::MatrixXd log_scale;  // N x D_X
};

struct ElboParts {
  Value objective;  // the (annealed) ELBO minus L2, to be maximized
  double ell = 0.0;
  double kl = 0.0;
  double l2 = 0.0;
};

struct Model {
  ModelSpec spec;
  Eigen::Index n_total = 0;

  svgp::GpBank f_bank;       // layer-1 latent GPs
  svgp::GpBank layer2_bank;  // deep variants
  svgp::GpBank mix_bank;     // GPRN mixing entries, unit (k,l) at index k*L+l
  std::optional<lik::LinearBayesMix> mix;
  std::optional<lik::HiddenLayer> hidden;
  std::optional<lik::MixNet> mixnet;
  lik::NoiseModel noise;

  ParamPtr lat_mean;       // N x D_X (latent-input models)
  ParamPtr lat_log_scale;  // N x D_X

  quad::QuadratureRule rule;
  std::vector<ParamPtr> params;

  // ---------------------------------------------------------------------
  // expected log likelihood at given inputs (x may be a tape value)

  // analytic path: exact mean/variance of the regressor under q
  std::pair<Value, Value> head_moments_analytic(const Value& x) const {
    auto f = svgp::predict_bank(f_bank, x);
    switch (spec.variant) {
      case Variant::mogp:
        return mix->moments(f.mean, f.var);
      case Variant::nmogp: {
        auto hm = hidden->moments(f.mean, f.var, rule);
        return lik::neural_head_moments(*mix, *hidden, hm);
      }
      case Variant::sbgprn:
        return lik::sbgprn_head_moments(mixnet->forward(x), f.mean, f.var, spec.d_y);
      case Variant::nsbgprn: {
        auto hm = hidden->moments(f.mean, f.var, rule);
        return lik::nsbgprn_head_moments(mixnet->forward(x), *hidden, hm, spec.d_y);
      }
      case Variant::gprn: {
        auto m = svgp::predict_bank(mix_bank, x);
        return lik::gprn_head_moments(m.mean, m.var, f.mean, f.var, spec.d_y);
      }
      default:
        throw ConfigError("analytic ELL requested for a deep variant");
    }
  }

  // Two-layer composition for the deep variants: sample layer-1 marginals,
  // feed the L-vector into every layer-2 unit, sample those marginals.
  // Differentiable end to end; rows are sample-major blocks of n points.
  Value dgp_forward_sample(const Value& x, Eigen::Index n, int n_samples, Rng& rng) const {
    if (!is_dgp(spec.variant)) throw ConfigError("dgp_forward_sample: not a deep variant");
    const Eigen::Index s = n_samples;
    auto f1 = svgp::predict_bank(f_bank, x);
    Value f1_sample = svgp::sample_marginals(ad::tile_rows(f1.mean, s), ad::tile_rows(f1.var, s),
                                             rng.normal_matrix(s * n, spec.l));
    auto f2 = svgp::predict_bank(layer2_bank, f1_sample);
    return svgp::sample_marginals(f2.mean, f2.var, rng.normal_matrix(s * n, spec.l_prime));
  }

  // sampling path: conditional moments given reparameterized draws of all
  // sampled quantities; the mixing matrix M is always integrated out
  std::pair<Value, Value> head_moments_sampled(const Value& x, Eigen::Index n, int n_samples,
                                               Rng& rng) const {
    const Eigen::Index s = n_samples;
    Value f_sample;
    if (!is_dgp(spec.variant)) {
      auto f = svgp::predict_bank(f_bank, x);
      Value mean_t = ad::tile_rows(f.mean, s);
      Value var_t = ad::tile_rows(f.var, s);
      f_sample = svgp::sample_marginals(mean_t, var_t, rng.normal_matrix(s * n, spec.l));
    } else {
      f_sample = dgp_forward_sample(x, n, n_samples, rng);
    }
    switch (spec.variant) {
      case Variant::mogp:
      case Variant::dgp:
        return mix->conditional_moments(f_sample);
      case Variant::nmogp:
      case Variant::ndgp: {
        Value b = sample_bias(s, n, rng);
        return mix->conditional_moments(hidden->apply_sampled(f_sample, b));
      }
      case Variant::sbgprn: {
        Value net_t = ad::tile_rows(mixnet->forward(x), s);
        Value m = ad::block_colsum(ad::mul(net_t, ad::tile_cols(f_sample, spec.d_y)), spec.l);
        return {m, Value::constant(Eigen::MatrixXd::Zero(s * n, spec.d_y))};
      }
      case Variant::nsbgprn: {
        Value b = sample_bias(s, n, rng);
        Value hid = hidden->apply_sampled(f_sample, b);
        Value net_t = ad::tile_rows(mixnet->forward(x), s);
        Value m = ad::block_colsum(ad::mul(net_t, ad::tile_cols(hid, spec.d_y)), spec.d_h);
        return {m, Value::constant(Eigen::MatrixXd::Zero(s * n, spec.d_y))};
      }
      case Variant::gprn: {
        auto mm = svgp::predict_bank(mix_bank, x);
        Value m_sample =
            svgp::sample_marginals(ad::tile_rows(mm.mean, s), ad::tile_rows(mm.var, s),
                                   rng.normal_matrix(s * n, spec.d_y * spec.l));
        Value m = ad::block_colsum(ad::mul(m_sample, ad::tile_cols(f_sample, spec.d_y)), spec.l);
        return {m, Value::constant(Eigen::MatrixXd::Zero(s * n, spec.d_y))};
      }
    }
    throw ConfigError("unknown variant");
  }

  // one bias draw per sample, expanded to the (s * n)-row layout
  Value sample_bias(Eigen::Index s, Eigen::Index n, Rng& rng) const {
    Value mean_rows = ad::broadcast_row(ad::transpose(hidden->bias_mean->raw), s);
    Value scale_rows =
        ad::broadcast_row(ad::transpose(ad::exp(hidden->log_bias_scale->raw)), s);
    Value draws = gauss::reparam_sample_diag(mean_rows, scale_rows,
                                             rng.normal_matrix(s, spec.d_h));
    return ad::repeat_each_row(draws, n);
  }

  // expected log likelihood (total over the rows of x / y)
  Value ell(const Value& x, const Eigen::MatrixXd& y_clean, const Eigen::MatrixXd& mask,
            Rng& rng) const {
    if (spec.ell_mode == EllMode::analytic) {
      auto [m, v] = head_moments_analytic(x);
      return lik::ell_gaussian(y_clean, m, v, noise, mask);
    }
    const Eigen::Index n = y_clean.rows();
    const int s = spec.n_samples;
    auto [m, v] = head_moments_sampled(x, n, s, rng);
    Eigen::MatrixXd y_t = y_clean.replicate(s, 1);
    Eigen::MatrixXd mask_t = mask.replicate(s, 1);
    return ad::scale(lik::ell_gaussian(y_t, m, v, noise, mask_t), 1.0 / s);
  }

  // ---------------------------------------------------------------------
  // KL and penalty terms (no data scaling; latent-input KL handled by caller)

  Value kl_global() const {
    Value total = svgp::kl_bank(f_bank);
    if (!layer2_bank.units.empty()) total = ad::add(total, svgp::kl_bank(layer2_bank));
    if (!mix_bank.units.empty()) total = ad::add(total, svgp::kl_bank(mix_bank));
    if (mix) total = ad::add(total, mix->kl());
    if (hidden) total = ad::add(total, hidden->kl());
    return total;
  }

  Value l2_penalty() const {
    Value total = Value::scalar(0.0);
    if (hidden) total = ad::add(total, hidden->l2());
    if (mixnet) total = ad::add(total, mixnet->l2());
    return total;
  }

  // ---------------------------------------------------------------------
  // the minibatch objective

  ElboParts elbo_minibatch(const data::Dataset& ds, const std::vector<Eigen::Index>& batch,
                           std::uint64_t seed, double kl_scale) const {
    if (batch.empty()) throw ConfigError("elbo_minibatch: empty batch");
    Rng rng(derive_seed(seed, 0xe11u));
    const auto nb = static_cast<Eigen::Index>(batch.size());
    Eigen::MatrixXd y_clean_full = ds.y_clean();
    Eigen::MatrixXd y_b(nb, ds.d_y()), mask_b(nb, ds.d_y());
    for (Eigen::Index i = 0; i < nb; ++i) {
      y_b.row(i) = y_clean_full.row(batch[static_cast<std::size_t>(i)]);
      mask_b.row(i) = ds.mask.row(batch[static_cast<std::size_t>(i)]);
    }

    Value x;
    Value kl_latent = Value::scalar(0.0);
    if (spec.latent_inputs) {
      std::vector<Eigen::Index> bidx(batch.begin(), batch.end());
      Value mean_b = ad::gather_rows(lat_mean->raw, bidx);
      Value scale_b = ad::exp(ad::gather_rows(lat_log_scale->raw, bidx));
      x = gauss::reparam_sample_diag(mean_b, scale_b, rng.normal_matrix(nb, spec.d_x));
      kl_latent = gauss::kl_diag_std(mean_b, scale_b);
    } else {
      Eigen::MatrixXd xb(nb, ds.d_x());
      for (Eigen::Index i = 0; i < nb; ++i) xb.row(i) = ds.x.row(batch[static_cast<std::size_t>(i)]);
      x = Value::constant(xb);
    }

    const double rescale = static_cast<double>(n_total) / static_cast<double>(nb);
    Value ell_term = ad::scale(ell(x, y_b, mask_b, rng), rescale);
    Value kl_term = ad::add(kl_global(), ad::scale(kl_latent, rescale));
    Value l2_term = l2_penalty();
    Value objective = ad::sub(ell_term, ad::add(ad::scale(kl_term, kl_scale), l2_term));

    ElboParts parts;
    parts.objective = objective;
    parts.ell = ell_term.item();
    parts.kl = kl_term.item();
    parts.l2 = l2_term.item();
    if (!std::isfinite(parts.ell) || !std::isfinite(parts.kl))
      throw NumericalError("elbo_minibatch: non-finite objective");
    return parts;
  }

  // ---------------------------------------------------------------------
  // prediction (observation noise variance included)

  // analytic head moments for non-deep variants; Monte Carlo (fixed seed,
  // law of total variance) for the deep ones
  std::pair<Eigen::MatrixXd, Eigen::MatrixXd> predict(const Eigen::MatrixXd& x_star,
                                                      int mc_draws = 100,
                                                      std::uint64_t seed = 0) const {
    const Eigen::Index n = x_star.rows();
    Eigen::MatrixXd mean(n, spec.d_y), var(n, spec.d_y);
    if (analytic_supported(spec.variant)) {
      auto [m, v] = head_moments_analytic(Value::constant(x_star));
      mean = m.data();
      var = v.data();
    } else {
      Rng rng(derive_seed(seed, 0x9dau));
      Eigen::MatrixXd acc_m = Eigen::MatrixXd::Zero(n, spec.d_y);
      Eigen::MatrixXd acc_2 = Eigen::MatrixXd::Zero(n, spec.d_y);
      Eigen::MatrixXd acc_v = Eigen::MatrixXd::Zero(n, spec.d_y);
      auto [m, v] = head_moments_sampled(Value::constant(x_star), n, mc_draws, rng);
      for (int s = 0; s < mc_draws; ++s) {
        Eigen::MatrixXd ms = m.data().middleRows(s * n, n);
        Eigen::MatrixXd vs = v.data().middleRows(s * n, n);
        acc_m += ms;
        acc_2 += ms.cwiseProduct(ms);
        acc_v += vs;
      }
      mean = acc_m / mc_draws;
      var = (acc_2 + acc_v) / mc_draws - mean.cwiseProduct(mean);
      var = var.cwiseMax(0.0);
    }
    Eigen::RowVectorXd noise_var = noise.beta_plain().cwiseInverse().transpose();
    var.rowwise() += noise_var;
    return {mean, var};
  }
};

// ---------------------------------------------------------------------------
// construction

namespace detail {

inline Eigen::MatrixXd pca_latent_init(const Eigen::MatrixXd& y_clean, Eigen::Index d_latent,
                                       Rng& rng) {
  const Eigen::Index n = y_clean.rows();
  Eigen::MatrixXd centered = y_clean.rowwise() - y_clean.colwise().mean();
  Eigen::MatrixXd cov = centered.transpose() * centered / std::max<Eigen::Index>(n - 1, 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  Eigen::MatrixXd proj(y_clean.cols(), d_latent);
  for (Eigen::Index j = 0; j < d_latent; ++j) {
    if (cov.cols() - 1 - j >= 0)
      proj.col(j) = es.eigenvectors().col(cov.cols() - 1 - j);
    else
      proj.col(j) = rng.normal_matrix(y_clean.cols(), 1);
  }
  Eigen::MatrixXd lat = centered * proj;
  // normalize each latent dimension to unit variance to match the prior scale
  for (Eigen::Index j = 0; j < d_latent; ++j) {
    double sd = std::sqrt(lat.col(j).squaredNorm() / std::max<Eigen::Index>(n - 1, 1));
    lat.col(j) /= (sd > 1e-12 ? sd : 1.0);
  }
  return lat;
}

inline Eigen::MatrixXd inducing_init(const Eigen::MatrixXd& points, Eigen::Index m, Rng& rng) {
  if (points.rows() >= m && points.cols() > 0) {
    if (points.cwiseAbs().maxCoeff() == 0.0)  // placeholder data (checkpoint rebuild)
      return Eigen::MatrixXd::Zero(m, points.cols());
    return gauss::kmeans(points, m, 30, rng.below(1 << 30));
  }
  return rng.normal_matrix(m, std::max<Eigen::Index>(points.cols(), 1));
}

}  // namespace detail

inline Model build(const ModelSpec& spec_in, const data::Dataset& ds, std::uint64_t seed) {
  ModelSpec spec = spec_in;
  if (spec.n_ind_layer2 == 0) spec.n_ind_layer2 = spec.n_ind;
  spec.validate();
  if (!spec.latent_inputs && ds.d_x() != spec.d_x)
    throw ConfigError("build: dataset input dimension does not match the spec");
  if (ds.d_y() != spec.d_y) throw ConfigError("build: dataset output dimension mismatch");

  Model m;
  m.spec = spec;
  m.n_total = ds.n();
  m.rule = quad::gh_rule(spec.quad_order);
  m.noise = lik::NoiseModel::create("noise", spec.d_y, spec.beta_init);
  Rng rng(derive_seed(seed, 0xb111du));

  // latent inputs: PCA of the outputs, normalized to the unit-normal prior
  Eigen::MatrixXd x_init;
  if (spec.latent_inputs) {
    x_init = detail::pca_latent_init(ds.y_clean(), spec.d_x, rng);
    m.lat_mean = make_param("latents.mean", x_init);
    m.lat_log_scale = make_param("latents.log_scale", log_init(ds.n(), spec.d_x, 1e-1),
                                 Constraint::positive);
  } else {
    x_init = ds.x;
  }

  const bool neural = is_neural(spec.variant);
  auto mean_for = [&](const std::string& name) {
    return neural ? kernels::MeanFunction::zero()
                  : kernels::MeanFunction::trainable_constant(name);
  };

  // one set of inducing locations shared by every layer-1 GP
  Eigen::MatrixXd z0 = detail::inducing_init(x_init, spec.n_ind, rng);
  std::shared_ptr<kernels::DeepWarp> warp1;
  if (spec.deep_kernel) warp1 = kernels::DeepWarp::create("f.deepwarp", spec.d_x, rng);

  m.f_bank.share_z = true;
  ParamPtr shared_z;
  for (Eigen::Index j = 0; j < spec.l; ++j) {
    const std::string name = "f" + std::to_string(j);
    kernels::Kernel k;
    const double diag_noise = spec.variant == Variant::gprn ? 1e-2 : 0.0;
    k.rbf = kernels::RbfKernel::create(name + ".rbf", spec.d_x, spec.ard, 1.0, 1.0, diag_noise);
    k.deep = warp1;
    auto unit = svgp::make_unit(name, k, mean_for(name + ".mean"), z0, 1e-2, spec.jitter);
    if (!shared_z)
      shared_z = unit.z;
    else
      unit.z = shared_z;
    m.f_bank.units.push_back(std::move(unit));
  }

  if (spec.variant == Variant::gprn) {
    // all mixing entries share one kernel and the layer-1 inducing locations
    kernels::Kernel mix_kernel;
    mix_kernel.rbf = kernels::RbfKernel::create("mix.rbf", spec.d_x, spec.ard);
    mix_kernel.deep = warp1;
    m.mix_bank.share_z = true;
    for (Eigen::Index k = 0; k < spec.d_y; ++k)
      for (Eigen::Index j = 0; j < spec.l; ++j) {
        const std::string name = "m" + std::to_string(k) + "_" + std::to_string(j);
        auto unit = svgp::make_unit(name, mix_kernel, mean_for(name + ".mean"), z0, 1e-2,
                                    spec.jitter);
        unit.z = shared_z;
        m.mix_bank.units.push_back(std::move(unit));
      }
  }

  if (is_dgp(spec.variant)) {
    // second layer: random inducing locations in the layer-1 output space,
    // not shared across the L' units
    m.layer2_bank.share_z = false;
    for (Eigen::Index j = 0; j < spec.l_prime; ++j) {
      const std::string name = "g" + std::to_string(j);
      kernels::Kernel k;
      k.rbf = kernels::RbfKernel::create(name + ".rbf", spec.l, spec.ard);
      auto unit = svgp::make_unit(name, k, mean_for(name + ".mean"),
                                  rng.normal_matrix(spec.n_ind_layer2, spec.l), 1e-2, spec.jitter);
      m.layer2_bank.units.push_back(std::move(unit));
    }
  }

  const Eigen::Index head_in = is_dgp(spec.variant) ? spec.l_prime : spec.l;
  if (neural) {
    m.hidden = lik::HiddenLayer::create("hidden", spec.d_h, head_in, spec.act(), rng,
                                        spec.l2_lambda);
  }
  switch (spec.variant) {
    case Variant::mogp:
    case Variant::dgp:
      m.mix = spec.fix_mixing_identity
                  ? lik::LinearBayesMix::fixed_identity("mix", spec.d_y, head_in)
                  : lik::LinearBayesMix::create("mix", spec.d_y, head_in, rng);
      break;
    case Variant::nmogp:
    case Variant::ndgp:
      m.mix = spec.fix_mixing_identity
                  ? lik::LinearBayesMix::fixed_identity("mix", spec.d_y, spec.d_h)
                  : lik::LinearBayesMix::create("mix", spec.d_y, spec.d_h, rng);
      break;
    case Variant::sbgprn:
      m.mixnet = lik::MixNet::create("mixnet", spec.d_x, spec.d_y, spec.l, rng, spec.l2_lambda);
      break;
    case Variant::nsbgprn:
      m.mixnet = lik::MixNet::create("mixnet", spec.d_x, spec.d_y, spec.d_h, rng, spec.l2_lambda);
      break;
    case Variant::gprn:
      break;
  }

  // parameter registry, deduplicated (kernels / inducing points are shared)
  std::vector<ParamPtr> raw;
  svgp::collect_bank(m.f_bank, raw);
  svgp::collect_bank(m.layer2_bank, raw);
  svgp::collect_bank(m.mix_bank, raw);
  if (m.mix) m.mix->collect(raw);
  if (m.hidden) m.hidden->collect(raw);
  if (m.mixnet) m.mixnet->collect(raw);
  m.noise.collect(raw);
  if (spec.latent_inputs) {
    raw.push_back(m.lat_mean);
    raw.push_back(m.lat_log_scale);
  }
  for (const auto& p : raw) {
    bool seen = false;
    for (const auto& q : m.params)
      if (q.get() == p.get()) {
        seen = true;
        break;
      }
    if (!seen) m.params.push_back(p);
  }
  if (!spec.train_inducing)
    for (auto& p : m.params)
      if (p->name.size() >= 2 && p->name.substr(p->name.size() - 2) == ".z") p->trainable = false;
  return m;
}

}  // namespace nlgp::model
