#pragma once

// Training loop (minibatching, restarts with screening, stepwise learning
// rate decay, KL annealing) and evaluation: the nested test log-likelihood
// estimator, MRMSE, and test-time fitting of latent inputs.

#include <Eigen/Core>
#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "nlgp/data.hpp"
#include "nlgp/model.hpp"

namespace nlgp::train {

struct TrainConfig {
  int epochs = 250;
  Eigen::Index minibatch = 500;
  double lr = 0.02;
  std::vector<int> lr_milestones = {125, 200};
  double lr_factor = 0.5;
  int restarts = 5;
  int screen_epochs = 10;
  int kl_warmup_epochs = 0;
  std::uint64_t seed = 0;
};

struct EvalConfig {
  int n_outer = 25;
  int n_inner = 50;
  std::uint64_t seed = 0;
};

struct EpochRecord {
  double elbo = 0.0;  // mean minibatch estimate over the epoch
  double ell = 0.0;
  double wall_s = 0.0;
  double lr = 0.0;
  double kl_scale = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::vector<std::string> warnings;
  int selected_restart = 0;
};

inline double lr_at(const TrainConfig& cfg, int epoch) {
  double lr = cfg.lr;
  for (int m : cfg.lr_milestones)
    if (epoch >= m) lr *= cfg.lr_factor;
  return lr;
}

inline double kl_scale_at(const TrainConfig& cfg, int epoch) {
  if (cfg.kl_warmup_epochs <= 0) return 1.0;
  return std::min(1.0, (epoch + 1.0) / cfg.kl_warmup_epochs);
}

namespace detail {

struct Run {
  model::Model m;
  AdamState opt;
  TrainHistory history;
  double screen_ell = -std::numeric_limits<double>::infinity();
};

inline double run_epoch(Run& run, const data::Dataset& ds, const TrainConfig& cfg, int epoch,
                        std::uint64_t restart_seed, Eigen::Index minibatch) {
  const Eigen::Index n = ds.n();
  Rng shuffle_rng(derive_seed(restart_seed, 0xba7c4, static_cast<std::uint64_t>(epoch)));
  auto perm = shuffle_rng.permutation(n);
  const double lr = lr_at(cfg, epoch);
  const double kls = kl_scale_at(cfg, epoch);
  double elbo_acc = 0.0, ell_acc = 0.0;
  int steps = 0;
  auto t0 = std::chrono::steady_clock::now();
  for (Eigen::Index at = 0; at < n; at += minibatch) {
    const Eigen::Index take = std::min(minibatch, n - at);
    std::vector<Eigen::Index> batch(perm.begin() + at, perm.begin() + at + take);
    zero_grads(run.m.params);
    auto parts = run.m.elbo_minibatch(
        ds, batch, derive_seed(restart_seed, static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(steps)),
        kls);
    ad::backward(ad::neg(parts.objective));
    adam_step(run.m.params, run.opt, lr);
    elbo_acc += parts.objective.item();
    ell_acc += parts.ell;
    ++steps;
  }
  auto t1 = std::chrono::steady_clock::now();
  EpochRecord rec;
  rec.elbo = elbo_acc / steps;
  rec.ell = ell_acc / steps;
  rec.wall_s = std::chrono::duration<double>(t1 - t0).count();
  rec.lr = lr;
  rec.kl_scale = kls;
  run.history.epochs.push_back(rec);
  return rec.ell;
}

}  // namespace detail

// Build `restarts` models with distinct seeds, train each for the screening
// epochs, keep the one with the best training ELL over its final screening
// epoch, and train it to `epochs`. Deterministic given cfg.seed.
inline std::pair<model::Model, TrainHistory> train(const model::ModelSpec& spec,
                                                   const data::Dataset& ds,
                                                   const TrainConfig& cfg) {
  if (ds.n() < 1) throw ConfigError("train: empty dataset");
  Eigen::Index minibatch = cfg.minibatch;
  std::string warning;
  if (minibatch > ds.n()) {
    minibatch = ds.n();
    warning = "minibatch larger than dataset, falling back to full batch";
  }
  if (minibatch < 1) throw ConfigError("train: minibatch must be >= 1");

  const int screen = std::min(cfg.screen_epochs, cfg.epochs);
  std::vector<detail::Run> runs;
  const int n_restarts = std::max(cfg.restarts, 1);
  runs.reserve(static_cast<std::size_t>(n_restarts));
  for (int r = 0; r < n_restarts; ++r) {
    detail::Run run{model::build(spec, ds, derive_seed(cfg.seed, 0xb00d5, static_cast<std::uint64_t>(r))),
                    AdamState{}, TrainHistory{}, 0.0};
    if (!warning.empty()) run.history.warnings.push_back(warning);
    const std::uint64_t rseed = derive_seed(cfg.seed, 0x5eed5, static_cast<std::uint64_t>(r));
    double last_ell = -std::numeric_limits<double>::infinity();
    for (int e = 0; e < screen; ++e) last_ell = detail::run_epoch(run, ds, cfg, e, rseed, minibatch);
    run.screen_ell = last_ell;
    runs.push_back(std::move(run));
  }
  int best = 0;
  for (int r = 1; r < n_restarts; ++r)
    if (runs[static_cast<std::size_t>(r)].screen_ell > runs[static_cast<std::size_t>(best)].screen_ell)
      best = r;
  detail::Run winner = std::move(runs[static_cast<std::size_t>(best)]);
  winner.history.selected_restart = best;
  const std::uint64_t wseed = derive_seed(cfg.seed, 0x5eed5, static_cast<std::uint64_t>(best));
  for (int e = screen; e < cfg.epochs; ++e)
    detail::run_epoch(winner, ds, cfg, e, wseed, minibatch);
  return {std::move(winner.m), std::move(winner.history)};
}

// ---------------------------------------------------------------------------
// metrics

// Mean over observed output dimensions of the per-dimension RMSE.
inline double mrmse(const Eigen::MatrixXd& pred_means, const Eigen::MatrixXd& y,
                    const Eigen::MatrixXd& mask) {
  if (pred_means.rows() != y.rows() || pred_means.cols() != y.cols() ||
      mask.rows() != y.rows() || mask.cols() != y.cols())
    throw ConfigError("mrmse: shape mismatch");
  double total = 0.0;
  int dims = 0;
  for (Eigen::Index k = 0; k < y.cols(); ++k) {
    double ss = 0.0, count = 0.0;
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
      if (mask(i, k) == 0.0) continue;
      const double r = pred_means(i, k) - y(i, k);
      ss += r * r;
      count += 1.0;
    }
    if (count > 0.0) {
      total += std::sqrt(ss / count);
      ++dims;
    }
  }
  return dims > 0 ? total / dims : 0.0;
}

namespace detail {

inline void apply_act_inplace(const quad::Activation& act, Eigen::MatrixXd& m) {
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = quad::apply(act, m(i, j));
}

// Per-point conditional log densities for `draws` joint samples from the
// variational posterior; the mixing matrix M is integrated out analytically
// (its contribution lands in the conditional variance). Output is n x draws.
inline Eigen::MatrixXd conditional_logdens(const model::Model& m, const Eigen::MatrixXd& x_star,
                                           const model::LatentPosterior* latents,
                                           const Eigen::MatrixXd& y_star,
                                           const Eigen::MatrixXd& mask, int draws, Rng& rng) {
  const auto& spec = m.spec;
  const Eigen::Index n = y_star.rows();
  Eigen::MatrixXd y_clean = y_star.cwiseProduct(mask).unaryExpr(
      [](double v) { return std::isfinite(v) ? v : 0.0; });
  Eigen::VectorXd beta = m.noise.beta_plain();
  Eigen::MatrixXd out(n, draws);

  // marginals that do not depend on sampled inputs can be computed once
  Eigen::MatrixXd f_mean, f_var, mm_mean, mm_var, net_plain;
  const bool fixed_inputs = latents == nullptr;
  if (fixed_inputs) {
    auto f = svgp::predict_bank(m.f_bank, ad::Value::constant(x_star));
    f_mean = f.mean.data();
    f_var = f.var.data();
    if (spec.variant == model::Variant::gprn) {
      auto mv = svgp::predict_bank(m.mix_bank, ad::Value::constant(x_star));
      mm_mean = mv.mean.data();
      mm_var = mv.var.data();
    }
    if (m.mixnet) net_plain = m.mixnet->forward_plain(x_star);
  }

  const int chunk = std::max(1, static_cast<int>(200000 / std::max<Eigen::Index>(n, 1)));
  for (int start = 0; start < draws; start += chunk) {
    const int c = std::min(chunk, draws - start);
    const Eigen::Index rows = static_cast<Eigen::Index>(c) * n;

    Eigen::MatrixXd fm_t, fv_t, net_t;
    if (!fixed_inputs) {
      // draw latent inputs for every (sample, point) pair, then fresh marginals
      Eigen::MatrixXd x_all(rows, spec.d_x);
      for (int s = 0; s < c; ++s)
        x_all.middleRows(static_cast<Eigen::Index>(s) * n, n) =
            latents->mean + latents->log_scale.array().exp().matrix().cwiseProduct(
                                rng.normal_matrix(n, spec.d_x));
      auto f = svgp::predict_bank(m.f_bank, ad::Value::constant(x_all));
      fm_t = f.mean.data();
      fv_t = f.var.data();
      if (m.mixnet) net_t = m.mixnet->forward_plain(x_all);
    } else {
      fm_t = f_mean.replicate(c, 1);
      fv_t = f_var.replicate(c, 1);
      if (m.mixnet) net_t = net_plain.replicate(c, 1);
    }

    Eigen::MatrixXd f_s =
        fm_t + fv_t.cwiseSqrt().cwiseProduct(rng.normal_matrix(rows, fm_t.cols()));
    if (model::is_dgp(spec.variant)) {
      auto f2 = svgp::predict_bank(m.layer2_bank, ad::Value::constant(f_s));
      f_s = f2.mean.data() +
            f2.var.data().cwiseSqrt().cwiseProduct(rng.normal_matrix(rows, spec.l_prime));
    }

    Eigen::MatrixXd cm(rows, spec.d_y);
    Eigen::MatrixXd cv = Eigen::MatrixXd::Zero(rows, spec.d_y);
    auto integrate_mix = [&](const Eigen::MatrixXd& feats) {
      cm = feats * m.mix->m0->raw.data().transpose();
      if (!m.mix->fixed) {
        Eigen::MatrixXd sig2 = m.mix->log_sig_m->raw.data().array().exp().square();
        cv = feats.cwiseProduct(feats) * sig2.transpose();
      }
    };
    switch (spec.variant) {
      case model::Variant::mogp:
      case model::Variant::dgp:
        integrate_mix(f_s);
        break;
      case model::Variant::nmogp:
      case model::Variant::ndgp: {
        Eigen::MatrixXd b(rows, spec.d_h);
        Eigen::VectorXd bmean = m.hidden->bias_mean->raw.data();
        Eigen::VectorXd bscale = m.hidden->log_bias_scale->raw.data().array().exp();
        for (int s = 0; s < c; ++s) {
          Eigen::RowVectorXd bs =
              (bmean + bscale.cwiseProduct(Eigen::VectorXd(rng.normal_matrix(spec.d_h, 1))))
                  .transpose();
          b.middleRows(static_cast<Eigen::Index>(s) * n, n) = bs.replicate(n, 1);
        }
        Eigen::MatrixXd hid = f_s * m.hidden->m_tilde->raw.data().transpose() + b;
        apply_act_inplace(m.hidden->act, hid);
        integrate_mix(hid);
        break;
      }
      case model::Variant::sbgprn:
      case model::Variant::nsbgprn: {
        Eigen::MatrixXd feats = f_s;
        if (spec.variant == model::Variant::nsbgprn) {
          Eigen::MatrixXd b(rows, spec.d_h);
          Eigen::VectorXd bmean = m.hidden->bias_mean->raw.data();
          Eigen::VectorXd bscale = m.hidden->log_bias_scale->raw.data().array().exp();
          for (int s = 0; s < c; ++s) {
            Eigen::RowVectorXd bs =
                (bmean + bscale.cwiseProduct(Eigen::VectorXd(rng.normal_matrix(spec.d_h, 1))))
                    .transpose();
            b.middleRows(static_cast<Eigen::Index>(s) * n, n) = bs.replicate(n, 1);
          }
          feats = f_s * m.hidden->m_tilde->raw.data().transpose() + b;
          apply_act_inplace(m.hidden->act, feats);
        }
        const Eigen::Index width = feats.cols();
        for (Eigen::Index k = 0; k < spec.d_y; ++k)
          cm.col(k) = (net_t.middleCols(k * width, width).cwiseProduct(feats)).rowwise().sum();
        break;
      }
      case model::Variant::gprn: {
        Eigen::MatrixXd mm_t = mm_mean.replicate(c, 1) +
                               mm_var.replicate(c, 1).cwiseSqrt().cwiseProduct(
                                   rng.normal_matrix(rows, spec.d_y * spec.l));
        for (Eigen::Index k = 0; k < spec.d_y; ++k)
          cm.col(k) = (mm_t.middleCols(k * spec.l, spec.l).cwiseProduct(f_s)).rowwise().sum();
        break;
      }
    }

    // per-point Gaussian log density with total variance v + 1/beta
    for (int s = 0; s < c; ++s) {
      for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::Index row = static_cast<Eigen::Index>(s) * n + i;
        double ll = 0.0;
        for (Eigen::Index k = 0; k < spec.d_y; ++k) {
          if (mask(i, k) == 0.0) continue;
          const double tot = cv(row, k) + 1.0 / beta(k);
          const double r = y_clean(i, k) - cm(row, k);
          ll += -0.5 * std::log(2.0 * std::numbers::pi * tot) - 0.5 * r * r / tot;
        }
        out(i, start + s) = ll;
      }
    }
  }
  return out;
}

}  // namespace detail

// Nested estimator: per datapoint,
//   (1/N_outer) sum_k log( (1/N_inner) sum_j p(y | F_jk) ),
// then averaged over datapoints.
inline double test_ll(const model::Model& m, const Eigen::MatrixXd& x_star,
                      const Eigen::MatrixXd& y_star, const Eigen::MatrixXd& mask,
                      const EvalConfig& cfg, const model::LatentPosterior* latents = nullptr) {
  if (cfg.n_outer < 1 || cfg.n_inner < 1) throw ConfigError("test_ll: sample counts must be >= 1");
  if (m.spec.latent_inputs && latents == nullptr)
    throw ConfigError("test_ll: latent-input model requires fitted test latents");
  Rng rng(derive_seed(cfg.seed, 0x7e57u));
  const Eigen::Index n = y_star.rows();
  Eigen::MatrixXd dens =
      detail::conditional_logdens(m, x_star, latents, y_star, mask, cfg.n_outer * cfg.n_inner, rng);
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double point = 0.0;
    for (int k = 0; k < cfg.n_outer; ++k) {
      double mx = -std::numeric_limits<double>::infinity();
      for (int j = 0; j < cfg.n_inner; ++j) mx = std::max(mx, dens(i, k * cfg.n_inner + j));
      double acc = 0.0;
      for (int j = 0; j < cfg.n_inner; ++j) acc += std::exp(dens(i, k * cfg.n_inner + j) - mx);
      point += mx + std::log(acc / cfg.n_inner);
    }
    total += point / cfg.n_outer;
  }
  return total / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// test-time latent inference for the unsupervised models

// Nearest-neighbor initialization in observed-output space, then Adam on the
// test ELBO with every model parameter frozen.
inline model::LatentPosterior fit_test_latents(const model::Model& m,
                                               const data::Dataset& train_ds,
                                               const Eigen::MatrixXd& y_star,
                                               const Eigen::MatrixXd& mask_star, int steps,
                                               double lr, std::uint64_t seed) {
  if (!m.spec.latent_inputs) throw ConfigError("fit_test_latents: not a latent-input model");
  const Eigen::Index n = y_star.rows();
  if (n < 1) throw ConfigError("fit_test_latents: empty test set");
  Eigen::MatrixXd train_y = train_ds.y_clean();

  Eigen::MatrixXd init(n, m.spec.d_x);
  for (Eigen::Index i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    Eigen::Index arg = 0;
    for (Eigen::Index t = 0; t < train_ds.n(); ++t) {
      double ss = 0.0, count = 0.0;
      for (Eigen::Index k = 0; k < y_star.cols(); ++k) {
        if (mask_star(i, k) == 0.0 || train_ds.mask(t, k) == 0.0) continue;
        const double d = y_star(i, k) - train_y(t, k);
        ss += d * d;
        count += 1.0;
      }
      const double dist = count > 0 ? ss / count : std::numeric_limits<double>::infinity();
      if (dist < best) {
        best = dist;
        arg = t;
      }
    }
    init.row(i) = m.lat_mean->raw.data().row(arg);
  }

  auto mean_p = make_param("test_latents.mean", init);
  auto scale_p = make_param("test_latents.log_scale", log_init(n, m.spec.d_x, 1e-1),
                            Constraint::positive);
  std::vector<ParamPtr> ps{mean_p, scale_p};
  Eigen::MatrixXd y_clean = y_star.cwiseProduct(mask_star).unaryExpr(
      [](double v) { return std::isfinite(v) ? v : 0.0; });
  AdamState opt;
  for (int it = 0; it < steps; ++it) {
    Rng rng(derive_seed(seed, 0xf17, static_cast<std::uint64_t>(it)));
    zero_grads(ps);
    ad::Value scale = ad::exp(scale_p->raw);
    ad::Value x = gauss::reparam_sample_diag(mean_p->raw, scale, rng.normal_matrix(n, m.spec.d_x));
    ad::Value ell_v = m.ell(x, y_clean, mask_star, rng);
    ad::Value kl_v = gauss::kl_diag_std(mean_p->raw, scale);
    ad::backward(ad::neg(ad::sub(ell_v, kl_v)));
    adam_step(ps, opt, lr);
  }
  return {mean_p->raw.data(), scale_p->raw.data()};
}

}  // namespace nlgp::train
