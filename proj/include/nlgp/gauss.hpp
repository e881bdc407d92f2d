#pragma once

// Gaussian primitives: jittered Cholesky, multivariate normal log density,
// KL divergences, reparameterized sampling, and k-means for inducing point
// initialization.

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "nlgp/ad.hpp"
#include "nlgp/errors.hpp"
#include "nlgp/rng.hpp"

namespace nlgp::gauss {

struct FullGaussian {
  Eigen::VectorXd mean;
  Eigen::MatrixXd chol;  // lower triangular, strictly positive diagonal
};

struct DiagGaussian {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;  // standard deviations, > 0 elementwise
};

struct CholResult {
  Eigen::MatrixXd factor;
  double jitter_used = 0.0;
};

// Factor A + jI for the smallest j in {0, jitter, 10 jitter, 100 jitter}
// that succeeds.
inline CholResult cholesky_jittered(const Eigen::MatrixXd& a, double jitter) {
  if (a.rows() != a.cols()) throw NumericalError("cholesky_jittered: matrix not square");
  const double levels[4] = {0.0, jitter, 10.0 * jitter, 100.0 * jitter};
  for (double j : levels) {
    Eigen::MatrixXd aj = a;
    aj.diagonal().array() += j;
    Eigen::LLT<Eigen::MatrixXd> llt(aj);
    if (llt.info() == Eigen::Success && llt.matrixLLT().diagonal().minCoeff() > 0.0)
      return {Eigen::MatrixXd(llt.matrixL()), j};
  }
  throw NumericalError("cholesky_jittered: matrix not PD after jitter escalation");
}

// Tape variant: the jitter level is selected on the data, then the factor is
// recorded as a differentiable op on A + jI.
inline ad::Value cholesky_jittered(const ad::Value& a, double jitter) {
  CholResult plain = cholesky_jittered(a.data(), jitter);
  if (plain.jitter_used == 0.0) return ad::cholesky(a);
  Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(a.rows(), a.cols());
  return ad::cholesky(ad::add_const(a, Eigen::MatrixXd(plain.jitter_used * eye)));
}

inline double mvn_logpdf(const Eigen::VectorXd& x, const FullGaussian& g) {
  if (x.size() != g.mean.size()) throw NumericalError("mvn_logpdf: dimension mismatch");
  Eigen::VectorXd alpha = g.chol.triangularView<Eigen::Lower>().solve(x - g.mean);
  const double d = static_cast<double>(x.size());
  return -0.5 * alpha.squaredNorm() - g.chol.diagonal().array().log().sum() -
         0.5 * d * std::log(2.0 * std::numbers::pi);
}

// KL( N(mq, Lq Lq^T) || N(mp, Lp Lp^T) )
inline double kl_full(const FullGaussian& q, const FullGaussian& p) {
  if (q.mean.size() != p.mean.size()) throw NumericalError("kl_full: dimension mismatch");
  const auto n = q.mean.size();
  Eigen::MatrixXd m = p.chol.triangularView<Eigen::Lower>().solve(q.chol);
  Eigen::VectorXd d = p.chol.triangularView<Eigen::Lower>().solve(q.mean - p.mean);
  const double trace = m.squaredNorm();
  const double logdet_p = 2.0 * p.chol.diagonal().array().log().sum();
  const double logdet_q = 2.0 * q.chol.diagonal().array().log().sum();
  return 0.5 * (trace + d.squaredNorm() - static_cast<double>(n) + logdet_p - logdet_q);
}

inline double kl_diag(const DiagGaussian& q, const DiagGaussian& p) {
  if (q.mean.size() != p.mean.size()) throw NumericalError("kl_diag: dimension mismatch");
  Eigen::ArrayXd r = q.scale.array() / p.scale.array();
  Eigen::ArrayXd d = (q.mean - p.mean).array() / p.scale.array();
  return 0.5 * (r.square() + d.square() - 1.0 - 2.0 * r.log()).sum();
}

inline Eigen::VectorXd reparam_sample(const FullGaussian& g, const Eigen::VectorXd& noise) {
  if (noise.size() != g.mean.size()) throw NumericalError("reparam_sample: dimension mismatch");
  return g.mean + g.chol.triangularView<Eigen::Lower>() * noise;
}

inline Eigen::VectorXd reparam_sample(const DiagGaussian& g, const Eigen::VectorXd& noise) {
  if (noise.size() != g.mean.size()) throw NumericalError("reparam_sample: dimension mismatch");
  return g.mean + g.scale.cwiseProduct(noise);
}

// Tape variants, differentiable w.r.t. mean / chol / scale.
inline ad::Value reparam_sample(const ad::Value& mean, const ad::Value& chol,
                                const Eigen::VectorXd& noise) {
  return ad::add(mean, ad::matmul(chol, ad::Value::constant(noise)));
}

inline ad::Value reparam_sample_diag(const ad::Value& mean, const ad::Value& scale,
                                     const Eigen::MatrixXd& noise) {
  return ad::add(mean, ad::mul(scale, ad::Value::constant(noise)));
}

// KL( N(mq, Sq) || N(mp, Sp) ) with Sq = Lq Lq^T given as tape values.
inline ad::Value kl_full(const ad::Value& mq, const ad::Value& lq, const ad::Value& mp,
                         const ad::Value& lp) {
  const auto n = static_cast<double>(mq.rows());
  ad::Value m = ad::solve_lower(lp, lq);
  ad::Value d = ad::solve_lower(lp, ad::sub(mq, mp));
  ad::Value trace = ad::sum(ad::square(m));
  ad::Value quad = ad::sum(ad::square(d));
  ad::Value logdet_p = ad::scale(ad::sum(ad::log(ad::diag_vec(lp))), 2.0);
  ad::Value logdet_q = ad::scale(ad::sum(ad::log(ad::diag_vec(lq))), 2.0);
  return ad::scale(
      ad::add(ad::add_const(ad::add(trace, quad), -n), ad::sub(logdet_p, logdet_q)), 0.5);
}

// KL( N(mean, diag(scale^2)) || N(0, I) ), summed over all entries of the
// (arbitrary shape) mean/scale values.
inline ad::Value kl_diag_std(const ad::Value& mean, const ad::Value& scale) {
  ad::Value s2 = ad::square(scale);
  ad::Value inner = ad::sub(ad::add(s2, ad::square(mean)), ad::scale(ad::log(s2), 1.0));
  const double n = static_cast<double>(mean.rows() * mean.cols());
  return ad::scale(ad::add_const(ad::sum(inner), -n), 0.5);
}

// ---------------------------------------------------------------------------
// k-means (Lloyd's algorithm) for inducing point initialization

inline Eigen::MatrixXd kmeans(const Eigen::MatrixXd& points, Eigen::Index k, int iters,
                              std::uint64_t seed) {
  const Eigen::Index n = points.rows();
  if (n < k) throw NumericalError("kmeans: fewer points than centers");
  Rng rng(seed);
  auto perm = rng.permutation(n);
  Eigen::MatrixXd centers(k, points.cols());
  for (Eigen::Index c = 0; c < k; ++c) centers.row(c) = points.row(perm[static_cast<std::size_t>(c)]);

  std::vector<Eigen::Index> assign(static_cast<std::size_t>(n), 0);
  for (int it = 0; it < iters; ++it) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      Eigen::Index arg = 0;
      for (Eigen::Index c = 0; c < k; ++c) {
        double d = (points.row(i) - centers.row(c)).squaredNorm();
        if (d < best) {
          best = d;
          arg = c;
        }
      }
      if (assign[static_cast<std::size_t>(i)] != arg) changed = true;
      assign[static_cast<std::size_t>(i)] = arg;
    }
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, points.cols());
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(k);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(assign[static_cast<std::size_t>(i)]) += points.row(i);
      counts(assign[static_cast<std::size_t>(i)]) += 1.0;
    }
    for (Eigen::Index c = 0; c < k; ++c) {
      if (counts(c) > 0.0) {
        centers.row(c) = sums.row(c) / counts(c);
      } else {
        // empty cluster: reseed to the point farthest from its nearest center
        double far = -1.0;
        Eigen::Index arg = 0;
        for (Eigen::Index i = 0; i < n; ++i) {
          double nearest = std::numeric_limits<double>::infinity();
          for (Eigen::Index c2 = 0; c2 < k; ++c2)
            nearest = std::min(nearest, (points.row(i) - centers.row(c2)).squaredNorm());
          if (nearest > far) {
            far = nearest;
            arg = i;
          }
        }
        centers.row(c) = points.row(arg);
        changed = true;
      }
    }
    if (!changed) break;
  }
  return centers;
}

}  // namespace nlgp::gauss
