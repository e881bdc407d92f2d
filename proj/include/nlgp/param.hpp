#pragma once

// Trainable parameters, positivity constraints, the Adam optimizer and a
// central-difference gradient checker.

#include <Eigen/Core>
#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "nlgp/ad.hpp"
#include "nlgp/errors.hpp"

namespace nlgp {

enum class Constraint {
  none,       // raw value used directly
  positive,   // value = exp(raw), strictly positive
  chol_free,  // strict lower of raw + exp of raw diagonal: a valid Cholesky factor
};

struct Param {
  std::string name;
  ad::Value raw;  // unconstrained leaf
  Constraint constraint = Constraint::none;
  bool trainable = true;

  Param(std::string n, Eigen::MatrixXd init, Constraint c = Constraint::none)
      : name(std::move(n)), raw(ad::Value::leaf(std::move(init))), constraint(c) {}

  Eigen::Index size() const { return raw.rows() * raw.cols(); }

  // Constrained view as a fresh tape expression.
  ad::Value view() const {
    switch (constraint) {
      case Constraint::none:
        return raw;
      case Constraint::positive:
        return ad::exp(raw);
      case Constraint::chol_free: {
        Eigen::MatrixXd strict =
            Eigen::MatrixXd::Ones(raw.rows(), raw.cols()).triangularView<Eigen::StrictlyLower>();
        ad::Value lower = ad::mul(raw, ad::Value::constant(strict));
        ad::Value d = ad::exp(ad::diag_vec(raw));
        return ad::add(lower, ad::make_diag(d));
      }
    }
    throw NumericalError("unknown constraint");
  }

  void zero_grad() { raw.zero_grad(); }
};

using ParamPtr = std::shared_ptr<Param>;

inline ParamPtr make_param(std::string name, Eigen::MatrixXd init,
                           Constraint c = Constraint::none) {
  return std::make_shared<Param>(std::move(name), std::move(init), c);
}

// log-space init helper for positive params
inline Eigen::MatrixXd log_init(Eigen::Index rows, Eigen::Index cols, double value) {
  return Eigen::MatrixXd::Constant(rows, cols, std::log(value));
}

// ---------------------------------------------------------------------------
// Adam

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  std::vector<Eigen::MatrixXd> m;
  std::vector<Eigen::MatrixXd> v;
};

// One descent step in unconstrained space. Grads must be populated for every
// trainable param; non-trainable params are skipped entirely.
inline void adam_step(const std::vector<ParamPtr>& params, AdamState& st, double lr) {
  if (st.m.empty()) {
    st.m.resize(params.size());
    st.v.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      st.m[i] = Eigen::MatrixXd::Zero(params[i]->raw.rows(), params[i]->raw.cols());
      st.v[i] = st.m[i];
    }
  }
  if (st.m.size() != params.size())
    throw NumericalError("adam_step: state does not match parameter list");
  st.step += 1;
  const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Param& p = *params[i];
    if (!p.trainable) continue;
    if (!p.raw.has_grad())
      throw NumericalError("adam_step: missing gradient on param " + p.name);
    const Eigen::MatrixXd& g = p.raw.grad();
    if (!g.allFinite())
      throw NumericalError("adam_step: non-finite gradient on param " + p.name);
    st.m[i] = st.beta1 * st.m[i] + (1.0 - st.beta1) * g;
    st.v[i] = (st.beta2 * st.v[i].array() + (1.0 - st.beta2) * g.array().square()).matrix();
    Eigen::ArrayXXd mhat = st.m[i].array() / bc1;
    Eigen::ArrayXXd vhat = st.v[i].array() / bc2;
    p.raw.mutable_data().array() -= lr * mhat / (vhat.sqrt() + st.eps);
  }
}

inline void zero_grads(const std::vector<ParamPtr>& params) {
  for (const auto& p : params) p->zero_grad();
}

// ---------------------------------------------------------------------------
// gradient checking

// Max over all scalar parameters of |analytic - central| / (|central| + 1e-8).
// The step for entry theta is h * max(1, |theta|). loss_fn must be
// deterministic given the parameter values.
inline double finite_diff_check(const std::function<ad::Value()>& loss_fn,
                                const std::vector<ParamPtr>& params, double h) {
  zero_grads(params);
  ad::Value loss = loss_fn();
  ad::backward(loss);
  std::vector<Eigen::MatrixXd> analytic(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    analytic[i] = params[i]->raw.has_grad()
                      ? params[i]->raw.grad()
                      : Eigen::MatrixXd::Zero(params[i]->raw.rows(), params[i]->raw.cols());
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i]->trainable) continue;
    Eigen::MatrixXd& data = params[i]->raw.mutable_data();
    for (Eigen::Index c = 0; c < data.cols(); ++c) {
      for (Eigen::Index r = 0; r < data.rows(); ++r) {
        const double theta = data(r, c);
        const double step = h * std::max(1.0, std::abs(theta));
        data(r, c) = theta + step;
        const double fp = loss_fn().item();
        data(r, c) = theta - step;
        const double fm = loss_fn().item();
        data(r, c) = theta;
        const double central = (fp - fm) / (2.0 * step);
        const double err = std::abs(analytic[i](r, c) - central) / (std::abs(central) + 1e-8);
        worst = std::max(worst, err);
      }
    }
  }
  return worst;
}

}  // namespace nlgp
