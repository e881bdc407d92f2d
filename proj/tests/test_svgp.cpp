#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>

#include "nlgp/rng.hpp"
#include "nlgp/svgp.hpp"

using namespace nlgp;
using ad::Value;

namespace {

svgp::SvgpUnit toy_unit(Rng& rng, Eigen::Index m, Eigen::Index d, bool constant_mean = true,
                        const std::string& name = "u") {
  kernels::Kernel k;
  k.rbf = kernels::RbfKernel::create(name + ".k", d, true);
  auto mean = constant_mean ? kernels::MeanFunction::trainable_constant(name + ".mean", 0.3)
                            : kernels::MeanFunction::zero();
  return svgp::make_unit(name, k, mean, rng.normal_matrix(m, d));
}

// set q(u) to the prior N(m(Z), K_ZZ + jitter I)
void set_to_prior(svgp::SvgpUnit& u) {
  Eigen::MatrixXd kzz = u.kernel.gram(u.z->raw, u.z->raw, true).data();
  kzz.diagonal().array() += u.jitter;
  Eigen::MatrixXd l = gauss::cholesky_jittered(kzz, u.jitter).factor;
  const Eigen::Index m = u.n_inducing();
  double mean_const = u.mean_fn.constant ? u.mean_fn.value->raw.data()(0, 0) : 0.0;
  u.qu_mean->raw.mutable_data() = Eigen::MatrixXd::Constant(m, 1, mean_const);
  Eigen::MatrixXd raw = l;
  raw.diagonal() = l.diagonal().array().log();
  u.qu_chol->raw.mutable_data() = raw;
}

}  // namespace

TEST_CASE("prior consistency") {
  Rng rng(11);
  auto u = toy_unit(rng, 12, 2);
  set_to_prior(u);
  Eigen::MatrixXd x = rng.normal_matrix(7, 2);
  auto [mean, var] = svgp::predict_marginals(u, Value::constant(x));
  for (int i = 0; i < 7; ++i) {
    REQUIRE(std::abs(mean.data()(i, 0) - 0.3) < 1e-10);
    REQUIRE(std::abs(var.data()(i, 0) - 1.0) < 1e-9);  // prior k(x,x) = 1
  }
  Value kl = svgp::kl_inducing(u);
  REQUIRE(std::abs(kl.item()) < 1e-10);
}

TEST_CASE("interpolation limit at an inducing point") {
  Rng rng(13);
  auto u = toy_unit(rng, 5, 1, false);
  // point mass at value v on the first inducing point, vanishing elsewhere
  u.qu_chol->raw.mutable_data().setZero();
  u.qu_chol->raw.mutable_data().diagonal().array() = std::log(1e-8);
  u.qu_mean->raw.mutable_data().setZero();
  u.qu_mean->raw.mutable_data()(0, 0) = 1.4;
  Eigen::MatrixXd x = u.z->raw.data().row(0);
  auto [mean, var] = svgp::predict_marginals(u, Value::constant(x));
  // jitter keeps this from being exact; the limit is approached
  REQUIRE(mean.data()(0, 0) == Catch::Approx(1.4).margin(2e-4));
  REQUIRE(var.data()(0, 0) < 1e-4);
}

TEST_CASE("marginals match a dense Gaussian conditioning oracle") {
  Rng rng(17);
  auto u = toy_unit(rng, 6, 1);
  // a non-trivial q(u)
  Eigen::MatrixXd qraw = 0.3 * rng.normal_matrix(6, 6);
  qraw.diagonal().array() = -1.0 + 0.2 * rng.normal();
  u.qu_chol->raw.mutable_data() = qraw;
  u.qu_mean->raw.mutable_data() = rng.normal_matrix(6, 1);

  Eigen::MatrixXd x = rng.normal_matrix(5, 1);
  auto [mean, var] = svgp::predict_marginals(u, Value::constant(x));

  // oracle: dense formulas with explicit inverses
  Eigen::MatrixXd kzz = u.kernel.gram(u.z->raw, u.z->raw, true).data();
  kzz.diagonal().array() += u.jitter;  // the prior includes the base jitter
  Eigen::MatrixXd kxz = u.kernel.gram(Value::constant(x), u.z->raw, false).data();
  Eigen::MatrixXd kzz_inv = kzz.inverse();
  Eigen::MatrixXd lu = u.qu_chol->view().data();
  Eigen::MatrixXd s = lu * lu.transpose();
  Eigen::VectorXd mz = Eigen::VectorXd::Constant(6, 0.3);
  Eigen::VectorXd mx = Eigen::VectorXd::Constant(5, 0.3);
  Eigen::VectorXd mean_oracle =
      mx + kxz * kzz_inv * (u.qu_mean->raw.data() - mz);
  Eigen::MatrixXd cov_oracle = -kxz * kzz_inv * kxz.transpose() +
                               kxz * kzz_inv * s * kzz_inv * kxz.transpose();
  for (int i = 0; i < 5; ++i) {
    REQUIRE(mean.data()(i, 0) == Catch::Approx(mean_oracle(i)).margin(1e-9));
    REQUIRE(var.data()(i, 0) == Catch::Approx(1.0 + cov_oracle(i, i)).margin(1e-9));
  }
}

TEST_CASE("posterior variance never exceeds the prior when S is below the prior") {
  Rng rng(19);
  auto u = toy_unit(rng, 8, 2, false);
  // small diagonal S
  u.qu_chol->raw.mutable_data().setZero();
  u.qu_chol->raw.mutable_data().diagonal().array() = std::log(0.05);
  Eigen::MatrixXd x = rng.normal_matrix(30, 2);
  auto [mean, var] = svgp::predict_marginals(u, Value::constant(x));
  for (int i = 0; i < 30; ++i) REQUIRE(var.data()(i, 0) <= 1.0 + 1e-8);
}

TEST_CASE("kl_inducing") {
  Rng rng(23);
  auto u = toy_unit(rng, 5, 2);
  SECTION("prior gives zero") {
    set_to_prior(u);
    REQUIRE(std::abs(svgp::kl_inducing(u).item()) < 1e-10);
  }
  SECTION("mean shift along a unit-eigenvalue direction") {
    // with K = I (inducing points far apart, unit signal), a mean shift of
    // delta gives KL = delta^2 / 2
    kernels::Kernel k;
    k.rbf = kernels::RbfKernel::create("far.k", 1, true);
    Eigen::MatrixXd z(3, 1);
    z << 0.0, 100.0, 200.0;
    auto far = svgp::make_unit("far", k, kernels::MeanFunction::zero(), z);
    set_to_prior(far);
    far.qu_mean->raw.mutable_data()(1, 0) += 0.7;
    double kl = svgp::kl_inducing(far).item();
    REQUIRE(kl == Catch::Approx(0.7 * 0.7 / 2).epsilon(1e-4));
  }
  SECTION("matches the plain kl_full oracle") {
    Eigen::MatrixXd qraw = 0.2 * rng.normal_matrix(5, 5);
    qraw.diagonal().array() = -0.7;
    u.qu_chol->raw.mutable_data() = qraw;
    u.qu_mean->raw.mutable_data() = rng.normal_matrix(5, 1);
    Eigen::MatrixXd kzz = u.kernel.gram(u.z->raw, u.z->raw, true).data();
    kzz.diagonal().array() += u.jitter;
    auto jc = gauss::cholesky_jittered(kzz, u.jitter);
    gauss::FullGaussian q{u.qu_mean->raw.data(), u.qu_chol->view().data()};
    gauss::FullGaussian p{Eigen::VectorXd::Constant(5, 0.3), jc.factor};
    REQUIRE(svgp::kl_inducing(u).item() == Catch::Approx(gauss::kl_full(q, p)).epsilon(1e-9));
  }
}

TEST_CASE("sample_marginals") {
  Rng rng(29);
  auto u = toy_unit(rng, 6, 1);
  Eigen::MatrixXd x = rng.normal_matrix(4, 1);
  auto [mean, var] = svgp::predict_marginals(u, Value::constant(x));
  SECTION("zero noise returns the mean") {
    Value s = svgp::sample_marginals(mean, var, Eigen::MatrixXd::Zero(4, 1));
    REQUIRE((s.data() - mean.data()).cwiseAbs().maxCoeff() == 0.0);
  }
  SECTION("zero variance returns the mean regardless of noise") {
    Value zero_var = Value::constant(Eigen::MatrixXd::Zero(4, 1));
    Value s = svgp::sample_marginals(mean, zero_var, Eigen::MatrixXd::Constant(4, 1, 3.0));
    REQUIRE((s.data() - mean.data()).cwiseAbs().maxCoeff() == 0.0);
  }
  SECTION("empirical moments match the marginals") {
    Rng noise_rng(31);
    const int n = 100000;
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(4), acc2 = Eigen::VectorXd::Zero(4);
    for (int s = 0; s < n; ++s) {
      Eigen::MatrixXd e = noise_rng.normal_matrix(4, 1);
      Eigen::MatrixXd draw = svgp::sample_marginals(mean, var, e).data();
      acc += draw.col(0);
      acc2 += draw.col(0).cwiseProduct(draw.col(0));
    }
    for (int i = 0; i < 4; ++i) {
      double m = acc(i) / n;
      double v = acc2(i) / n - m * m;
      double se_mean = std::sqrt(var.data()(i, 0) / n);
      REQUIRE(std::abs(m - mean.data()(i, 0)) < 3 * se_mean + 1e-12);
      double se_var = var.data()(i, 0) * std::sqrt(2.0 / n);
      REQUIRE(std::abs(v - var.data()(i, 0)) < 3 * se_var + 1e-12);
    }
  }
}

TEST_CASE("gradients through marginals pass finite differences") {
  Rng rng(37);
  auto u = toy_unit(rng, 4, 2);
  Eigen::MatrixXd x = rng.normal_matrix(3, 2);
  Eigen::MatrixXd noise = rng.normal_matrix(3, 1);
  auto f = [&] {
    auto [mean, var] = svgp::predict_marginals(u, Value::constant(x));
    Value s = svgp::sample_marginals(mean, var, noise);
    Value kl = svgp::kl_inducing(u);
    return ad::add(ad::sum(ad::square(s)), kl);
  };
  std::vector<ParamPtr> ps;
  u.collect(ps);
  REQUIRE(finite_diff_check(f, ps, 1e-5) < 1e-5);
}

TEST_CASE("bank prediction shares work and stacks marginals") {
  Rng rng(41);
  kernels::Kernel shared;
  shared.rbf = kernels::RbfKernel::create("sh.k", 2, true);
  Eigen::MatrixXd z_init = rng.normal_matrix(5, 2);
  svgp::GpBank bank;
  auto first = svgp::make_unit("b0", shared, kernels::MeanFunction::zero(), z_init);
  auto second = svgp::make_unit("b1", shared, kernels::MeanFunction::zero(), z_init);
  second.z = first.z;  // shared inducing locations
  second.qu_mean->raw.mutable_data() = rng.normal_matrix(5, 1);
  bank.units = {first, second};

  Eigen::MatrixXd x = rng.normal_matrix(6, 2);
  auto m = svgp::predict_bank(bank, Value::constant(x));
  REQUIRE(m.mean.rows() == 6);
  REQUIRE(m.mean.cols() == 2);
  auto [m0, v0] = svgp::predict_marginals(bank.units[0], Value::constant(x));
  auto [m1, v1] = svgp::predict_marginals(bank.units[1], Value::constant(x));
  REQUIRE((m.mean.data().col(0) - m0.data().col(0)).cwiseAbs().maxCoeff() < 1e-14);
  REQUIRE((m.mean.data().col(1) - m1.data().col(0)).cwiseAbs().maxCoeff() < 1e-14);
  REQUIRE((m.var.data().col(1) - v1.data().col(0)).cwiseAbs().maxCoeff() < 1e-14);

  Value kl = svgp::kl_bank(bank);
  double expect = svgp::kl_inducing(bank.units[0]).item() + svgp::kl_inducing(bank.units[1]).item();
  REQUIRE(kl.item() == Catch::Approx(expect).epsilon(1e-12));
}
