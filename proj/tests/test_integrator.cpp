#include "doctest.h"

#include <cmath>
#include <random>

#include "fd_util.hpp"
#include "nlbac/integrator.hpp"

using namespace nlbac;

namespace {

// dx/dt = A x + B u, exact flow available for convergence checks.
class LinearField : public VectorField {
 public:
  LinearField(Eigen::MatrixXd A, Eigen::MatrixXd B) : A_(std::move(A)), B_(std::move(B)) {}

  int state_dim() const override { return static_cast<int>(A_.rows()); }
  int control_dim() const override { return static_cast<int>(B_.cols()); }

  Eigen::MatrixXd eval(const Eigen::RowVectorXd&, const Eigen::MatrixXd& x,
                       const Eigen::MatrixXd& u) const override {
    return A_ * x + B_ * u;
  }

  void vjp(const Eigen::RowVectorXd&, const Eigen::MatrixXd&, const Eigen::MatrixXd&,
           const Eigen::MatrixXd& upstream, Eigen::MatrixXd& grad_x,
           Eigen::MatrixXd& grad_u, MlpGrad*) const override {
    grad_x += A_.transpose() * upstream;
    grad_u += B_.transpose() * upstream;
  }

 private:
  Eigen::MatrixXd A_, B_;
};

// dx/dt = -x^3, smooth nonlinearity with a simple analytic Jacobian.
class CubicDecay : public VectorField {
 public:
  int state_dim() const override { return 2; }
  int control_dim() const override { return 1; }

  Eigen::MatrixXd eval(const Eigen::RowVectorXd&, const Eigen::MatrixXd& x,
                       const Eigen::MatrixXd& u) const override {
    Eigen::MatrixXd dx = (-x.array().cube()).matrix();
    dx.row(0) += u.row(0);
    return dx;
  }

  void vjp(const Eigen::RowVectorXd&, const Eigen::MatrixXd& x, const Eigen::MatrixXd&,
           const Eigen::MatrixXd& upstream, Eigen::MatrixXd& grad_x,
           Eigen::MatrixXd& grad_u, MlpGrad*) const override {
    grad_x.array() += upstream.array() * (-3.0 * x.array().square());
    grad_u.row(0) += upstream.row(0);
  }
};

class BlowUp : public VectorField {
 public:
  int state_dim() const override { return 1; }
  int control_dim() const override { return 1; }
  Eigen::MatrixXd eval(const Eigen::RowVectorXd&, const Eigen::MatrixXd& x,
                       const Eigen::MatrixXd&) const override {
    return (x.array() * std::numeric_limits<double>::infinity()).matrix();
  }
};

}  // namespace

TEST_CASE("one rk4 step of dx/dt = -x lands on the fourth-order Taylor value") {
  LinearField f(-Eigen::MatrixXd::Identity(1, 1), Eigen::MatrixXd::Zero(1, 1));
  IntegratorConfig cfg;
  cfg.scheme = Scheme::Rk4;
  cfg.substeps = 1;
  cfg.interval = 0.02;
  Eigen::VectorXd x0(1), u(1);
  x0 << 1.0;
  u << 0.0;
  const Eigen::VectorXd x1 = integrate(f, 0.0, x0, u, cfg);
  // 1 - h + h^2/2 - h^3/6 + h^4/24 at h = 0.02
  CHECK(x1(0) == doctest::Approx(0.9801986733333334).epsilon(1e-15));
}

TEST_CASE("euler step is the literal x + h f(x, u)") {
  LinearField f(-2.0 * Eigen::MatrixXd::Identity(1, 1), Eigen::MatrixXd::Identity(1, 1));
  IntegratorConfig cfg;
  cfg.scheme = Scheme::Euler;
  cfg.substeps = 1;
  cfg.interval = 0.1;
  Eigen::VectorXd x0(1), u(1);
  x0 << 3.0;
  u << 0.5;
  const Eigen::VectorXd x1 = integrate(f, 0.0, x0, u, cfg);
  CHECK(x1(0) == doctest::Approx(3.0 + 0.1 * (-6.0 + 0.5)).epsilon(1e-15));
}

TEST_CASE("substep refinement converges at the scheme order") {
  Eigen::MatrixXd A(2, 2);
  A << 0.0, 1.0, -4.0, -0.4;
  LinearField f(A, Eigen::MatrixXd::Zero(2, 1));
  Eigen::VectorXd x0(2), u(1);
  x0 << 1.0, 0.0;
  u << 0.0;

  auto err_with = [&](Scheme s, int substeps) {
    IntegratorConfig cfg;
    cfg.scheme = s;
    cfg.substeps = substeps;
    cfg.interval = 0.5;
    // reference: 4096 rk4 substeps, far below the coarse-grid error
    IntegratorConfig ref = cfg;
    ref.scheme = Scheme::Rk4;
    ref.substeps = 4096;
    const Eigen::VectorXd truth = integrate(f, 0.0, x0, u, ref);
    const Eigen::VectorXd got = integrate(f, 0.0, x0, u, cfg);
    return (got - truth).norm();
  };

  SUBCASE("rk4 gains about sixteen-fold accuracy per doubling") {
    const double e1 = err_with(Scheme::Rk4, 4);
    const double e2 = err_with(Scheme::Rk4, 8);
    const double e3 = err_with(Scheme::Rk4, 16);
    const double slope = 0.5 * (std::log2(e1 / e2) + std::log2(e2 / e3));
    CHECK(slope > 3.7);
    CHECK(slope < 4.3);
  }
  SUBCASE("euler gains about two-fold accuracy per doubling") {
    const double e1 = err_with(Scheme::Euler, 32);
    const double e2 = err_with(Scheme::Euler, 64);
    const double e3 = err_with(Scheme::Euler, 128);
    const double slope = 0.5 * (std::log2(e1 / e2) + std::log2(e2 / e3));
    CHECK(slope > 0.8);
    CHECK(slope < 1.2);
  }
}

TEST_CASE("batched integrate equals per-column integrate") {
  Eigen::MatrixXd A(2, 2);
  A << 0.0, 1.0, -1.0, -0.3;
  Eigen::MatrixXd B(2, 1);
  B << 0.0, 1.0;
  LinearField f(A, B);
  IntegratorConfig cfg;
  cfg.substeps = 3;
  Eigen::MatrixXd x0(2, 4), u(1, 4);
  x0 << 1.0, -0.5, 0.2, 2.0, 0.0, 0.3, -1.0, 0.7;
  u << 0.1, -0.2, 0.4, 0.0;
  Eigen::RowVectorXd t0(4);
  t0 << 0.0, 1.0, 2.0, 3.0;
  const Eigen::MatrixXd batch = integrate(f, t0, x0, u, cfg);
  for (int c = 0; c < 4; ++c) {
    const Eigen::VectorXd one = integrate(f, t0(c), x0.col(c), u.col(c), cfg);
    CHECK((batch.col(c) - one).lpNorm<Eigen::Infinity>() == 0.0);
  }
}

TEST_CASE("reverse sweep matches finite differences through a nonlinear flow") {
  CubicDecay f;
  IntegratorConfig cfg;
  cfg.substeps = 4;
  cfg.interval = 0.1;
  Eigen::MatrixXd x0(2, 3), u(1, 3);
  x0 << 0.8, -0.4, 1.2, 0.3, 0.9, -0.7;
  u << 0.2, -0.1, 0.5;
  Eigen::RowVectorXd t0 = Eigen::RowVectorXd::Zero(3);
  Eigen::MatrixXd upstream(2, 3);
  upstream << 1.0, -0.3, 0.7, 0.4, 1.1, -0.2;

  for (Scheme s : {Scheme::Rk4, Scheme::Euler}) {
    cfg.scheme = s;
    IntegrateTape tape;
    integrate(f, t0, x0, u, cfg, &tape);
    Eigen::MatrixXd gx = Eigen::MatrixXd::Zero(2, 3);
    Eigen::MatrixXd gu = Eigen::MatrixXd::Zero(1, 3);
    integrate_vjp(f, cfg, tape, upstream, &gx, &gu, nullptr);

    auto value = [&](const Eigen::MatrixXd& xs, const Eigen::MatrixXd& us) {
      return (integrate(f, t0, xs, us, cfg).array() * upstream.array()).sum();
    };
    const double h = 1e-6;
    for (int i = 0; i < x0.size(); ++i) {
      Eigen::MatrixXd xp = x0, xm = x0;
      xp.data()[i] += h;
      xm.data()[i] -= h;
      const double fd = (value(xp, u) - value(xm, u)) / (2.0 * h);
      CHECK(testutil::rel_err(fd, gx.data()[i]) < 1e-6);
    }
    for (int i = 0; i < u.size(); ++i) {
      Eigen::MatrixXd up2 = u, um = u;
      up2.data()[i] += h;
      um.data()[i] -= h;
      const double fd = (value(x0, up2) - value(x0, um)) / (2.0 * h);
      CHECK(testutil::rel_err(fd, gu.data()[i]) < 1e-6);
    }
  }
}

TEST_CASE("reverse sweep of a linear flow reproduces the transposed flow map") {
  // for dx/dt = A x: d(x_end)/d(x0) = exp(A h), so the vjp of upstream is
  // exp(A h)^T upstream; rk4 approximates this to its own order.
  Eigen::MatrixXd A(2, 2);
  A << 0.1, 0.9, -0.9, 0.1;
  LinearField f(A, Eigen::MatrixXd::Zero(2, 1));
  IntegratorConfig cfg;
  cfg.substeps = 64;
  cfg.interval = 0.3;
  Eigen::MatrixXd x0(2, 1), u(1, 1);
  x0 << 0.7, -0.2;
  u << 0.0;
  IntegrateTape tape;
  integrate(f, Eigen::RowVectorXd::Zero(1), x0, u, cfg, &tape);
  Eigen::MatrixXd upstream(2, 1);
  upstream << 1.0, 2.0;
  Eigen::MatrixXd gx = Eigen::MatrixXd::Zero(2, 1);
  Eigen::MatrixXd gu = Eigen::MatrixXd::Zero(1, 1);
  integrate_vjp(f, cfg, tape, upstream, &gx, &gu, nullptr);

  // expm via Taylor series; A h is tiny so this converges fast
  Eigen::MatrixXd Ah = A * cfg.interval;
  Eigen::MatrixXd expm = Eigen::MatrixXd::Identity(2, 2);
  Eigen::MatrixXd term = Eigen::MatrixXd::Identity(2, 2);
  for (int k = 1; k <= 20; ++k) {
    term = term * Ah / k;
    expm += term;
  }
  const Eigen::VectorXd want = expm.transpose() * upstream;
  CHECK((gx - want).lpNorm<Eigen::Infinity>() < 1e-9);
}

TEST_CASE("non-finite states name the substep that produced them") {
  BlowUp f;
  IntegratorConfig cfg;
  cfg.substeps = 2;
  Eigen::VectorXd x0(1), u(1);
  x0 << 1.0;
  u << 0.0;
  CHECK_THROWS_WITH_AS(static_cast<void>(integrate(f, 0.0, x0, u, cfg)),
                       doctest::Contains("substep"), std::runtime_error);
}

TEST_CASE("config validation rejects bad substeps and intervals") {
  IntegratorConfig cfg;
  cfg.substeps = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.substeps = 1;
  cfg.interval = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.interval = 0.02;
  CHECK_NOTHROW(cfg.validate());
}
