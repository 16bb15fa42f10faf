#include "doctest.h"

#include <cmath>
#include <random>

#include "nlbac/car_env.hpp"
#include "nlbac/safety_constraints.hpp"

using namespace nlbac;

namespace {

// literal recursion: phi_0 = h, phi_j(k) = phi_{j-1}(k+1) + (gains[j-1]-1) phi_{j-1}(k)
double phi_recursive(const std::vector<double>& gains, const std::vector<double>& h) {
  std::vector<double> phi = h;
  for (double gam : gains) {
    std::vector<double> next(phi.size() - 1);
    for (std::size_t k = 0; k + 1 < phi.size(); ++k)
      next[k] = phi[k + 1] - phi[k] + gam * phi[k];
    phi = next;
  }
  return phi[0];
}

}  // namespace

TEST_CASE("chain coefficients match hand expansion for two levels") {
  // phi_2(0) = h2 + (g2-1) h1 + (g1-1) h1 + (g1-1)(g2-1) h0
  //          = h2 - 1.6 h1 + 0.64 h0 at g1 = g2 = 0.2
  const Eigen::VectorXd c = phi_chain_coeffs({0.2, 0.2});
  REQUIRE(c.size() == 3);
  CHECK(c(0) == doctest::Approx(0.64).epsilon(1e-15));
  CHECK(c(1) == doctest::Approx(-1.6).epsilon(1e-15));
  CHECK(c(2) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("a single level gives the familiar discrete barrier condition") {
  const Eigen::VectorXd c = phi_chain_coeffs({0.3});
  REQUIRE(c.size() == 2);
  CHECK(c(0) == doctest::Approx(0.3 - 1.0));
  CHECK(c(1) == doctest::Approx(1.0));
}

TEST_CASE("coefficients agree with the literal recursion on random sequences") {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> d;
  for (int trial = 0; trial < 20; ++trial) {
    std::uniform_int_distribution<int> deg(1, 4);
    const int r = deg(rng);
    std::vector<double> gains(r);
    std::uniform_real_distribution<double> g(0.05, 0.95);
    for (auto& gam : gains) gam = g(rng);
    std::vector<double> h(r + 1);
    for (auto& v : h) v = d(rng);

    const Eigen::VectorXd c = phi_chain_coeffs(gains);
    REQUIRE(c.size() == r + 1);
    double lin = 0.0;
    for (int k = 0; k <= r; ++k) lin += c(k) * h[k];
    CHECK(lin == doctest::Approx(phi_recursive(gains, h)).epsilon(1e-12));
  }
}

TEST_CASE("coefficients sum to the product of the gains") {
  // constant h: every difference vanishes, leaving prod(gains) * h
  const Eigen::VectorXd c = phi_chain_coeffs({0.2, 0.2});
  CHECK(c.sum() == doctest::Approx(0.04).epsilon(1e-14));
  const Eigen::VectorXd c3 = phi_chain_coeffs({0.5, 0.25, 0.8});
  CHECK(c3.sum() == doctest::Approx(0.1).epsilon(1e-13));
}

TEST_CASE("gap constraint evaluates the front-rear clearance") {
  const CbfConstraint c = gap_constraint(3, 4, 3.5, {0.2, 0.2});
  CHECK(c.degree() == 2);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(kStateDim);
  x(pos_index(3)) = 40.0;
  x(pos_index(4)) = 30.0;
  CHECK(c.h(x) == doctest::Approx(6.5));
  const Eigen::VectorXd g = c.h_grad(x);
  REQUIRE(g.size() == kStateDim);
  for (int i = 0; i < kStateDim; ++i) {
    if (i == pos_index(3))
      CHECK(g(i) == 1.0);
    else if (i == pos_index(4))
      CHECK(g(i) == -1.0);
    else
      CHECK(g(i) == 0.0);
  }
}

TEST_CASE("scalar and batched chain evaluation agree") {
  const CbfConstraint c = gap_constraint(4, 5, 3.5, {0.3, 0.15});
  std::mt19937_64 rng(23);
  std::normal_distribution<double> d;
  const int B = 5;
  std::vector<Eigen::MatrixXd> level(3, Eigen::MatrixXd(kStateDim, B));
  for (auto& m : level)
    for (int i = 0; i < m.size(); ++i) m.data()[i] = 5.0 * d(rng);
  std::vector<const Eigen::MatrixXd*> ptrs = {&level[0], &level[1], &level[2]};
  const Eigen::RowVectorXd batch = phi_chain_batch(c, ptrs);
  REQUIRE(batch.size() == B);
  for (int col = 0; col < B; ++col) {
    const std::vector<Eigen::VectorXd> seq = {level[0].col(col), level[1].col(col),
                                              level[2].col(col)};
    CHECK(batch(col) == doctest::Approx(phi_chain(c, seq)).epsilon(1e-12));
  }
}

TEST_CASE("chain value equals the coefficient form on the gap barrier") {
  const CbfConstraint c = gap_constraint(3, 4, 3.5, {0.2, 0.2});
  std::mt19937_64 rng(31);
  std::normal_distribution<double> d;
  std::vector<Eigen::VectorXd> seq;
  for (int k = 0; k < 3; ++k) {
    Eigen::VectorXd x(kStateDim);
    for (int i = 0; i < kStateDim; ++i) x(i) = 10.0 * d(rng);
    seq.push_back(x);
  }
  const Eigen::VectorXd coef = phi_chain_coeffs(c.gains);
  double want = 0.0;
  for (int k = 0; k < 3; ++k) want += coef(k) * c.h(seq[k]);
  CHECK(phi_chain(c, seq) == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("lyapunov decrease residual matches a direct forward evaluation") {
  std::mt19937_64 rng(41);
  const MlpParams lyap = init_mlp({kStateDim, 8, 1}, Activation::Tanh,
                                  OutputActivation::Softplus, rng);
  std::normal_distribution<double> d;
  Eigen::VectorXd x(kStateDim), xn(kStateDim);
  for (int i = 0; i < kStateDim; ++i) {
    x(i) = d(rng);
    xn(i) = d(rng);
  }
  const double beta = 0.1;
  const double want =
      mlp_forward(lyap, xn)(0, 0) - mlp_forward(lyap, x)(0, 0) + beta * mlp_forward(lyap, x)(0, 0);
  CHECK(clf_residual(lyap, x, xn, beta) == doctest::Approx(want).epsilon(1e-13));

  Eigen::MatrixXd X(kStateDim, 4), XN(kStateDim, 4);
  for (int i = 0; i < X.size(); ++i) {
    X.data()[i] = d(rng);
    XN.data()[i] = d(rng);
  }
  const Eigen::RowVectorXd batch = clf_residual_batch(lyap, X, XN, beta);
  for (int col = 0; col < 4; ++col)
    CHECK(batch(col) == doctest::Approx(clf_residual(lyap, X.col(col), XN.col(col), beta))
                            .epsilon(1e-13));
}

TEST_CASE("aggregate keeps only the violated part of each residual") {
  ConstraintBatch b;
  b.cbf.resize(2, 4);
  b.cbf << 1.0, -2.0, 3.0, -4.0,   // relu mean = (1 + 0 + 3 + 0)/4 = 1
      -1.0, -1.0, -1.0, -1.0;      // fully satisfied
  b.clf.resize(4);
  b.clf << 0.5, -0.5, 1.5, 0.0;    // relu mean = 0.5
  const AggregateResult r = aggregate(b);
  REQUIRE(r.f.size() == 2);
  CHECK(r.f(0) == doctest::Approx(1.0));
  CHECK(r.f(1) == doctest::Approx(0.0));
  CHECK(r.g == doctest::Approx(0.5));
  CHECK(r.f_raw(0) == doctest::Approx(-0.5));
  CHECK(r.f_raw(1) == doctest::Approx(-1.0));
  CHECK(r.g_raw == doctest::Approx(0.375));
}

TEST_CASE("constraint validation rejects empty or non-positive gains") {
  CbfConstraint c = gap_constraint(3, 4, 3.5, {0.2});
  CHECK_NOTHROW(c.validate());
  c.gains.clear();
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c.gains = {0.2, 0.0};
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c.gains = {0.2, 1.5};
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}
