#include "doctest.h"

#include <random>

#include "nlbac/constrained_opt.hpp"

using namespace nlbac;

namespace {

MlpGrad grad_const(double v) {
  MlpGrad g;
  g.w.push_back(Eigen::MatrixXd::Constant(2, 2, v));
  g.b.push_back(Eigen::VectorXd::Constant(2, v));
  return g;
}

}  // namespace

TEST_CASE("slack elimination floors the residual at -lambda/c") {
  CHECK(slack_reduce(2.0, 1.0, 4.0) == 2.0);
  CHECK(slack_reduce(-3.0, 1.0, 4.0) == doctest::Approx(-0.25));
  CHECK(slack_reduce(-0.1, 1.0, 4.0) == doctest::Approx(-0.1));  // above the floor
  CHECK(slack_reduce(-5.0, 0.0, 2.0) == 0.0);                    // zero multiplier
  CHECK_THROWS_AS(slack_reduce(1.0, 1.0, 0.0), std::invalid_argument);
}

TEST_CASE("penalty value and weight follow the quadratic form") {
  // active region: lambda f + c/2 f^2
  CHECK(penalty_term(2.0, 1.0, 4.0) == doctest::Approx(1.0 * 2.0 + 2.0 * 4.0));
  CHECK(penalty_weight(2.0, 1.0, 4.0) == doctest::Approx(9.0));
  // slack-dominated region: the value saturates at -lambda^2 / (2c)
  CHECK(penalty_term(-3.0, 1.0, 4.0) == doctest::Approx(-0.125));
  CHECK(penalty_weight(-3.0, 1.0, 4.0) == 0.0);
  // a feasible residual still inside the active region keeps its gradient
  CHECK(penalty_term(-0.1, 1.0, 4.0) == doctest::Approx(-0.1 + 2.0 * 0.01));
  CHECK(penalty_weight(-0.1, 1.0, 4.0) == doctest::Approx(0.6));
}

TEST_CASE("penalty weight is the derivative of the penalty value") {
  const double h = 1e-7;
  for (double f : {-2.0, -0.3, 0.0, 0.4, 1.7}) {
    for (double lambda : {0.0, 0.5, 2.0}) {
      const double c = 3.0;
      if (std::abs(lambda + c * f) < 1e-3) continue;  // skip the kink itself
      const double fd = (penalty_term(f + h, lambda, c) - penalty_term(f - h, lambda, c)) /
                        (2.0 * h);
      CHECK(fd == doctest::Approx(penalty_weight(f, lambda, c)).epsilon(1e-5));
    }
  }
}

TEST_CASE("primary lagrangian assembles objective, barriers, and decrease term") {
  MultiplierState ms = make_multipliers(2, 0.5, 0.25, 2.0, 1.0, 1.001, 100.0);
  Eigen::VectorXd f(2);
  f << 0.3, -4.0;  // second constraint deep in the slack region
  const double g = 0.1;
  const double neg_v = -1.5;
  const LagrangianValue lv = primary_lagrangian_terms(neg_v, f, g, ms);
  const double want = neg_v + (0.5 * 0.3 + 1.0 * 0.09) + (-0.5 * 0.5 / (2.0 * 2.0)) +
                      (0.25 * 0.1 + 1.0 * 0.01);
  CHECK(lv.value == doctest::Approx(want).epsilon(1e-12));
  CHECK(lv.f_weights(0) == doctest::Approx(0.5 + 2.0 * 0.3));
  CHECK(lv.f_weights(1) == 0.0);
  CHECK(lv.g_weight == doctest::Approx(0.25 + 2.0 * 0.1));

  // full form: gradient is the weighted sum of the pieces
  MlpGrad out = grad_const(0.0);
  const double value = primary_lagrangian(neg_v, grad_const(1.0), f,
                                          {grad_const(2.0), grad_const(3.0)}, g,
                                          grad_const(5.0), ms, out);
  CHECK(value == doctest::Approx(lv.value));
  const double expected = 1.0 + lv.f_weights(0) * 2.0 + lv.f_weights(1) * 3.0 + lv.g_weight * 5.0;
  CHECK(out.w[0](1, 1) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(out.b[0](0) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("backup lagrangian ignores the decrease term and uses its own penalty") {
  MultiplierState ms = make_multipliers(2, 0.0, 0.0, 2.0, 4.0, 1.001, 100.0);
  ms.lambda_b << 1.0, 0.5;
  Eigen::VectorXd f(2);
  f << 0.5, -1.0;
  const LagrangianValue lv = backup_lagrangian_terms(-2.0, f, ms);
  // first term active with c_b = 4: 1*0.5 + 2*0.25; second floored at -1/8
  CHECK(lv.value == doctest::Approx(-2.0 + 0.5 + 0.5 - 0.5 * 0.5 * 0.25 / 2.0).epsilon(1e-12));
  CHECK(lv.f_weights(0) == doctest::Approx(3.0));
  CHECK(lv.f_weights(1) == 0.0);
  CHECK(lv.g_weight == 0.0);

  MlpGrad out = grad_const(0.0);
  const double value =
      backup_lagrangian(-2.0, grad_const(1.0), f, {grad_const(1.0), grad_const(1.0)}, ms, out);
  CHECK(value == doctest::Approx(lv.value));
  CHECK(out.w[0](0, 0) == doctest::Approx(1.0 + 3.0).epsilon(1e-12));
}

TEST_CASE("dual ascent clamps multipliers at zero") {
  MultiplierState ms = make_multipliers(2, 1.0, 0.5, 2.0, 3.0, 1.01, 50.0);
  Eigen::VectorXd f(2);
  f << 0.25, -10.0;
  update_primary_multipliers(ms, f, -5.0);
  CHECK(ms.lambda_p(0) == doctest::Approx(1.0 + 2.0 * 0.25));
  CHECK(ms.lambda_p(1) == 0.0);
  CHECK(ms.zeta == 0.0);
  CHECK(ms.lambda_b(0) == 1.0);  // untouched by the primary update

  update_backup_multipliers(ms, f);
  CHECK(ms.lambda_b(0) == doctest::Approx(1.0 + 3.0 * 0.25));
  CHECK(ms.lambda_b(1) == 0.0);
}

TEST_CASE("penalty growth is geometric and capped") {
  MultiplierState ms = make_multipliers(1, 0.0, 0.0, 1.0, 1.0, 2.0, 10.0);
  grow_primary_penalty(ms);
  CHECK(ms.c_p == 2.0);
  grow_primary_penalty(ms);
  CHECK(ms.c_p == 4.0);
  for (int k = 0; k < 10; ++k) grow_primary_penalty(ms);
  CHECK(ms.c_p == 10.0);
  CHECK(ms.c_b == 1.0);  // untouched
  for (int k = 0; k < 8; ++k) grow_backup_penalty(ms);
  CHECK(ms.c_b == 10.0);
}

TEST_CASE("validation guards the multiplier state invariants") {
  CHECK_THROWS_AS(make_multipliers(1, -0.5, 0.0, 1.0, 1.0, 1.01, 10.0), std::invalid_argument);
  CHECK_THROWS_AS(make_multipliers(1, 0.0, -0.1, 1.0, 1.0, 1.01, 10.0), std::invalid_argument);
  CHECK_THROWS_AS(make_multipliers(1, 0.0, 0.0, 0.0, 1.0, 1.01, 10.0), std::invalid_argument);
  CHECK_THROWS_AS(make_multipliers(1, 0.0, 0.0, 1.0, 1.0, 1.0, 10.0), std::invalid_argument);
  CHECK_THROWS_AS(make_multipliers(1, 0.0, 0.0, 5.0, 1.0, 1.01, 2.0), std::invalid_argument);
  CHECK_NOTHROW(make_multipliers(3, 0.0, 0.0, 1.0, 1.0, 1.0002, 1000.0));

  MultiplierState ms = make_multipliers(2, 0.0, 0.0, 1.0, 1.0, 1.01, 10.0);
  Eigen::VectorXd wrong(3);
  wrong.setZero();
  CHECK_THROWS_AS(update_primary_multipliers(ms, wrong, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(static_cast<void>(primary_lagrangian_terms(0.0, wrong, 0.0, ms)),
                  std::invalid_argument);
}
