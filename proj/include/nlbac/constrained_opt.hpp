#pragma once

#include <Eigen/Dense>

#include <vector>

#include "nlbac/mlp.hpp"

namespace nlbac {

// Dual variables and penalty coefficients of the two augmented Lagrangians:
// the primary controller carries one multiplier per barrier constraint plus
// zeta for the Lyapunov decrease condition; the backup controller carries
// barrier multipliers only.
struct MultiplierState {
  Eigen::VectorXd lambda_p;
  double zeta = 0.0;
  Eigen::VectorXd lambda_b;
  double c_p = 1.0;
  double c_b = 1.0;
  double rho_c = 1.0002;  // per-step geometric growth of the penalty
  double c_max = 1e3;     // growth cap

  void validate() const;
};

MultiplierState make_multipliers(int num_constraints, double lambda_init, double zeta_init,
                                 double c_p_init, double c_b_init, double rho_c, double c_max);

// Eliminates the squared slack of an inequality term in closed form:
// returns f + z*^2 with z*^2 = max(0, -lambda/c - f), i.e. max(f, -lambda/c).
double slack_reduce(double f, double lambda, double c);

// Value of lambda * F + (c/2) F^2 at the reduced slack.
double penalty_term(double f, double lambda, double c);

// d(penalty_term)/df, which is max(0, lambda + c f): the weight multiplying
// the constraint gradient in the Lagrangian gradient.
double penalty_weight(double f, double lambda, double c);

struct LagrangianValue {
  double value = 0.0;
  Eigen::VectorXd f_weights;  // weight per barrier constraint
  double g_weight = 0.0;      // weight on the Lyapunov term (primary only)
};

// L_p = neg_v + sum_i [lambda_i F_i + c_p/2 F_i^2] + zeta G + c_p/2 G^2.
LagrangianValue primary_lagrangian_terms(double neg_v, const Eigen::VectorXd& f, double g,
                                         const MultiplierState& ms);

// L_b = neg_v + sum_i [lambda_b_i F_i + c_b/2 F_i^2].
LagrangianValue backup_lagrangian_terms(double neg_v, const Eigen::VectorXd& f_b,
                                        const MultiplierState& ms);

// Full scalar-plus-gradient form: combines the objective gradient with the
// supplied per-constraint gradients using the penalty weights.
double primary_lagrangian(double neg_v, const MlpGrad& neg_v_grad, const Eigen::VectorXd& f,
                          const std::vector<MlpGrad>& f_grads, double g, const MlpGrad& g_grad,
                          const MultiplierState& ms, MlpGrad& out_grad);
double backup_lagrangian(double neg_v, const MlpGrad& neg_v_grad, const Eigen::VectorXd& f_b,
                         const std::vector<MlpGrad>& f_grads, const MultiplierState& ms,
                         MlpGrad& out_grad);

// Dual ascent: lambda <- max(0, lambda + c f), zeta <- max(0, zeta + c_p g).
void update_primary_multipliers(MultiplierState& ms, const Eigen::VectorXd& f, double g);
void update_backup_multipliers(MultiplierState& ms, const Eigen::VectorXd& f_b);

// c <- min(rho_c * c, c_max).
void grow_primary_penalty(MultiplierState& ms);
void grow_backup_penalty(MultiplierState& ms);

}  // namespace nlbac
