#include "nlbac/constrained_opt.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace nlbac {

void MultiplierState::validate() const {
  if ((lambda_p.array() < 0.0).any() || (lambda_b.array() < 0.0).any() || zeta < 0.0)
    throw std::invalid_argument("multipliers: must be non-negative");
  if (!(c_p > 0.0) || !(c_b > 0.0))
    throw std::invalid_argument("multipliers: penalty coefficients must be positive");
  if (!(rho_c > 1.0))
    throw std::invalid_argument("multipliers: rho_c must exceed 1");
  if (!(c_max >= c_p) || !(c_max >= c_b))
    throw std::invalid_argument("multipliers: c_max must be at least the initial penalty");
}

MultiplierState make_multipliers(int num_constraints, double lambda_init, double zeta_init,
                                 double c_p_init, double c_b_init, double rho_c, double c_max) {
  MultiplierState ms;
  ms.lambda_p = Eigen::VectorXd::Constant(num_constraints, lambda_init);
  ms.lambda_b = Eigen::VectorXd::Constant(num_constraints, lambda_init);
  ms.zeta = zeta_init;
  ms.c_p = c_p_init;
  ms.c_b = c_b_init;
  ms.rho_c = rho_c;
  ms.c_max = c_max;
  ms.validate();
  return ms;
}

double slack_reduce(double f, double lambda, double c) {
  if (!(c > 0.0)) throw std::invalid_argument("slack_reduce: c must be positive");
  return std::max(f, -lambda / c);
}

double penalty_term(double f, double lambda, double c) {
  const double F = slack_reduce(f, lambda, c);
  return lambda * F + 0.5 * c * F * F;
}

double penalty_weight(double f, double lambda, double c) {
  if (!(c > 0.0)) throw std::invalid_argument("penalty_weight: c must be positive");
  return std::max(0.0, lambda + c * f);
}

LagrangianValue primary_lagrangian_terms(double neg_v, const Eigen::VectorXd& f, double g,
                                         const MultiplierState& ms) {
  if (f.size() != ms.lambda_p.size())
    throw std::invalid_argument("primary lagrangian: constraint count mismatch");
  LagrangianValue out;
  out.value = neg_v;
  out.f_weights.resize(f.size());
  for (Eigen::Index i = 0; i < f.size(); ++i) {
    out.value += penalty_term(f(i), ms.lambda_p(i), ms.c_p);
    out.f_weights(i) = penalty_weight(f(i), ms.lambda_p(i), ms.c_p);
  }
  out.value += penalty_term(g, ms.zeta, ms.c_p);
  out.g_weight = penalty_weight(g, ms.zeta, ms.c_p);
  return out;
}

LagrangianValue backup_lagrangian_terms(double neg_v, const Eigen::VectorXd& f_b,
                                        const MultiplierState& ms) {
  if (f_b.size() != ms.lambda_b.size())
    throw std::invalid_argument("backup lagrangian: constraint count mismatch");
  LagrangianValue out;
  out.value = neg_v;
  out.f_weights.resize(f_b.size());
  for (Eigen::Index i = 0; i < f_b.size(); ++i) {
    out.value += penalty_term(f_b(i), ms.lambda_b(i), ms.c_b);
    out.f_weights(i) = penalty_weight(f_b(i), ms.lambda_b(i), ms.c_b);
  }
  out.g_weight = 0.0;
  return out;
}

double primary_lagrangian(double neg_v, const MlpGrad& neg_v_grad, const Eigen::VectorXd& f,
                          const std::vector<MlpGrad>& f_grads, double g, const MlpGrad& g_grad,
                          const MultiplierState& ms, MlpGrad& out_grad) {
  if (static_cast<Eigen::Index>(f_grads.size()) != f.size())
    throw std::invalid_argument("primary lagrangian: gradient count mismatch");
  const LagrangianValue terms = primary_lagrangian_terms(neg_v, f, g, ms);
  out_grad.add_scaled(neg_v_grad, 1.0);
  for (Eigen::Index i = 0; i < f.size(); ++i)
    out_grad.add_scaled(f_grads[i], terms.f_weights(i));
  out_grad.add_scaled(g_grad, terms.g_weight);
  return terms.value;
}

double backup_lagrangian(double neg_v, const MlpGrad& neg_v_grad, const Eigen::VectorXd& f_b,
                         const std::vector<MlpGrad>& f_grads, const MultiplierState& ms,
                         MlpGrad& out_grad) {
  if (static_cast<Eigen::Index>(f_grads.size()) != f_b.size())
    throw std::invalid_argument("backup lagrangian: gradient count mismatch");
  const LagrangianValue terms = backup_lagrangian_terms(neg_v, f_b, ms);
  out_grad.add_scaled(neg_v_grad, 1.0);
  for (Eigen::Index i = 0; i < f_b.size(); ++i)
    out_grad.add_scaled(f_grads[i], terms.f_weights(i));
  return terms.value;
}

void update_primary_multipliers(MultiplierState& ms, const Eigen::VectorXd& f, double g) {
  if (f.size() != ms.lambda_p.size())
    throw std::invalid_argument("multiplier update: constraint count mismatch");
  for (Eigen::Index i = 0; i < f.size(); ++i)
    ms.lambda_p(i) = std::max(0.0, ms.lambda_p(i) + ms.c_p * f(i));
  ms.zeta = std::max(0.0, ms.zeta + ms.c_p * g);
}

void update_backup_multipliers(MultiplierState& ms, const Eigen::VectorXd& f_b) {
  if (f_b.size() != ms.lambda_b.size())
    throw std::invalid_argument("multiplier update: constraint count mismatch");
  for (Eigen::Index i = 0; i < f_b.size(); ++i)
    ms.lambda_b(i) = std::max(0.0, ms.lambda_b(i) + ms.c_b * f_b(i));
}

void grow_primary_penalty(MultiplierState& ms) { ms.c_p = std::min(ms.c_p * ms.rho_c, ms.c_max); }
void grow_backup_penalty(MultiplierState& ms) { ms.c_b = std::min(ms.c_b * ms.rho_c, ms.c_max); }

}  // namespace nlbac
