#pragma once

#include <Eigen/Dense>

#include <functional>
#include <vector>

#include "nlbac/mlp.hpp"

namespace nlbac {

// One barrier function h(x) >= 0 with its gradient and the per-level slopes
// of the linear class-K functions used in the chained condition. The chain
// has one level per slope; level j uses kappa_j(s) = gains[j-1] * s.
struct CbfConstraint {
  std::function<double(const Eigen::VectorXd&)> h;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> h_grad;
  std::vector<double> gains;

  int degree() const { return static_cast<int>(gains.size()); }
  void validate() const;
};

// Barrier on the gap between two cars: h = p_front - p_rear - delta, for the
// flattened (p, v) state layout of car_env.
CbfConstraint gap_constraint(int front_car, int rear_car, double delta,
                             std::vector<double> gains);

// The chained condition phi_r built from
//   phi_0(x_k)  = h(x_k)
//   phi_j(x_k)  = phi_{j-1}(x_{k+1}) - phi_{j-1}(x_k) + gains[j-1] * phi_{j-1}(x_k)
// is, for linear class-K functions, an exact linear combination of
// h(x_k) ... h(x_{k+r}); this returns those r+1 coefficients.
Eigen::VectorXd phi_chain_coeffs(const std::vector<double>& gains);

// Evaluates phi_r at the first state of the sequence; states must hold
// exactly degree()+1 entries (current state followed by predictions).
double phi_chain(const CbfConstraint& c, const std::vector<Eigen::VectorXd>& states);

// Batched evaluation over state matrices (columns are samples).
Eigen::RowVectorXd phi_chain_batch(const CbfConstraint& c,
                                   const std::vector<const Eigen::MatrixXd*>& states);

// Expected one-step decrease condition on the candidate Lyapunov function:
// residual = L(x_next) - L(x) + beta * L(x); non-positive when satisfied.
double clf_residual(const MlpParams& lyapunov, const Eigen::VectorXd& x,
                    const Eigen::VectorXd& x_next, double beta);
Eigen::RowVectorXd clf_residual_batch(const MlpParams& lyapunov, const Eigen::MatrixXd& x,
                                      const Eigen::MatrixXd& x_next, double beta);

// Per-sample signed constraint residuals for one minibatch: row i of cbf is
// -phi_r for constraint i (positive = violated), clf is the decrease residual.
struct ConstraintBatch {
  Eigen::MatrixXd cbf;
  Eigen::RowVectorXd clf;
};

// Batch statistics fed to the augmented Lagrangian: per-constraint mean of
// ReLU(residual), plus the raw signed means for diagnostics.
struct AggregateResult {
  Eigen::VectorXd f;       // mean ReLU of each cbf row
  double g = 0.0;          // mean ReLU of the clf row
  Eigen::VectorXd f_raw;   // signed means
  double g_raw = 0.0;
};

AggregateResult aggregate(const ConstraintBatch& batch);

}  // namespace nlbac
