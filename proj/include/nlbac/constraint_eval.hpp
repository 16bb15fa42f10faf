#pragma once

#include <Eigen/Dense>

#include <vector>

#include "nlbac/actor_critic.hpp"
#include "nlbac/node_model.hpp"
#include "nlbac/safety_constraints.hpp"

namespace nlbac {

// Differentiable evaluation of the constraint batch statistics as functions
// of the policy parameters: actions are drawn reparameterized from the
// policy, future states are predicted with the learned dynamics (controls
// re-drawn from the policy at each predicted state), and the chained barrier
// and Lyapunov residuals are aggregated with per-sample ReLU.
struct ConstraintForward {
  Eigen::RowVectorXd t;
  std::vector<Eigen::MatrixXd> states;   // depth+1 entries, states[0] = input batch
  std::vector<PolicySample> actions;     // depth entries
  std::vector<IntegrateTape> tapes;      // depth entries
  MlpCache lyap_cache;                   // Lyapunov forward at states[0..1]
  bool has_clf = false;
  ConstraintBatch batch;
  AggregateResult agg;
};

// depth = max constraint degree; needs one policy draw (noise column block in
// xi[k]) and one model integration per level. lyapunov may be null (backup
// case): the CLF row is then identically zero.
void constraint_forward(const PolicyNet& policy, const NodeModel& node,
                        const std::vector<CbfConstraint>& cbfs, const MlpParams* lyapunov,
                        double beta, const Eigen::RowVectorXd& t, const Eigen::MatrixXd& x,
                        const std::vector<Eigen::MatrixXd>& xi, ConstraintForward& out);

// Accumulates d(sum_i f_weights[i] * f_i + g_weight * g)/d(policy params)
// into grad, where f_i and g are the ReLU-aggregated batch means recorded in
// fwd. The model parameters are left untouched.
void constraint_backward(const PolicyNet& policy, const NodeModel& node,
                         const std::vector<CbfConstraint>& cbfs, const MlpParams* lyapunov,
                         const ConstraintForward& fwd, const Eigen::VectorXd& f_weights,
                         double g_weight, MlpGrad& grad);

}  // namespace nlbac
