#pragma once

#include <Eigen/Dense>

#include <random>
#include <vector>

#include "nlbac/integrator.hpp"
#include "nlbac/mlp.hpp"
#include "nlbac/optimizer.hpp"

namespace nlbac {

// Learned continuous-time dynamics: dx/dt = net(t, x, u), advanced one
// environment interval at a time with the control held constant. The network
// input is the stacked vector (t, x, u); a fixed affine conditioning of that
// input (fitted once on collected data) keeps the first layer well scaled.
struct NodeModel {
  MlpParams net;
  IntegratorConfig integrator;
  int state_dim = 0;
  int control_dim = 0;
  Eigen::VectorXd in_shift;  // length 1 + state_dim + control_dim
  Eigen::VectorXd in_scale;  // reciprocal spread, same length

  int input_dim() const { return 1 + state_dim + control_dim; }
};

NodeModel make_node_model(int state_dim, int control_dim,
                          const std::vector<int>& hidden,
                          const IntegratorConfig& integrator, std::mt19937_64& rng);

// Sets in_shift / in_scale from the mean and standard deviation of the given
// samples (columns). Spreads below a small floor are clamped.
void fit_input_conditioning(NodeModel& m, const Eigen::RowVectorXd& times,
                            const Eigen::MatrixXd& states, const Eigen::MatrixXd& controls);

// Adapter exposing the model as a differentiable vector field.
class NodeField : public VectorField {
 public:
  explicit NodeField(const NodeModel& m) : m_(m) {}

  int state_dim() const override { return m_.state_dim; }
  int control_dim() const override { return m_.control_dim; }

  Eigen::MatrixXd eval(const Eigen::RowVectorXd& t, const Eigen::MatrixXd& x,
                       const Eigen::MatrixXd& u) const override;

  void vjp(const Eigen::RowVectorXd& t, const Eigen::MatrixXd& x,
           const Eigen::MatrixXd& u, const Eigen::MatrixXd& upstream,
           Eigen::MatrixXd& grad_x, Eigen::MatrixXd& grad_u,
           MlpGrad* param_grad) const override;

 private:
  Eigen::MatrixXd assemble_input(const Eigen::RowVectorXd& t, const Eigen::MatrixXd& x,
                                 const Eigen::MatrixXd& u) const;
  const NodeModel& m_;
};

// A batch of length-h windows sliced from recorded trajectories: states holds
// h+1 snapshots, controls the h controls applied between them, t0 the time of
// the first snapshot per window. Consecutive snapshots are one environment
// interval apart.
struct TrajectoryBatch {
  Eigen::RowVectorXd t0;
  std::vector<Eigen::MatrixXd> states;
  std::vector<Eigen::MatrixXd> controls;

  int horizon() const { return static_cast<int>(controls.size()); }
  Eigen::Index batch() const { return t0.cols(); }
  void validate(int state_dim, int control_dim) const;
};

// One-interval prediction from (t, x) under constant control u.
Eigen::VectorXd predict_next(const NodeModel& m, double t, const Eigen::VectorXd& x,
                             const Eigen::VectorXd& u);
Eigen::MatrixXd predict_next_batch(const NodeModel& m, const Eigen::RowVectorXd& t,
                                   const Eigen::MatrixXd& x, const Eigen::MatrixXd& u,
                                   IntegrateTape* tape = nullptr);

// Open-loop rollout: returns the predicted states after each control.
std::vector<Eigen::VectorXd> rollout(const NodeModel& m, double t0, const Eigen::VectorXd& x0,
                                     const std::vector<Eigen::VectorXd>& controls);

// Mean (over horizon and batch) of the per-step error between recorded and
// predicted states, predictions chained open loop from the first snapshot.
// Default is the summed absolute error (L1); squared = true sums squares
// instead, which weights large residuals harder during training.
double model_loss(const NodeModel& m, const TrajectoryBatch& batch, bool squared = false);

// Same loss, also accumulating d(loss)/d(net params) into grad.
double model_loss_grad(const NodeModel& m, const TrajectoryBatch& batch, MlpGrad& grad,
                       bool squared = false);

// One descent step on the model loss; lr = 0 leaves parameters unchanged.
// Passes through Adam state when given (adaptive step sizing), otherwise
// takes a plain gradient step.
double node_train_step(NodeModel& m, const TrajectoryBatch& batch, double lr,
                       AdamState* adam = nullptr, bool squared = false);

}  // namespace nlbac
