#pragma once

#include <Eigen/Dense>

#include <array>
#include <vector>

#include "nlbac/mlp.hpp"

namespace nlbac {

enum class Scheme { Rk4, Euler };

struct IntegratorConfig {
  Scheme scheme = Scheme::Rk4;
  int substeps = 1;
  double interval = 0.02;  // seconds advanced per integrate() call

  void validate() const;
};

// Controlled vector field dx/dt = f(t, x, u), batched: columns of x and u are
// independent samples, t carries one time per column. The control is treated
// as constant over an integration interval.
class VectorField {
 public:
  virtual ~VectorField() = default;

  virtual int state_dim() const = 0;
  virtual int control_dim() const = 0;

  virtual Eigen::MatrixXd eval(const Eigen::RowVectorXd& t, const Eigen::MatrixXd& x,
                               const Eigen::MatrixXd& u) const = 0;

  // Vector-Jacobian product at one evaluation point: accumulates
  // upstream^T * df/dx into grad_x, upstream^T * df/du into grad_u, and the
  // parameter gradient into param_grad when the field has parameters.
  // Fields without parameters may ignore param_grad; fields that are never
  // differentiated can rely on this default.
  virtual void vjp(const Eigen::RowVectorXd& t, const Eigen::MatrixXd& x,
                   const Eigen::MatrixXd& u, const Eigen::MatrixXd& upstream,
                   Eigen::MatrixXd& grad_x, Eigen::MatrixXd& grad_u,
                   MlpGrad* param_grad) const;
};

// Everything the reverse sweep needs: entry state and stage slopes per substep.
struct IntegrateTape {
  Eigen::RowVectorXd t0;
  Eigen::MatrixXd u;
  std::vector<Eigen::MatrixXd> x_in;                  // substep entry states
  std::vector<std::array<Eigen::MatrixXd, 3>> k;      // rk4 slopes k1..k3
};

// Advances x0 by cfg.interval with cfg.substeps equal steps of the chosen
// scheme. Throws on a non-finite state, naming the substep that produced it.
Eigen::MatrixXd integrate(const VectorField& f, const Eigen::RowVectorXd& t0,
                          const Eigen::MatrixXd& x0, const Eigen::MatrixXd& u,
                          const IntegratorConfig& cfg, IntegrateTape* tape = nullptr);

// Single-sample convenience.
Eigen::VectorXd integrate(const VectorField& f, double t0, const Eigen::VectorXd& x0,
                          const Eigen::VectorXd& u, const IntegratorConfig& cfg);

// Reverse sweep over a recorded forward pass. upstream is d(loss)/d(x_end).
// Accumulates into grad_x0 / grad_u / param_grad when non-null; grad_x0 and
// grad_u must be zero-initialized (or carry gradients to accumulate onto).
void integrate_vjp(const VectorField& f, const IntegratorConfig& cfg,
                   const IntegrateTape& tape, const Eigen::MatrixXd& upstream,
                   Eigen::MatrixXd* grad_x0, Eigen::MatrixXd* grad_u,
                   MlpGrad* param_grad);

}  // namespace nlbac
