#pragma once

#include <Eigen/Dense>

#include <vector>

#include "nlbac/mlp.hpp"

namespace nlbac {

// Plain gradient descent: p -= lr * g.
void sgd_step(MlpParams& p, const MlpGrad& g, double lr);

// Per-parameter adaptive step sizing (Adam with bias correction).
struct AdamState {
  std::vector<Eigen::MatrixXd> mw, vw;
  std::vector<Eigen::VectorXd> mb, vb;
  long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

AdamState make_adam_like(const MlpParams& p);
void adam_step(MlpParams& p, const MlpGrad& g, double lr, AdamState& state);

struct ScalarAdam {
  double m = 0.0, v = 0.0;
  long step = 0;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

void adam_step_scalar(double& p, double g, double lr, ScalarAdam& state);

// Dispatches to sgd_step or adam_step; state may be null when adaptive=false.
void apply_step(MlpParams& p, const MlpGrad& g, double lr, bool adaptive, AdamState* state);

}  // namespace nlbac
