#include "nlbac/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace nlbac {

void sgd_step(MlpParams& p, const MlpGrad& g, double lr) {
  if (!same_shape(p, g)) throw std::invalid_argument("sgd_step: shape mismatch");
  for (std::size_t l = 0; l < p.w.size(); ++l) {
    p.w[l] -= lr * g.w[l];
    p.b[l] -= lr * g.b[l];
  }
}

AdamState make_adam_like(const MlpParams& p) {
  AdamState s;
  for (const auto& m : p.w) {
    s.mw.push_back(Eigen::MatrixXd::Zero(m.rows(), m.cols()));
    s.vw.push_back(Eigen::MatrixXd::Zero(m.rows(), m.cols()));
  }
  for (const auto& v : p.b) {
    s.mb.push_back(Eigen::VectorXd::Zero(v.size()));
    s.vb.push_back(Eigen::VectorXd::Zero(v.size()));
  }
  return s;
}

void adam_step(MlpParams& p, const MlpGrad& g, double lr, AdamState& s) {
  if (!same_shape(p, g)) throw std::invalid_argument("adam_step: shape mismatch");
  if (s.mw.size() != p.w.size()) throw std::invalid_argument("adam_step: state mismatch");
  s.step += 1;
  const double bc1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double bc2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  for (std::size_t l = 0; l < p.w.size(); ++l) {
    s.mw[l] = s.beta1 * s.mw[l] + (1.0 - s.beta1) * g.w[l];
    s.vw[l] = s.beta2 * s.vw[l].array() + (1.0 - s.beta2) * g.w[l].array().square();
    p.w[l].array() -= lr * (s.mw[l].array() / bc1) / ((s.vw[l].array() / bc2).sqrt() + s.eps);
    s.mb[l] = s.beta1 * s.mb[l] + (1.0 - s.beta1) * g.b[l];
    s.vb[l] = s.beta2 * s.vb[l].array() + (1.0 - s.beta2) * g.b[l].array().square();
    p.b[l].array() -= lr * (s.mb[l].array() / bc1) / ((s.vb[l].array() / bc2).sqrt() + s.eps);
  }
}

void adam_step_scalar(double& p, double g, double lr, ScalarAdam& s) {
  s.step += 1;
  s.m = s.beta1 * s.m + (1.0 - s.beta1) * g;
  s.v = s.beta2 * s.v + (1.0 - s.beta2) * g * g;
  const double mhat = s.m / (1.0 - std::pow(s.beta1, static_cast<double>(s.step)));
  const double vhat = s.v / (1.0 - std::pow(s.beta2, static_cast<double>(s.step)));
  p -= lr * mhat / (std::sqrt(vhat) + s.eps);
}

void apply_step(MlpParams& p, const MlpGrad& g, double lr, bool adaptive, AdamState* state) {
  if (adaptive) {
    if (!state) throw std::invalid_argument("apply_step: adaptive step needs optimizer state");
    adam_step(p, g, lr, *state);
  } else {
    sgd_step(p, g, lr);
  }
}

}  // namespace nlbac
