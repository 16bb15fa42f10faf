#include "nlbac/node_model.hpp"

#include <cmath>
#include <stdexcept>

namespace nlbac {

NodeModel make_node_model(int state_dim, int control_dim,
                          const std::vector<int>& hidden,
                          const IntegratorConfig& integrator, std::mt19937_64& rng) {
  if (state_dim <= 0 || control_dim <= 0)
    throw std::invalid_argument("make_node_model: dimensions must be positive");
  integrator.validate();
  NodeModel m;
  m.state_dim = state_dim;
  m.control_dim = control_dim;
  m.integrator = integrator;
  std::vector<int> sizes;
  sizes.push_back(1 + state_dim + control_dim);
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(state_dim);
  m.net = init_mlp(sizes, Activation::Tanh, OutputActivation::Identity, rng);
  m.in_shift = Eigen::VectorXd::Zero(m.input_dim());
  m.in_scale = Eigen::VectorXd::Ones(m.input_dim());
  return m;
}

void fit_input_conditioning(NodeModel& m, const Eigen::RowVectorXd& times,
                            const Eigen::MatrixXd& states, const Eigen::MatrixXd& controls) {
  const Eigen::Index n = times.cols();
  if (states.cols() != n || controls.cols() != n || n < 2)
    throw std::invalid_argument("fit_input_conditioning: need matching sample columns");
  Eigen::MatrixXd all(m.input_dim(), n);
  all.row(0) = times;
  all.middleRows(1, m.state_dim) = states;
  all.bottomRows(m.control_dim) = controls;
  const Eigen::VectorXd mean = all.rowwise().mean();
  const Eigen::VectorXd var =
      (all.colwise() - mean).array().square().rowwise().mean();
  m.in_shift = mean;
  m.in_scale = (var.array().sqrt().max(1e-3)).inverse();
}

Eigen::MatrixXd NodeField::assemble_input(const Eigen::RowVectorXd& t,
                                          const Eigen::MatrixXd& x,
                                          const Eigen::MatrixXd& u) const {
  Eigen::MatrixXd in(m_.input_dim(), x.cols());
  in.row(0) = t;
  in.middleRows(1, m_.state_dim) = x;
  in.bottomRows(m_.control_dim) = u;
  in = ((in.colwise() - m_.in_shift).array().colwise() * m_.in_scale.array()).matrix();
  return in;
}

Eigen::MatrixXd NodeField::eval(const Eigen::RowVectorXd& t, const Eigen::MatrixXd& x,
                                const Eigen::MatrixXd& u) const {
  return mlp_forward(m_.net, assemble_input(t, x, u));
}

void NodeField::vjp(const Eigen::RowVectorXd& t, const Eigen::MatrixXd& x,
                    const Eigen::MatrixXd& u, const Eigen::MatrixXd& upstream,
                    Eigen::MatrixXd& grad_x, Eigen::MatrixXd& grad_u,
                    MlpGrad* param_grad) const {
  MlpCache cache;
  mlp_forward(m_.net, assemble_input(t, x, u), &cache);
  Eigen::MatrixXd in_grad;
  mlp_backward(m_.net, cache, upstream, param_grad, &in_grad);
  in_grad = (in_grad.array().colwise() * m_.in_scale.array()).matrix();
  grad_x += in_grad.middleRows(1, m_.state_dim);
  grad_u += in_grad.bottomRows(m_.control_dim);
}

void TrajectoryBatch::validate(int state_dim, int control_dim) const {
  if (controls.empty() || states.size() != controls.size() + 1)
    throw std::invalid_argument("trajectory batch: need h controls and h+1 states");
  for (const auto& s : states)
    if (s.rows() != state_dim || s.cols() != t0.cols())
      throw std::invalid_argument("trajectory batch: state shape mismatch");
  for (const auto& c : controls)
    if (c.rows() != control_dim || c.cols() != t0.cols())
      throw std::invalid_argument("trajectory batch: control shape mismatch");
}

Eigen::MatrixXd predict_next_batch(const NodeModel& m, const Eigen::RowVectorXd& t,
                                   const Eigen::MatrixXd& x, const Eigen::MatrixXd& u,
                                   IntegrateTape* tape) {
  NodeField field(m);
  return integrate(field, t, x, u, m.integrator, tape);
}

Eigen::VectorXd predict_next(const NodeModel& m, double t, const Eigen::VectorXd& x,
                             const Eigen::VectorXd& u) {
  Eigen::RowVectorXd tr(1);
  tr(0) = t;
  return predict_next_batch(m, tr, x, u).col(0);
}

std::vector<Eigen::VectorXd> rollout(const NodeModel& m, double t0, const Eigen::VectorXd& x0,
                                     const std::vector<Eigen::VectorXd>& controls) {
  if (controls.empty()) throw std::invalid_argument("rollout: empty control sequence");
  std::vector<Eigen::VectorXd> out;
  out.reserve(controls.size());
  Eigen::VectorXd x = x0;
  double t = t0;
  for (const auto& u : controls) {
    x = predict_next(m, t, x, u);
    out.push_back(x);
    t += m.integrator.interval;
  }
  return out;
}

namespace {

struct RolloutRecord {
  std::vector<Eigen::MatrixXd> predicted;  // h entries
  std::vector<IntegrateTape> tapes;        // h entries
  double loss = 0.0;
};

RolloutRecord forward_loss(const NodeModel& m, const TrajectoryBatch& batch, bool keep_tapes,
                           bool squared) {
  batch.validate(m.state_dim, m.control_dim);
  const int h = batch.horizon();
  const double denom = static_cast<double>(h) * static_cast<double>(batch.batch());

  RolloutRecord rec;
  NodeField field(m);
  Eigen::MatrixXd x = batch.states[0];
  Eigen::RowVectorXd t = batch.t0;
  for (int i = 0; i < h; ++i) {
    IntegrateTape tape;
    x = integrate(field, t, x, batch.controls[i], m.integrator, keep_tapes ? &tape : nullptr);
    const auto err = (x - batch.states[i + 1]).array();
    rec.loss += (squared ? err.square().sum() : err.abs().sum()) / denom;
    rec.predicted.push_back(x);
    if (keep_tapes) rec.tapes.push_back(std::move(tape));
    t.array() += m.integrator.interval;
  }
  return rec;
}

}  // namespace

double model_loss(const NodeModel& m, const TrajectoryBatch& batch, bool squared) {
  return forward_loss(m, batch, false, squared).loss;
}

double model_loss_grad(const NodeModel& m, const TrajectoryBatch& batch, MlpGrad& grad,
                       bool squared) {
  RolloutRecord rec = forward_loss(m, batch, true, squared);
  const int h = batch.horizon();
  const double denom = static_cast<double>(h) * static_cast<double>(batch.batch());

  NodeField field(m);
  // Reverse sweep: the prediction at step i feeds both its own error term and
  // the next step's initial state.
  Eigen::MatrixXd g_state = Eigen::MatrixXd::Zero(m.state_dim, batch.batch());
  for (int i = h - 1; i >= 0; --i) {
    Eigen::MatrixXd g = g_state;
    const Eigen::ArrayXXd err = (rec.predicted[i] - batch.states[i + 1]).array();
    const Eigen::ArrayXXd d_err = squared ? Eigen::ArrayXXd(2.0 * err) : Eigen::ArrayXXd(err.sign());
    g += (d_err / denom).matrix();
    g_state.setZero();
    integrate_vjp(field, m.integrator, rec.tapes[i], g, &g_state, nullptr, &grad);
  }
  return rec.loss;
}

double node_train_step(NodeModel& m, const TrajectoryBatch& batch, double lr, AdamState* adam,
                       bool squared) {
  MlpGrad grad = make_grad_like(m.net);
  const double loss = model_loss_grad(m, batch, grad, squared);
  if (adam)
    adam_step(m.net, grad, lr, *adam);
  else
    sgd_step(m.net, grad, lr);
  return loss;
}

}  // namespace nlbac
