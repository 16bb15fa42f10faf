#include "nlbac/constraint_eval.hpp"

#include <algorithm>
#include <stdexcept>

namespace nlbac {

namespace {

int max_degree(const std::vector<CbfConstraint>& cbfs) {
  int d = 0;
  for (const auto& c : cbfs) d = std::max(d, c.degree());
  return d;
}

}  // namespace

void constraint_forward(const PolicyNet& policy, const NodeModel& node,
                        const std::vector<CbfConstraint>& cbfs, const MlpParams* lyapunov,
                        double beta, const Eigen::RowVectorXd& t, const Eigen::MatrixXd& x,
                        const std::vector<Eigen::MatrixXd>& xi, ConstraintForward& out) {
  if (cbfs.empty()) throw std::invalid_argument("constraint_forward: no constraints");
  const int depth = std::max(max_degree(cbfs), lyapunov ? 1 : 0);
  if (static_cast<int>(xi.size()) != depth)
    throw std::invalid_argument("constraint_forward: need one noise block per level");

  out.t = t;
  out.states.assign(1, x);
  out.actions.assign(depth, PolicySample{});
  out.tapes.assign(depth, IntegrateTape{});
  out.has_clf = lyapunov != nullptr;

  NodeField field(node);
  Eigen::RowVectorXd tk = t;
  for (int k = 0; k < depth; ++k) {
    policy_sample(policy, out.states[k], xi[k], out.actions[k]);
    out.states.push_back(integrate(field, tk, out.states[k], out.actions[k].action,
                                   node.integrator, &out.tapes[k]));
    tk.array() += node.integrator.interval;
  }

  out.batch.cbf.resize(static_cast<Eigen::Index>(cbfs.size()), x.cols());
  for (std::size_t i = 0; i < cbfs.size(); ++i) {
    std::vector<const Eigen::MatrixXd*> seq;
    for (int s = 0; s <= cbfs[i].degree(); ++s) seq.push_back(&out.states[s]);
    out.batch.cbf.row(static_cast<Eigen::Index>(i)) = -phi_chain_batch(cbfs[i], seq);
  }

  if (lyapunov) {
    const Eigen::RowVectorXd l0 = mlp_forward(*lyapunov, out.states[0]).row(0);
    const Eigen::RowVectorXd l1 = mlp_forward(*lyapunov, out.states[1], &out.lyap_cache).row(0);
    out.batch.clf = l1 + (beta - 1.0) * l0;
  } else {
    out.batch.clf = Eigen::RowVectorXd::Zero(x.cols());
  }
  out.agg = aggregate(out.batch);
}

void constraint_backward(const PolicyNet& policy, const NodeModel& node,
                         const std::vector<CbfConstraint>& cbfs, const MlpParams* lyapunov,
                         const ConstraintForward& fwd, const Eigen::VectorXd& f_weights,
                         double g_weight, MlpGrad& grad) {
  if (f_weights.size() != static_cast<Eigen::Index>(cbfs.size()))
    throw std::invalid_argument("constraint_backward: weight count mismatch");
  const int depth = static_cast<int>(fwd.actions.size());
  const Eigen::Index b = fwd.states[0].cols();
  const int n = node.state_dim;
  const double inv_b = 1.0 / static_cast<double>(b);

  // Upstream gradient on each predicted state. f_i = mean ReLU(-phi_i), so a
  // sample contributes -coeff_s * h_grad at every predicted state while its
  // residual is active.
  std::vector<Eigen::MatrixXd> g_state(depth + 1);
  for (int s = 0; s <= depth; ++s) g_state[s] = Eigen::MatrixXd::Zero(n, b);

  for (std::size_t i = 0; i < cbfs.size(); ++i) {
    const double wf = f_weights(static_cast<Eigen::Index>(i));
    if (wf == 0.0) continue;
    const Eigen::VectorXd coeffs = phi_chain_coeffs(cbfs[i].gains);
    for (Eigen::Index col = 0; col < b; ++col) {
      if (fwd.batch.cbf(static_cast<Eigen::Index>(i), col) <= 0.0) continue;
      const double scale = wf * inv_b;
      for (int s = 1; s <= cbfs[i].degree(); ++s)
        g_state[s].col(col) -= scale * coeffs(s) * cbfs[i].h_grad(fwd.states[s].col(col));
    }
  }

  if (lyapunov && fwd.has_clf && g_weight != 0.0) {
    Eigen::RowVectorXd up = Eigen::RowVectorXd::Zero(b);
    for (Eigen::Index col = 0; col < b; ++col)
      if (fwd.batch.clf(col) > 0.0) up(col) = g_weight * inv_b;
    Eigen::MatrixXd in_grad;
    mlp_backward(*lyapunov, fwd.lyap_cache, up, nullptr, &in_grad);
    g_state[1] += in_grad;
  }

  // Reverse through the prediction chain; level k maps states[k] -> states[k+1]
  // under the action drawn at states[k].
  NodeField field(node);
  for (int k = depth - 1; k >= 0; --k) {
    Eigen::MatrixXd gx_prev = Eigen::MatrixXd::Zero(n, b);
    Eigen::MatrixXd gu = Eigen::MatrixXd::Zero(policy.control_dim(), b);
    integrate_vjp(field, node.integrator, fwd.tapes[k], g_state[k + 1], &gx_prev, &gu, nullptr);
    if (k > 0) {
      Eigen::MatrixXd gx_in;
      policy_backward(policy, fwd.actions[k], gu, Eigen::RowVectorXd(), &grad, &gx_in);
      g_state[k] += gx_prev + gx_in;
    } else {
      policy_backward(policy, fwd.actions[k], gu, Eigen::RowVectorXd(), &grad, nullptr);
    }
  }
}

}  // namespace nlbac
