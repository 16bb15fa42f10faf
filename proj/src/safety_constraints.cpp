#include "nlbac/safety_constraints.hpp"

#include <stdexcept>

#include "nlbac/car_env.hpp"

namespace nlbac {

void CbfConstraint::validate() const {
  if (!h || !h_grad) throw std::invalid_argument("cbf: missing h or h_grad");
  if (gains.empty()) throw std::invalid_argument("cbf: need at least one class-K gain");
  for (double g : gains)
    if (!(g > 0.0 && g <= 1.0))
      throw std::invalid_argument("cbf: class-K slopes must lie in (0, 1]");
}

CbfConstraint gap_constraint(int front_car, int rear_car, double delta,
                             std::vector<double> gains) {
  const int pf = pos_index(front_car);
  const int pr = pos_index(rear_car);
  CbfConstraint c;
  c.h = [pf, pr, delta](const Eigen::VectorXd& x) { return x(pf) - x(pr) - delta; };
  c.h_grad = [pf, pr](const Eigen::VectorXd& x) {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(x.size());
    g(pf) = 1.0;
    g(pr) = -1.0;
    return g;
  };
  c.gains = std::move(gains);
  c.validate();
  return c;
}

Eigen::VectorXd phi_chain_coeffs(const std::vector<double>& gains) {
  const int r = static_cast<int>(gains.size());
  // Run the recursion on the coefficient vectors of h(x_k)..h(x_{k+r}).
  // Level j holds coefficients for phi_j at start offsets 0..r-j.
  std::vector<Eigen::VectorXd> level(r + 1);
  for (int s = 0; s <= r; ++s) {
    level[s] = Eigen::VectorXd::Zero(r + 1);
    level[s](s) = 1.0;  // phi_0 starting at offset s is h(x_{k+s})
  }
  for (int j = 1; j <= r; ++j) {
    std::vector<Eigen::VectorXd> next(r - j + 1);
    for (int s = 0; s <= r - j; ++s)
      next[s] = level[s + 1] + (gains[j - 1] - 1.0) * level[s];
    level = std::move(next);
  }
  return level[0];
}

double phi_chain(const CbfConstraint& c, const std::vector<Eigen::VectorXd>& states) {
  c.validate();
  if (static_cast<int>(states.size()) != c.degree() + 1)
    throw std::invalid_argument("phi_chain: need degree+1 states");
  const Eigen::VectorXd coeffs = phi_chain_coeffs(c.gains);
  double phi = 0.0;
  for (int s = 0; s < coeffs.size(); ++s) phi += coeffs(s) * c.h(states[s]);
  return phi;
}

Eigen::RowVectorXd phi_chain_batch(const CbfConstraint& c,
                                   const std::vector<const Eigen::MatrixXd*>& states) {
  c.validate();
  if (static_cast<int>(states.size()) != c.degree() + 1)
    throw std::invalid_argument("phi_chain_batch: need degree+1 states");
  const Eigen::VectorXd coeffs = phi_chain_coeffs(c.gains);
  const Eigen::Index cols = states[0]->cols();
  Eigen::RowVectorXd phi = Eigen::RowVectorXd::Zero(cols);
  for (int s = 0; s < coeffs.size(); ++s) {
    const Eigen::MatrixXd& xs = *states[s];
    if (xs.cols() != cols) throw std::invalid_argument("phi_chain_batch: batch mismatch");
    for (Eigen::Index col = 0; col < cols; ++col)
      phi(col) += coeffs(s) * c.h(xs.col(col));
  }
  return phi;
}

double clf_residual(const MlpParams& lyapunov, const Eigen::VectorXd& x,
                    const Eigen::VectorXd& x_next, double beta) {
  const double lx = mlp_forward(lyapunov, x)(0, 0);
  const double lnext = mlp_forward(lyapunov, x_next)(0, 0);
  return lnext - lx + beta * lx;
}

Eigen::RowVectorXd clf_residual_batch(const MlpParams& lyapunov, const Eigen::MatrixXd& x,
                                      const Eigen::MatrixXd& x_next, double beta) {
  const Eigen::MatrixXd lx = mlp_forward(lyapunov, x);
  const Eigen::MatrixXd lnext = mlp_forward(lyapunov, x_next);
  return lnext.row(0) + (beta - 1.0) * lx.row(0);
}

AggregateResult aggregate(const ConstraintBatch& batch) {
  if (batch.cbf.cols() != batch.clf.cols())
    throw std::invalid_argument("aggregate: batch size mismatch");
  if (batch.cbf.cols() == 0) throw std::invalid_argument("aggregate: empty batch");
  AggregateResult out;
  out.f = batch.cbf.array().max(0.0).rowwise().mean();
  out.f_raw = batch.cbf.rowwise().mean();
  out.g = batch.clf.array().max(0.0).mean();
  out.g_raw = batch.clf.mean();
  return out;
}

}  // namespace nlbac
