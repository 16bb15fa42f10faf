#include "nlbac/integrator.hpp"

#include <stdexcept>
#include <string>

namespace nlbac {

void IntegratorConfig::validate() const {
  if (substeps < 1) throw std::invalid_argument("integrator: substeps must be >= 1");
  if (!(interval > 0.0)) throw std::invalid_argument("integrator: interval must be positive");
}

void VectorField::vjp(const Eigen::RowVectorXd&, const Eigen::MatrixXd&,
                      const Eigen::MatrixXd&, const Eigen::MatrixXd&,
                      Eigen::MatrixXd&, Eigen::MatrixXd&, MlpGrad*) const {
  throw std::logic_error("this vector field does not provide derivatives");
}

Eigen::MatrixXd integrate(const VectorField& f, const Eigen::RowVectorXd& t0,
                          const Eigen::MatrixXd& x0, const Eigen::MatrixXd& u,
                          const IntegratorConfig& cfg, IntegrateTape* tape) {
  cfg.validate();
  if (x0.rows() != f.state_dim()) throw std::invalid_argument("integrate: state dim mismatch");
  if (u.rows() != f.control_dim()) throw std::invalid_argument("integrate: control dim mismatch");
  if (x0.cols() != u.cols() || x0.cols() != t0.cols())
    throw std::invalid_argument("integrate: batch size mismatch");

  const double h = cfg.interval / cfg.substeps;
  if (tape) {
    tape->t0 = t0;
    tape->u = u;
    tape->x_in.clear();
    tape->k.clear();
  }

  Eigen::MatrixXd x = x0;
  Eigen::RowVectorXd t = t0;
  for (int s = 0; s < cfg.substeps; ++s) {
    if (tape) tape->x_in.push_back(x);
    if (cfg.scheme == Scheme::Euler) {
      Eigen::MatrixXd k1 = f.eval(t, x, u);
      x += h * k1;
      if (tape) tape->k.push_back({});
    } else {
      const Eigen::RowVectorXd t_half = t.array() + 0.5 * h;
      const Eigen::RowVectorXd t_full = t.array() + h;
      Eigen::MatrixXd k1 = f.eval(t, x, u);
      Eigen::MatrixXd k2 = f.eval(t_half, x + (0.5 * h) * k1, u);
      Eigen::MatrixXd k3 = f.eval(t_half, x + (0.5 * h) * k2, u);
      Eigen::MatrixXd k4 = f.eval(t_full, x + h * k3, u);
      x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      if (tape) tape->k.push_back({std::move(k1), std::move(k2), std::move(k3)});
    }
    t.array() += h;
    if (!x.allFinite())
      throw std::runtime_error("integrate: non-finite state after substep " +
                               std::to_string(s + 1) + " of " + std::to_string(cfg.substeps));
  }
  return x;
}

Eigen::VectorXd integrate(const VectorField& f, double t0, const Eigen::VectorXd& x0,
                          const Eigen::VectorXd& u, const IntegratorConfig& cfg) {
  Eigen::RowVectorXd t(1);
  t(0) = t0;
  return integrate(f, t, x0, u, cfg).col(0);
}

void integrate_vjp(const VectorField& f, const IntegratorConfig& cfg,
                   const IntegrateTape& tape, const Eigen::MatrixXd& upstream,
                   Eigen::MatrixXd* grad_x0, Eigen::MatrixXd* grad_u,
                   MlpGrad* param_grad) {
  cfg.validate();
  if (static_cast<int>(tape.x_in.size()) != cfg.substeps)
    throw std::invalid_argument("integrate_vjp: tape does not match config");

  const double h = cfg.interval / cfg.substeps;
  const int n = f.state_dim();
  const int m = f.control_dim();
  const Eigen::Index cols = upstream.cols();

  Eigen::MatrixXd g = upstream;  // d(loss)/d(x at substep exit)
  Eigen::MatrixXd gu_total = Eigen::MatrixXd::Zero(m, cols);
  Eigen::MatrixXd gx = Eigen::MatrixXd::Zero(n, cols);
  Eigen::MatrixXd gu = Eigen::MatrixXd::Zero(m, cols);

  for (int s = cfg.substeps - 1; s >= 0; --s) {
    const Eigen::MatrixXd& x = tape.x_in[s];
    const Eigen::RowVectorXd t = tape.t0.array() + s * h;
    if (cfg.scheme == Scheme::Euler) {
      // x' = x + h f(t, x, u)
      gx.setZero();
      gu.setZero();
      f.vjp(t, x, tape.u, h * g, gx, gu, param_grad);
      gu_total += gu;
      g += gx;
    } else {
      const Eigen::RowVectorXd t_half = t.array() + 0.5 * h;
      const Eigen::RowVectorXd t_full = t.array() + h;
      const Eigen::MatrixXd& k1 = tape.k[s][0];
      const Eigen::MatrixXd& k2 = tape.k[s][1];
      const Eigen::MatrixXd& k3 = tape.k[s][2];
      const Eigen::MatrixXd x2 = x + (0.5 * h) * k1;
      const Eigen::MatrixXd x3 = x + (0.5 * h) * k2;
      const Eigen::MatrixXd x4 = x + h * k3;

      // x' = x + h/6 (k1 + 2 k2 + 2 k3 + k4); unwind stages in reverse.
      Eigen::MatrixXd gk4 = (h / 6.0) * g;
      Eigen::MatrixXd gx4 = Eigen::MatrixXd::Zero(n, cols);
      gu.setZero();
      f.vjp(t_full, x4, tape.u, gk4, gx4, gu, param_grad);
      gu_total += gu;

      Eigen::MatrixXd gk3 = (h / 3.0) * g + h * gx4;
      Eigen::MatrixXd gx3 = Eigen::MatrixXd::Zero(n, cols);
      gu.setZero();
      f.vjp(t_half, x3, tape.u, gk3, gx3, gu, param_grad);
      gu_total += gu;

      Eigen::MatrixXd gk2 = (h / 3.0) * g + (0.5 * h) * gx3;
      Eigen::MatrixXd gx2 = Eigen::MatrixXd::Zero(n, cols);
      gu.setZero();
      f.vjp(t_half, x2, tape.u, gk2, gx2, gu, param_grad);
      gu_total += gu;

      Eigen::MatrixXd gk1 = (h / 6.0) * g + (0.5 * h) * gx2;
      gx.setZero();
      gu.setZero();
      f.vjp(t, x, tape.u, gk1, gx, gu, param_grad);
      gu_total += gu;

      g += gx + gx2 + gx3 + gx4;
    }
  }
  if (grad_x0) *grad_x0 += g;
  if (grad_u) *grad_u += gu_total;
}

}  // namespace nlbac
