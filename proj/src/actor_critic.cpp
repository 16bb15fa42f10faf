#include "nlbac/actor_critic.hpp"

#include <cmath>
#include <stdexcept>

namespace nlbac {

namespace {
constexpr double kLogSqrt2Pi = 0.9189385332046727;  // log(sqrt(2*pi))
constexpr double kLog2 = 0.6931471805599453;
}  // namespace

PolicyNet make_policy(int state_dim, int control_dim, const std::vector<int>& hidden,
                      double bound, std::mt19937_64& rng) {
  if (!(bound > 0.0)) throw std::invalid_argument("make_policy: bound must be positive");
  PolicyNet p;
  p.bound = bound;
  std::vector<int> sizes;
  sizes.push_back(state_dim);
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(2 * control_dim);
  p.net = init_mlp(sizes, Activation::Relu, OutputActivation::Identity, rng);
  return p;
}

Eigen::MatrixXd draw_standard_normal(int rows, int cols, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = dist(rng);
  return m;
}

void policy_sample(const PolicyNet& p, const Eigen::MatrixXd& x, const Eigen::MatrixXd& xi,
                   PolicySample& out) {
  const int m = p.control_dim();
  if (xi.rows() != m || xi.cols() != x.cols())
    throw std::invalid_argument("policy_sample: noise shape mismatch");

  const Eigen::MatrixXd head = mlp_forward(p.net, x, &out.cache);
  out.xi = xi;
  out.mean = head.topRows(m);
  out.log_std_raw = head.bottomRows(m);
  out.log_std = out.log_std_raw.array().min(p.log_std_max).max(p.log_std_min);
  out.sigma = out.log_std.array().exp();
  out.pre_tanh = out.mean + out.sigma.cwiseProduct(xi);
  out.tanh_a = out.pre_tanh.array().tanh();
  out.action = p.bound * out.tanh_a;

  // log pi(u|x) = log N(a; mean, sigma) - sum log |du/da|, evaluated with the
  // stable identity log(1 - tanh^2 a) = 2 (log 2 - a - softplus(-2a)).
  out.log_prob = Eigen::RowVectorXd::Zero(x.cols());
  for (Eigen::Index col = 0; col < x.cols(); ++col) {
    double lp = 0.0;
    for (int row = 0; row < m; ++row) {
      const double a = out.pre_tanh(row, col);
      const double xiv = out.xi(row, col);
      const double softplus = std::log1p(std::exp(-std::abs(-2.0 * a))) + std::max(-2.0 * a, 0.0);
      lp += -0.5 * xiv * xiv - out.log_std(row, col) - kLogSqrt2Pi;
      lp += -std::log(p.bound) + 2.0 * (a + softplus - kLog2);
    }
    out.log_prob(col) = lp;
  }
}

std::pair<Eigen::VectorXd, double> policy_draw(const PolicyNet& p, const Eigen::VectorXd& x,
                                               std::mt19937_64& rng) {
  PolicySample s;
  policy_sample(p, x, draw_standard_normal(p.control_dim(), 1, rng), s);
  return {Eigen::VectorXd(s.action.col(0)), s.log_prob(0)};
}

Eigen::MatrixXd policy_mean_action(const PolicyNet& p, const Eigen::MatrixXd& x) {
  const Eigen::MatrixXd head = mlp_forward(p.net, x);
  return p.bound * head.topRows(p.control_dim()).array().tanh();
}

void policy_backward(const PolicyNet& p, const PolicySample& s, const Eigen::MatrixXd& g_action,
                     const Eigen::RowVectorXd& g_logp, MlpGrad* grad, Eigen::MatrixXd* grad_x) {
  const int m = p.control_dim();
  const Eigen::Index cols = s.action.cols();
  const bool has_action = g_action.size() > 0;
  const bool has_logp = g_logp.size() > 0;

  // For each element: u = bound tanh(a), a = mean + sigma xi, and
  //   d log pi / d a        = 2 tanh(a)
  //   d log pi / d log_std  = 2 tanh(a) sigma xi - 1
  // (the Gaussian density term contributes only the -1 because the z-score
  // equals xi identically under reparameterization).
  Eigen::MatrixXd g_mean(m, cols), g_log_std(m, cols);
  for (Eigen::Index col = 0; col < cols; ++col) {
    for (int row = 0; row < m; ++row) {
      const double tanh_a = s.tanh_a(row, col);
      const double du_da = p.bound * (1.0 - tanh_a * tanh_a);
      const double sig_xi = s.sigma(row, col) * s.xi(row, col);
      double ga = 0.0;
      if (has_action) ga += g_action(row, col) * du_da;
      if (has_logp) ga += g_logp(col) * 2.0 * tanh_a;
      g_mean(row, col) = ga;
      double gls = ga * sig_xi;
      if (has_logp) gls -= g_logp(col);
      // the clamp stops gradients outside the allowed log-std range
      const double raw = s.log_std_raw(row, col);
      if (raw <= p.log_std_min || raw >= p.log_std_max) gls = 0.0;
      g_log_std(row, col) = gls;
    }
  }

  Eigen::MatrixXd upstream(2 * m, cols);
  upstream.topRows(m) = g_mean;
  upstream.bottomRows(m) = g_log_std;
  mlp_backward(p.net, s.cache, upstream, grad, grad_x);
}

CriticSet make_critics(int state_dim, int control_dim, const std::vector<int>& hidden,
                       std::mt19937_64& rng) {
  auto sizes_q = [&] {
    std::vector<int> s;
    s.push_back(state_dim + control_dim);
    s.insert(s.end(), hidden.begin(), hidden.end());
    s.push_back(1);
    return s;
  }();
  auto sizes_l = [&] {
    std::vector<int> s;
    s.push_back(state_dim);
    s.insert(s.end(), hidden.begin(), hidden.end());
    s.push_back(1);
    return s;
  }();

  CriticSet c;
  c.q1 = init_mlp(sizes_q, Activation::Relu, OutputActivation::Identity, rng);
  c.q2 = init_mlp(sizes_q, Activation::Relu, OutputActivation::Identity, rng);
  c.q1_targ = c.q1;
  c.q2_targ = c.q2;
  c.lyapunov = init_mlp(sizes_l, Activation::Tanh, OutputActivation::Softplus, rng);
  c.lyapunov_targ = c.lyapunov;
  return c;
}

Eigen::RowVectorXd q_value(const MlpParams& q, const Eigen::MatrixXd& x,
                           const Eigen::MatrixXd& u, MlpCache* cache) {
  Eigen::MatrixXd in(x.rows() + u.rows(), x.cols());
  in.topRows(x.rows()) = x;
  in.bottomRows(u.rows()) = u;
  return mlp_forward(q, in, cache).row(0);
}

namespace {

void polyak(MlpParams& targ, const MlpParams& online, double tau) {
  for (std::size_t l = 0; l < targ.w.size(); ++l) {
    targ.w[l] = (1.0 - tau) * targ.w[l] + tau * online.w[l];
    targ.b[l] = (1.0 - tau) * targ.b[l] + tau * online.b[l];
  }
}

}  // namespace

void target_update(CriticSet& c, double tau) {
  if (!(tau >= 0.0 && tau <= 1.0)) throw std::invalid_argument("target_update: tau in [0,1]");
  polyak(c.q1_targ, c.q1, tau);
  polyak(c.q2_targ, c.q2, tau);
  polyak(c.lyapunov_targ, c.lyapunov, tau);
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw std::invalid_argument("replay buffer: capacity must be positive");
  data_.reserve(capacity);
}

void ReplayBuffer::push(Transition v) {
  if (data_.size() < capacity_) {
    data_.push_back(std::move(v));
  } else {
    data_[head_] = std::move(v);
    head_ = (head_ + 1) % capacity_;
  }
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t count,
                                                      std::mt19937_64& rng) const {
  if (data_.empty()) throw std::logic_error("replay buffer: cannot sample while empty");
  std::uniform_int_distribution<std::size_t> dist(0, data_.size() - 1);
  std::vector<std::size_t> idx(count);
  for (auto& i : idx) i = dist(rng);
  return idx;
}

TransitionBatch gather(const ReplayBuffer& buf, const std::vector<std::size_t>& idx) {
  if (idx.empty()) throw std::invalid_argument("gather: empty index list");
  const auto& first = buf.at(idx[0]);
  const int n = static_cast<int>(first.x.size());
  const int m = static_cast<int>(first.u.size());
  const Eigen::Index b = static_cast<Eigen::Index>(idx.size());

  TransitionBatch out;
  out.t.resize(b);
  out.x.resize(n, b);
  out.u.resize(m, b);
  out.r.resize(b);
  out.c.resize(b);
  out.x_next.resize(n, b);
  out.not_done.resize(b);
  for (Eigen::Index j = 0; j < b; ++j) {
    const Transition& tr = buf.at(idx[j]);
    out.t(j) = tr.t;
    out.x.col(j) = tr.x;
    out.u.col(j) = tr.u;
    out.r(j) = tr.r;
    out.c(j) = tr.c;
    out.x_next.col(j) = tr.x_next;
    out.not_done(j) = tr.done ? 0.0 : 1.0;
  }
  return out;
}

QLossResult q_loss(const CriticSet& critics, const PolicyNet& policy, double alpha,
                   const TransitionBatch& batch, double gamma, const Eigen::MatrixXd& xi_next) {
  const Eigen::Index b = batch.size();

  PolicySample next;
  policy_sample(policy, batch.x_next, xi_next, next);
  const Eigen::RowVectorXd q1n = q_value(critics.q1_targ, batch.x_next, next.action);
  const Eigen::RowVectorXd q2n = q_value(critics.q2_targ, batch.x_next, next.action);
  const Eigen::RowVectorXd target =
      batch.r.array() +
      gamma * batch.not_done.array() *
          (q1n.cwiseMin(q2n).array() - alpha * next.log_prob.array());

  QLossResult out;
  out.grad_q1 = make_grad_like(critics.q1);
  out.grad_q2 = make_grad_like(critics.q2);

  MlpCache c1, c2;
  const Eigen::RowVectorXd q1v = q_value(critics.q1, batch.x, batch.u, &c1);
  const Eigen::RowVectorXd q2v = q_value(critics.q2, batch.x, batch.u, &c2);
  const Eigen::RowVectorXd e1 = q1v - target;
  const Eigen::RowVectorXd e2 = q2v - target;
  out.value = (e1.squaredNorm() + e2.squaredNorm()) / static_cast<double>(b);

  mlp_backward(critics.q1, c1, (2.0 / static_cast<double>(b)) * e1, &out.grad_q1, nullptr);
  mlp_backward(critics.q2, c2, (2.0 / static_cast<double>(b)) * e2, &out.grad_q2, nullptr);
  return out;
}

LyapunovLossResult lyapunov_loss(const CriticSet& critics, const TransitionBatch& batch,
                                 double gamma_c) {
  const Eigen::Index b = batch.size();
  const Eigen::RowVectorXd lnext =
      mlp_forward(critics.lyapunov_targ, batch.x_next).row(0);
  const Eigen::RowVectorXd target =
      batch.c.array() + gamma_c * batch.not_done.array() * lnext.array();

  MlpCache cache;
  const Eigen::RowVectorXd lv = mlp_forward(critics.lyapunov, batch.x, &cache).row(0);
  const Eigen::RowVectorXd e = lv - target;

  LyapunovLossResult out;
  out.value = e.squaredNorm() / static_cast<double>(b);
  out.grad = make_grad_like(critics.lyapunov);
  mlp_backward(critics.lyapunov, cache, (2.0 / static_cast<double>(b)) * e, &out.grad, nullptr);
  return out;
}

PolicyObjectiveResult policy_objective(const PolicyNet& policy, const CriticSet& critics,
                                       double alpha, const Eigen::MatrixXd& x,
                                       const Eigen::MatrixXd& xi) {
  const Eigen::Index b = x.cols();

  PolicySample s;
  policy_sample(policy, x, xi, s);
  MlpCache c1, c2;
  const Eigen::RowVectorXd q1v = q_value(critics.q1, x, s.action, &c1);
  const Eigen::RowVectorXd q2v = q_value(critics.q2, x, s.action, &c2);

  PolicyObjectiveResult out;
  out.log_prob = s.log_prob;
  out.value = (alpha * s.log_prob.array() - q1v.cwiseMin(q2v).array()).mean();
  out.grad = make_grad_like(policy.net);

  // d(objective)/d(action) goes through whichever critic achieves the min.
  const double inv_b = 1.0 / static_cast<double>(b);
  Eigen::RowVectorXd up1 = Eigen::RowVectorXd::Zero(b);
  Eigen::RowVectorXd up2 = Eigen::RowVectorXd::Zero(b);
  for (Eigen::Index col = 0; col < b; ++col)
    (q1v(col) <= q2v(col) ? up1 : up2)(col) = -inv_b;

  const int m = policy.control_dim();
  Eigen::MatrixXd g_action = Eigen::MatrixXd::Zero(m, b);
  Eigen::MatrixXd in_grad;
  mlp_backward(critics.q1, c1, up1, nullptr, &in_grad);
  g_action += in_grad.bottomRows(m);
  mlp_backward(critics.q2, c2, up2, nullptr, &in_grad);
  g_action += in_grad.bottomRows(m);

  const Eigen::RowVectorXd g_logp = Eigen::RowVectorXd::Constant(b, alpha * inv_b);
  policy_backward(policy, s, g_action, g_logp, &out.grad, nullptr);
  return out;
}

AlphaLossResult alpha_loss_from_logp(double alpha, const Eigen::RowVectorXd& log_prob,
                                     double target_entropy) {
  AlphaLossResult out;
  const double k = (log_prob.array() + target_entropy).mean();
  out.value = -alpha * k;
  out.grad_log_alpha = -alpha * k;  // d/d log(alpha) of -exp(log alpha) k
  return out;
}

AlphaLossResult alpha_loss(double alpha, const PolicyNet& policy, const Eigen::MatrixXd& x,
                           const Eigen::MatrixXd& xi, double target_entropy) {
  PolicySample s;
  policy_sample(policy, x, xi, s);
  return alpha_loss_from_logp(alpha, s.log_prob, target_entropy);
}

}  // namespace nlbac
