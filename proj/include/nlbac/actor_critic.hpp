#pragma once

#include <Eigen/Dense>

#include <random>
#include <vector>

#include "nlbac/mlp.hpp"

namespace nlbac {

// Squashed-Gaussian policy. The network maps a state to stacked rows
// (mean; log_std) per control dimension; actions are bound * tanh(a) with
// a = mean + std * xi, so sampling is reparameterized and differentiable.
struct PolicyNet {
  MlpParams net;
  double bound = 1.0;
  double log_std_min = -20.0;
  double log_std_max = 2.0;

  int control_dim() const { return net.output_dim() / 2; }
};

PolicyNet make_policy(int state_dim, int control_dim, const std::vector<int>& hidden,
                      double bound, std::mt19937_64& rng);

// Everything recorded during a batched sample, enough for the reverse pass.
struct PolicySample {
  MlpCache cache;
  Eigen::MatrixXd xi, mean, log_std_raw, log_std, sigma, pre_tanh, tanh_a, action;
  Eigen::RowVectorXd log_prob;
};

Eigen::MatrixXd draw_standard_normal(int rows, int cols, std::mt19937_64& rng);

// Reparameterized sample with caller-supplied noise (columns are samples).
void policy_sample(const PolicyNet& p, const Eigen::MatrixXd& x, const Eigen::MatrixXd& xi,
                   PolicySample& out);

// Convenience single-state draw: returns (action, log_prob).
std::pair<Eigen::VectorXd, double> policy_draw(const PolicyNet& p, const Eigen::VectorXd& x,
                                               std::mt19937_64& rng);

// Deterministic limit used for evaluation: bound * tanh(mean).
Eigen::MatrixXd policy_mean_action(const PolicyNet& p, const Eigen::MatrixXd& x);

// Reverse pass through squashing and the network. g_action is d(loss)/d(action),
// g_logp is d(loss)/d(log_prob); either may be empty (treated as zero).
// Accumulates into grad (if non-null) and writes d(loss)/d(state input) into
// grad_x (if non-null).
void policy_backward(const PolicyNet& p, const PolicySample& s, const Eigen::MatrixXd& g_action,
                     const Eigen::RowVectorXd& g_logp, MlpGrad* grad, Eigen::MatrixXd* grad_x);

// Twin soft Q networks with targets, plus a candidate Lyapunov network with a
// softplus output head (non-negative by construction) and its target.
struct CriticSet {
  MlpParams q1, q2, q1_targ, q2_targ;
  MlpParams lyapunov, lyapunov_targ;
};

CriticSet make_critics(int state_dim, int control_dim, const std::vector<int>& hidden,
                       std::mt19937_64& rng);

Eigen::RowVectorXd q_value(const MlpParams& q, const Eigen::MatrixXd& x,
                           const Eigen::MatrixXd& u, MlpCache* cache = nullptr);

// Polyak averaging of all target networks: targ <- (1 - tau) targ + tau online.
void target_update(CriticSet& c, double tau);

// One stored interaction. Time is kept because the dynamics are time-varying
// and the model input includes it; episode/step identify contiguous windows.
struct Transition {
  double t = 0.0;
  Eigen::VectorXd x;
  Eigen::VectorXd u;
  double r = 0.0;
  double c = 0.0;
  Eigen::VectorXd x_next;
  bool done = false;
  long episode = 0;
  int step = 0;
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(Transition v);
  std::size_t size() const { return data_.size(); }
  std::size_t capacity() const { return capacity_; }
  const Transition& at(std::size_t i) const { return data_[i]; }

  // Uniform minibatch of storage indices (with replacement).
  std::vector<std::size_t> sample_indices(std::size_t count, std::mt19937_64& rng) const;

  // Storage index written immediately after i, wrapping around; only
  // meaningful when the buffer is full or i+1 < size().
  std::size_t next_slot(std::size_t i) const { return (i + 1) % capacity_; }

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;
  std::vector<Transition> data_;
};

// Minibatch of transitions in column form.
struct TransitionBatch {
  Eigen::RowVectorXd t;
  Eigen::MatrixXd x;
  Eigen::MatrixXd u;
  Eigen::RowVectorXd r;
  Eigen::RowVectorXd c;
  Eigen::MatrixXd x_next;
  Eigen::RowVectorXd not_done;

  Eigen::Index size() const { return t.cols(); }
};

TransitionBatch gather(const ReplayBuffer& buf, const std::vector<std::size_t>& idx);

// Soft Bellman regression for both critics against the shared target
//   y = r + gamma * not_done * (min_j Qtarg_j(x', u') - alpha log pi(u'|x')).
struct QLossResult {
  double value = 0.0;  // summed MSE of both critics
  MlpGrad grad_q1, grad_q2;
};
QLossResult q_loss(const CriticSet& critics, const PolicyNet& policy, double alpha,
                   const TransitionBatch& batch, double gamma, const Eigen::MatrixXd& xi_next);

// Lyapunov regression toward y = c + gamma_c * not_done * Ltarg(x').
struct LyapunovLossResult {
  double value = 0.0;
  MlpGrad grad;
};
LyapunovLossResult lyapunov_loss(const CriticSet& critics, const TransitionBatch& batch,
                                 double gamma_c);

// Policy surrogate mean(alpha log pi - min_j Q_j(x, u~)) with its gradient;
// minimizing it maximizes the entropy-regularized soft value.
struct PolicyObjectiveResult {
  double value = 0.0;
  MlpGrad grad;
  Eigen::RowVectorXd log_prob;
};
PolicyObjectiveResult policy_objective(const PolicyNet& policy, const CriticSet& critics,
                                       double alpha, const Eigen::MatrixXd& x,
                                       const Eigen::MatrixXd& xi);

// Temperature loss -alpha * mean(log pi + target_entropy) and its gradient
// with respect to log(alpha).
struct AlphaLossResult {
  double value = 0.0;
  double grad_log_alpha = 0.0;
};
AlphaLossResult alpha_loss_from_logp(double alpha, const Eigen::RowVectorXd& log_prob,
                                     double target_entropy);
AlphaLossResult alpha_loss(double alpha, const PolicyNet& policy, const Eigen::MatrixXd& x,
                           const Eigen::MatrixXd& xi, double target_entropy);

}  // namespace nlbac
