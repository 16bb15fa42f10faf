#pragma once

#include <string>

#include "nlbac/car_env.hpp"

namespace nlbac {

enum class ConstraintMode { On, Zeroed, Off };

// Everything the trainer needs, with the environment settings nested. The
// config file is `key = value` lines (# comments); keys mirror the field
// names below and unknown keys are rejected.
struct TrainConfig {
  EnvConfig env;

  unsigned long long seed = 0;
  int episodes = 100;
  int warmup_episodes = 5;

  int batch_size = 128;
  int buffer_capacity = 100000;
  int hidden_width = 64;
  int hidden_depth = 2;

  // Returns reach magnitudes of 1e4 on this task, so the regression losses
  // need per-parameter step normalization; a single global SGD rate that
  // survives the early large-residual phase is too small to learn afterward.
  double eta1 = 1e-3;    // dynamics model step size
  double eta2 = 3e-4;    // critic / Lyapunov step size
  double eta3 = 1e-4;    // policy / temperature step size
  bool adaptive = true;  // per-parameter adaptive step sizing

  int n_m = 2;    // steps between dynamics model updates
  int n_l = 50;   // steps between multiplier updates
  int n_b = 4;    // steps between backup controller updates

  double gamma = 0.99;
  // Cost-value discount: the Lyapunov net regresses cost/(1 - gamma_c), so a
  // discount near 1 inflates its targets (and every CLF residual) by orders
  // of magnitude; 0.9 keeps them a small multiple of the per-step cost.
  double gamma_c = 0.9;
  double tau = 0.005;
  double entropy_target = -1.0;
  double alpha_init = 0.2;

  // Decrease rate of the stability condition. The dual ascent never relaxes
  // (residuals are ReLU-aggregated), so beta scales how fast zeta ratchets;
  // values near 0.1 drive it into the thousands within one desk-scale run.
  double beta = 0.01;
  double cbf_gamma1 = 0.2;    // class-K slopes of the two-level barrier chain
  double cbf_gamma2 = 0.2;
  int t_backup = 20;          // max consecutive backup steps

  double lambda_init = 0.0;
  double zeta_init = 0.0;
  double c_p_init = 1.0;
  double c_b_init = 1.0;
  double rho_c = 1.0002;
  double c_max = 1000.0;

  int node_batch = 64;
  int node_horizon = 2;
  int node_pretrain_steps = 2000;
  bool node_squared_loss = false;  // train the model on squared error instead of L1

  std::string constraint_mode = "on";  // on | zeroed | off
  std::string out_dir = "out";
  int checkpoint_every = 0;  // episodes between checkpoints; 0 = final only

  void validate() const;
  ConstraintMode mode() const;
};

TrainConfig parse_config_file(const std::string& path);
void apply_config_line(TrainConfig& cfg, const std::string& key, const std::string& value);
void save_config(const TrainConfig& cfg, const std::string& path);

}  // namespace nlbac
