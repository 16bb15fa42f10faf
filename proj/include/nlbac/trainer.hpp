#pragma once

#include <Eigen/Dense>

#include <fstream>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "nlbac/actor_critic.hpp"
#include "nlbac/car_env.hpp"
#include "nlbac/config.hpp"
#include "nlbac/constrained_opt.hpp"
#include "nlbac/constraint_eval.hpp"
#include "nlbac/node_model.hpp"
#include "nlbac/optimizer.hpp"
#include "nlbac/safety_constraints.hpp"

namespace nlbac {

struct EpisodeRecord {
  long episode = 0;  // 1-based training episode index
  double cum_reward = 0.0;
  double cum_cost = 0.0;
  int violations = 0;
  int backup_steps = 0;
  int backup_activations = 0;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  double zeta = 0.0;
  double c_p = 0.0;
  double model_loss = 0.0;  // mean over the episode's model updates
  bool faulted = false;
};

// Whole-run counters; the cadence tests pin several of these exactly.
struct TrainStats {
  long env_steps = 0;
  long transitions_stored = 0;
  long node_updates = 0;
  long critic_updates = 0;
  long policy_updates = 0;
  long multiplier_updates = 0;
  long backup_updates = 0;
  long backup_multiplier_updates = 0;
  long backup_steps = 0;
  long backup_activations = 0;
  long backup_zone_entries = 0;  // counted regardless of which policy acts
  long faults = 0;
};

// Dwell-limited controller switch: the backup policy may hold control for at
// most t_max consecutive steps while the state stays inside the backup zone;
// leaving the zone re-arms the budget, exhausting it hands control back to
// the primary policy until the zone is left again.
class ControllerSwitch {
 public:
  explicit ControllerSwitch(int t_max) : t_max_(t_max), left_(t_max) {}

  bool use_backup(bool in_zone);
  void reset() { left_ = t_max_; }
  int dwell_left() const { return left_; }

 private:
  int t_max_;
  int left_;
};

// Stream-tagged sub-seed derivation so that optional machinery (constraint
// evaluation, backup updates) consumes randomness no other consumer sees.
unsigned long long derive_seed(unsigned long long master, unsigned long long stream);

// Full training state of both policies plus critics, temperatures and duals;
// what the actor checkpoint stores.
struct ActorState {
  PolicyNet policy;
  PolicyNet backup;
  CriticSet critics;
  double log_alpha_p = 0.0;
  double log_alpha_b = 0.0;
  MultiplierState ms;
};

void save_actor_checkpoint(const ActorState& s, const std::string& path);
ActorState load_actor_checkpoint(const std::string& path);
void save_node_checkpoint(const NodeModel& m, const std::string& path);
NodeModel load_node_checkpoint(const std::string& path);

class Trainer {
 public:
  explicit Trainer(const TrainConfig& cfg);

  // Warm-up collection, model pre-training, then the scheduled loop. Writes
  // config.txt, training.csv and checkpoints under cfg.out_dir. Aborts after
  // five consecutive faulted episodes.
  void run();

  const TrainConfig& config() const { return cfg_; }
  const TrainStats& stats() const { return stats_; }
  const std::vector<EpisodeRecord>& records() const { return records_; }
  const PolicyNet& policy() const { return policy_; }
  const PolicyNet& backup_policy() const { return backup_; }
  const CriticSet& critics() const { return critics_; }
  const NodeModel& node() const { return node_; }
  const MultiplierState& multipliers() const { return ms_; }
  const ReplayBuffer& buffer() const { return buffer_; }
  double alpha_p() const;
  double alpha_b() const;

  void save_actor(const std::string& path) const;
  void save_node(const std::string& path) const;

 private:
  void collect_warmup();
  void pretrain_node();
  void run_episode(EpisodeRecord& rec);
  void update_block();
  bool node_update();
  TrajectoryBatch sample_windows(int horizon, int count, std::mt19937_64& rng, bool& ok);
  void store(double t, const Eigen::VectorXd& x, double u, const StepOutcome& out, int step);
  void write_csv_row(const EpisodeRecord& rec);
  void save_checkpoints(const std::string& actor_name, const std::string& node_name) const;

  TrainConfig cfg_;
  ConstraintMode mode_;
  CarEnv env_;
  std::vector<CbfConstraint> cbfs_;
  int constraint_depth_ = 0;

  PolicyNet policy_, backup_;
  CriticSet critics_;
  NodeModel node_;
  MultiplierState ms_;
  ReplayBuffer buffer_;
  double log_alpha_p_ = 0.0, log_alpha_b_ = 0.0;
  MlpParams lyap_at_construction_;  // Lyapunov weights the step's constraints were built with

  std::unique_ptr<AdamState> ad_policy_, ad_backup_, ad_q1_, ad_q2_, ad_lyap_, ad_node_;
  ScalarAdam ad_alpha_p_, ad_alpha_b_;

  std::mt19937_64 rng_reset_, rng_warmup_, rng_action_, rng_batch_main_, rng_batch_backup_,
      rng_windows_, rng_xi_policy_, rng_xi_critic_, rng_xi_constraints_, rng_xi_backup_;

  long n_ = 0;               // global scheduled-step counter, main loop only
  long global_episode_ = 0;  // warm-up + training episodes, tags transitions
  ControllerSwitch switch_;
  bool prev_backup_ = false;
  bool prev_in_zone_ = false;
  double last_model_loss_ = 0.0;
  double ep_loss_sum_ = 0.0;
  long ep_loss_count_ = 0;

  TrainStats stats_;
  std::vector<EpisodeRecord> records_;
  std::ofstream csv_;
};

// Trains the dynamics model alone on freshly collected random-control
// trajectories and reports held-out open-loop prediction errors (mean
// per-step summed absolute error, one and two steps ahead).
struct SysIdResult {
  double final_train_loss = 0.0;
  double one_step_l1 = 0.0;
  double two_step_l1 = 0.0;
  long train_windows = 0;
  long holdout_windows = 0;
  int gradient_steps = 0;
};

SysIdResult run_sysid(const TrainConfig& cfg);

// Deterministic rollouts with the mean action; optionally records the first
// episode's trajectory.
struct EvalSummary {
  int episodes = 0;
  double mean_reward = 0.0;
  double mean_cost = 0.0;
  long violations = 0;
  double min_h1 = 0.0;
  double min_h2 = 0.0;
};

EvalSummary evaluate_policy(const PolicyNet& policy, const EnvConfig& env, int episodes,
                            unsigned long long seed,
                            std::vector<TrajectoryRow>* first_trajectory = nullptr);

}  // namespace nlbac
