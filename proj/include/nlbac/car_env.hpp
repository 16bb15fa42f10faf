#pragma once

#include <Eigen/Dense>

#include <array>
#include <random>
#include <string>
#include <vector>

#include "nlbac/integrator.hpp"

namespace nlbac {

// Five cars on a line. Cars 1, 2, 3 and 5 follow fixed human driving laws;
// car 4 is the controlled vehicle. The flattened state is
// (p1, v1, p2, v2, p3, v3, p4, v4, p5, v5).
constexpr int kNumCars = 5;
constexpr int kStateDim = 2 * kNumCars;

inline int pos_index(int car) { return 2 * (car - 1); }
inline int vel_index(int car) { return 2 * (car - 1) + 1; }

struct EnvConfig {
  double dt = 0.02;           // seconds per step
  double v_s = 3.0;           // nominal cruise speed
  double k_v = 4.0;           // velocity tracking gain
  double k_b = 20.0;          // brake gain
  double d_i = 0.1;           // actuation mismatch on human cars
  double brake_gap_23 = 6.5;  // cars 2 and 3 brake below this gap to the car ahead
  double brake_gap_5 = 13.0;  // car 5 brakes below this gap to car 3
  double band_low = 9.0;      // reward band on d = p3 - p4, inclusive
  double band_high = 10.0;
  double d_desired = 9.5;     // cost reference for d
  double bonus = 2.0;         // reward granted inside the band
  double delta = 3.5;         // minimum safe gap in the barrier functions
  double backup_margin = 1.0; // backup zone width above delta on p4 - p5
  double u_max = 20.0;        // symmetric actuator clamp on car 4
  int episode_steps = 300;
  double gap_min = 9.0;       // reset: gaps drawn uniformly from [gap_min, gap_max]
  double gap_max = 12.0;
  double vel_jitter = 0.5;    // reset: speeds drawn from v_s +- vel_jitter
  double p5_start = 0.0;      // reset: position of the last car
  int substeps = 1;
  Scheme scheme = Scheme::Rk4;

  void validate() const;
  IntegratorConfig integrator() const { return {scheme, substeps, dt}; }
};

// Accelerations commanded by the human driving laws for cars 1, 2, 3, 5
// at time t (before the per-car actuation factor 1 + d_i).
std::array<double, 4> human_accels(double t, const Eigen::VectorXd& x, const EnvConfig& cfg);

struct StepOutcome {
  Eigen::VectorXd next_state;
  double reward = 0.0;
  double cost = 0.0;
  double h1 = 0.0;  // p3 - p4 - delta at the next state
  double h2 = 0.0;  // p4 - p5 - delta at the next state
  bool violation = false;
  bool in_backup_zone = false;
  double u_applied = 0.0;
};

// Advances one interval of cfg.dt with the human accelerations and the
// clamped control held constant. Throws on a non-finite state.
StepOutcome env_step(double t, const Eigen::VectorXd& x, double u, const EnvConfig& cfg);

double h1_of(const Eigen::VectorXd& x, const EnvConfig& cfg);
double h2_of(const Eigen::VectorXd& x, const EnvConfig& cfg);
double reward_of(const Eigen::VectorXd& next_state, double u_applied, const EnvConfig& cfg);
double cost_of(const Eigen::VectorXd& next_state, const EnvConfig& cfg);

// True when the rear gap is within backup_margin of the barrier boundary,
// strictly: p4 - p5 < delta + backup_margin.
bool backup_zone(const Eigen::VectorXd& x, const EnvConfig& cfg);

// Cars in decreasing position order, gaps uniform in [gap_min, gap_max],
// speeds uniform in v_s +- vel_jitter. Always starts with h1, h2 > 0.
Eigen::VectorXd reset_state(const EnvConfig& cfg, std::mt19937_64& rng);

// Stateful wrapper used by the trainer.
class CarEnv {
 public:
  explicit CarEnv(const EnvConfig& cfg) : cfg_(cfg) { cfg_.validate(); }

  const Eigen::VectorXd& reset(std::mt19937_64& rng);
  StepOutcome step(double u);

  double time() const { return t_; }
  const Eigen::VectorXd& state() const { return x_; }
  const EnvConfig& config() const { return cfg_; }

 private:
  EnvConfig cfg_;
  double t_ = 0.0;
  Eigen::VectorXd x_ = Eigen::VectorXd::Zero(kStateDim);
};

struct TrajectoryRow {
  double t;
  Eigen::VectorXd state;  // state the step started from
  double u, reward, cost, h1, h2;
  bool violation, backup;
};

void write_trajectory_csv(const std::string& path, const std::vector<TrajectoryRow>& rows);

}  // namespace nlbac
