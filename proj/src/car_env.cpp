#include "nlbac/car_env.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace nlbac {

void EnvConfig::validate() const {
  if (!(dt > 0.0)) throw std::invalid_argument("env: dt must be positive");
  if (substeps < 1) throw std::invalid_argument("env: substeps must be >= 1");
  if (!(band_low < band_high)) throw std::invalid_argument("env: reward band must be ordered");
  if (!(delta > 0.0)) throw std::invalid_argument("env: delta must be positive");
  if (!(backup_margin > 0.0)) throw std::invalid_argument("env: backup_margin must be positive");
  if (!(u_max > 0.0)) throw std::invalid_argument("env: u_max must be positive");
  if (episode_steps < 1) throw std::invalid_argument("env: episode_steps must be >= 1");
  if (!(gap_min > delta)) throw std::invalid_argument("env: gap_min must exceed delta");
  if (!(gap_max >= gap_min)) throw std::invalid_argument("env: gap range must be ordered");
  if (!(vel_jitter >= 0.0)) throw std::invalid_argument("env: vel_jitter must be >= 0");
}

std::array<double, 4> human_accels(double t, const Eigen::VectorXd& x, const EnvConfig& cfg) {
  if (x.size() != kStateDim) throw std::invalid_argument("human_accels: bad state size");
  const double v1 = x(vel_index(1)), v2 = x(vel_index(2)), v3 = x(vel_index(3)),
               v5 = x(vel_index(5));
  const double p1 = x(pos_index(1)), p2 = x(pos_index(2)), p3 = x(pos_index(3)),
               p5 = x(pos_index(5));

  // Car 1 tracks a time-varying command; cars 2 and 3 cruise at v_s but brake
  // hard when the car ahead gets close; car 5 does the same against car 3.
  const double a1 = cfg.k_v * (cfg.v_s - 4.0 * std::sin(t) - v1);

  double a2 = cfg.k_v * (cfg.v_s - v2);
  if (std::abs(p1 - p2) < cfg.brake_gap_23) a2 -= cfg.k_b * (p1 - p2);

  double a3 = cfg.k_v * (cfg.v_s - v3);
  if (std::abs(p2 - p3) < cfg.brake_gap_23) a3 -= cfg.k_b * (p2 - p3);

  double a5 = cfg.k_v * (cfg.v_s - v5);
  if (std::abs(p3 - p5) < cfg.brake_gap_5) a5 -= cfg.k_b * (p3 - p5);

  return {a1, a2, a3, a5};
}

namespace {

// Kinematics with the accelerations frozen at their interval-start values.
class CarField : public VectorField {
 public:
  CarField(const std::array<double, 4>& accels, const EnvConfig& cfg)
      : a_(accels), cfg_(cfg) {}

  int state_dim() const override { return kStateDim; }
  int control_dim() const override { return 1; }

  Eigen::MatrixXd eval(const Eigen::RowVectorXd&, const Eigen::MatrixXd& x,
                       const Eigen::MatrixXd& u) const override {
    Eigen::MatrixXd dx(kStateDim, x.cols());
    const double gain = 1.0 + cfg_.d_i;
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      dx(pos_index(1), c) = x(vel_index(1), c);
      dx(vel_index(1), c) = gain * a_[0];
      dx(pos_index(2), c) = x(vel_index(2), c);
      dx(vel_index(2), c) = gain * a_[1];
      dx(pos_index(3), c) = x(vel_index(3), c);
      dx(vel_index(3), c) = gain * a_[2];
      dx(pos_index(4), c) = x(vel_index(4), c);
      dx(vel_index(4), c) = u(0, c);
      dx(pos_index(5), c) = x(vel_index(5), c);
      dx(vel_index(5), c) = gain * a_[3];
    }
    return dx;
  }

 private:
  std::array<double, 4> a_;
  const EnvConfig& cfg_;
};

}  // namespace

double h1_of(const Eigen::VectorXd& x, const EnvConfig& cfg) {
  return x(pos_index(3)) - x(pos_index(4)) - cfg.delta;
}

double h2_of(const Eigen::VectorXd& x, const EnvConfig& cfg) {
  return x(pos_index(4)) - x(pos_index(5)) - cfg.delta;
}

double reward_of(const Eigen::VectorXd& next_state, double u_applied, const EnvConfig& cfg) {
  const double d = next_state(pos_index(3)) - next_state(pos_index(4));
  double r = -u_applied * u_applied;
  if (d >= cfg.band_low && d <= cfg.band_high) r += cfg.bonus;
  return r;
}

double cost_of(const Eigen::VectorXd& next_state, const EnvConfig& cfg) {
  const double d = next_state(pos_index(3)) - next_state(pos_index(4));
  return std::abs(d - cfg.d_desired);
}

bool backup_zone(const Eigen::VectorXd& x, const EnvConfig& cfg) {
  return x(pos_index(4)) - x(pos_index(5)) < cfg.delta + cfg.backup_margin;
}

StepOutcome env_step(double t, const Eigen::VectorXd& x, double u, const EnvConfig& cfg) {
  if (x.size() != kStateDim) throw std::invalid_argument("env_step: bad state size");
  StepOutcome out;
  out.u_applied = std::clamp(u, -cfg.u_max, cfg.u_max);

  const std::array<double, 4> accels = human_accels(t, x, cfg);
  CarField field(accels, cfg);
  Eigen::VectorXd uc(1);
  uc(0) = out.u_applied;
  out.next_state = integrate(field, t, x, uc, cfg.integrator());

  out.reward = reward_of(out.next_state, out.u_applied, cfg);
  out.cost = cost_of(out.next_state, cfg);
  out.h1 = h1_of(out.next_state, cfg);
  out.h2 = h2_of(out.next_state, cfg);
  out.violation = out.h1 < 0.0 || out.h2 < 0.0;
  out.in_backup_zone = backup_zone(out.next_state, cfg);
  return out;
}

Eigen::VectorXd reset_state(const EnvConfig& cfg, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> gap(cfg.gap_min, cfg.gap_max);
  std::uniform_real_distribution<double> vel(cfg.v_s - cfg.vel_jitter, cfg.v_s + cfg.vel_jitter);

  Eigen::VectorXd x(kStateDim);
  double p = cfg.p5_start;
  x(pos_index(5)) = p;
  for (int car = 4; car >= 1; --car) {
    p += gap(rng);
    x(pos_index(car)) = p;
  }
  for (int car = 1; car <= kNumCars; ++car) x(vel_index(car)) = vel(rng);
  return x;
}

const Eigen::VectorXd& CarEnv::reset(std::mt19937_64& rng) {
  x_ = reset_state(cfg_, rng);
  t_ = 0.0;
  return x_;
}

StepOutcome CarEnv::step(double u) {
  StepOutcome out = env_step(t_, x_, u, cfg_);
  x_ = out.next_state;
  t_ += cfg_.dt;
  return out;
}

void write_trajectory_csv(const std::string& path, const std::vector<TrajectoryRow>& rows) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  f << "t,p1,v1,p2,v2,p3,v3,p4,v4,p5,v5,u,reward,cost,h1,h2,violation,backup\n";
  f.precision(17);
  for (const auto& r : rows) {
    f << r.t;
    for (int i = 0; i < kStateDim; ++i) f << ',' << r.state(i);
    f << ',' << r.u << ',' << r.reward << ',' << r.cost << ',' << r.h1 << ',' << r.h2 << ','
      << (r.violation ? 1 : 0) << ',' << (r.backup ? 1 : 0) << '\n';
  }
}

}  // namespace nlbac
