#include "nlbac/trainer.hpp"

#include "nlbac/checkpoint.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <limits>
#include <stdexcept>
#include <utility>

namespace nlbac {

unsigned long long derive_seed(unsigned long long master, unsigned long long stream) {
  unsigned long long z = master + 0x9e3779b97f4a7c15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

namespace {

// Fixed stream tags; every consumer of randomness gets its own generator so
// that enabling or disabling one subsystem cannot shift the draws of another.
enum Stream : unsigned long long {
  kInit = 0,
  kReset,
  kWarmup,
  kAction,
  kBatchMain,
  kBatchBackup,
  kWindows,
  kXiPolicy,
  kXiCritic,
  kXiConstraints,
  kXiBackup,
  kSysIdReset,
  kSysIdControls,
  kSysIdPick,
  kEval,
};

}  // namespace

bool ControllerSwitch::use_backup(bool in_zone) {
  if (!in_zone) {
    left_ = t_max_;
    return false;
  }
  if (left_ <= 0) return false;
  --left_;
  return true;
}

Trainer::Trainer(const TrainConfig& cfg)
    : cfg_(cfg),
      mode_(cfg.mode()),
      env_(cfg.env),
      buffer_(static_cast<std::size_t>(cfg.buffer_capacity)),
      switch_(cfg.t_backup) {
  cfg_.validate();

  std::mt19937_64 rng_init(derive_seed(cfg_.seed, kInit));
  const std::vector<int> hidden(static_cast<std::size_t>(cfg_.hidden_depth), cfg_.hidden_width);
  policy_ = make_policy(kStateDim, 1, hidden, cfg_.env.u_max, rng_init);
  backup_ = make_policy(kStateDim, 1, hidden, cfg_.env.u_max, rng_init);
  critics_ = make_critics(kStateDim, 1, hidden, rng_init);
  node_ = make_node_model(kStateDim, 1, hidden, cfg_.env.integrator(), rng_init);

  cbfs_ = {gap_constraint(3, 4, cfg_.env.delta, {cfg_.cbf_gamma1, cfg_.cbf_gamma2}),
           gap_constraint(4, 5, cfg_.env.delta, {cfg_.cbf_gamma1, cfg_.cbf_gamma2})};
  for (const auto& c : cbfs_) {
    c.validate();
    constraint_depth_ = std::max(constraint_depth_, c.degree());
  }
  ms_ = make_multipliers(static_cast<int>(cbfs_.size()), cfg_.lambda_init, cfg_.zeta_init,
                         cfg_.c_p_init, cfg_.c_b_init, cfg_.rho_c, cfg_.c_max);

  log_alpha_p_ = std::log(cfg_.alpha_init);
  log_alpha_b_ = std::log(cfg_.alpha_init);
  if (cfg_.adaptive) {
    ad_policy_ = std::make_unique<AdamState>(make_adam_like(policy_.net));
    ad_backup_ = std::make_unique<AdamState>(make_adam_like(backup_.net));
    ad_q1_ = std::make_unique<AdamState>(make_adam_like(critics_.q1));
    ad_q2_ = std::make_unique<AdamState>(make_adam_like(critics_.q2));
    ad_lyap_ = std::make_unique<AdamState>(make_adam_like(critics_.lyapunov));
    ad_node_ = std::make_unique<AdamState>(make_adam_like(node_.net));
  }

  rng_reset_.seed(derive_seed(cfg_.seed, kReset));
  rng_warmup_.seed(derive_seed(cfg_.seed, kWarmup));
  rng_action_.seed(derive_seed(cfg_.seed, kAction));
  rng_batch_main_.seed(derive_seed(cfg_.seed, kBatchMain));
  rng_batch_backup_.seed(derive_seed(cfg_.seed, kBatchBackup));
  rng_windows_.seed(derive_seed(cfg_.seed, kWindows));
  rng_xi_policy_.seed(derive_seed(cfg_.seed, kXiPolicy));
  rng_xi_critic_.seed(derive_seed(cfg_.seed, kXiCritic));
  rng_xi_constraints_.seed(derive_seed(cfg_.seed, kXiConstraints));
  rng_xi_backup_.seed(derive_seed(cfg_.seed, kXiBackup));
}

double Trainer::alpha_p() const { return std::exp(log_alpha_p_); }
double Trainer::alpha_b() const { return std::exp(log_alpha_b_); }

void Trainer::run() {
  std::filesystem::create_directories(cfg_.out_dir);
  save_config(cfg_, cfg_.out_dir + "/config.txt");
  csv_.open(cfg_.out_dir + "/training.csv", std::ios::trunc);
  if (!csv_) throw std::runtime_error("cannot open " + cfg_.out_dir + "/training.csv");
  csv_.precision(12);
  csv_ << "episode,cum_reward,cum_cost,violations,backup_steps,lambda1,lambda2,zeta,c_p,"
          "model_loss\n";
  csv_.flush();

  if (cfg_.episodes > 0) {
    collect_warmup();
    pretrain_node();

    int consecutive_faults = 0;
    for (long ep = 1; ep <= cfg_.episodes; ++ep) {
      EpisodeRecord rec;
      rec.episode = ep;
      try {
        run_episode(rec);
        consecutive_faults = 0;
      } catch (const std::exception& e) {
        rec.faulted = true;
        ++stats_.faults;
        ++consecutive_faults;
        std::cerr << "episode " << ep << " faulted: " << e.what() << "\n";
        save_checkpoints("crash_actor.ckpt", "crash_node.ckpt");
      }
      rec.lambda1 = ms_.lambda_p(0);
      rec.lambda2 = ms_.lambda_p(1);
      rec.zeta = ms_.zeta;
      rec.c_p = ms_.c_p;
      rec.model_loss = ep_loss_count_ > 0 ? ep_loss_sum_ / static_cast<double>(ep_loss_count_)
                                          : last_model_loss_;
      records_.push_back(rec);
      write_csv_row(rec);
      if (cfg_.checkpoint_every > 0 && ep % cfg_.checkpoint_every == 0)
        save_checkpoints("actor.ckpt", "node.ckpt");
      if (consecutive_faults >= 5) {
        save_checkpoints("actor.ckpt", "node.ckpt");
        csv_.close();
        throw std::runtime_error("aborting after 5 consecutive faulted episodes");
      }
    }
  }
  save_checkpoints("actor.ckpt", "node.ckpt");
  csv_.close();
}

void Trainer::collect_warmup() {
  std::uniform_real_distribution<double> du(-cfg_.env.u_max, cfg_.env.u_max);
  for (int e = 0; e < cfg_.warmup_episodes; ++e) {
    env_.reset(rng_reset_);
    ++global_episode_;
    for (int s = 0; s < cfg_.env.episode_steps; ++s) {
      const double t = env_.time();
      const Eigen::VectorXd x = env_.state();
      const StepOutcome out = env_.step(du(rng_warmup_));
      store(t, x, out.u_applied, out, s);
    }
  }
}

void Trainer::pretrain_node() {
  if (buffer_.size() == 0) return;
  const std::size_t count = buffer_.size();
  Eigen::RowVectorXd times(count);
  Eigen::MatrixXd states(node_.state_dim, count);
  Eigen::MatrixXd controls(node_.control_dim, count);
  for (std::size_t i = 0; i < count; ++i) {
    const Transition& tr = buffer_.at(i);
    times(static_cast<Eigen::Index>(i)) = tr.t;
    states.col(static_cast<Eigen::Index>(i)) = tr.x;
    controls.col(static_cast<Eigen::Index>(i)) = tr.u;
  }
  fit_input_conditioning(node_, times, states, controls);

  for (int k = 0; k < cfg_.node_pretrain_steps; ++k) {
    bool ok = false;
    const TrajectoryBatch tb = sample_windows(cfg_.node_horizon, cfg_.node_batch, rng_windows_, ok);
    if (!ok) break;
    last_model_loss_ = node_train_step(node_, tb, cfg_.eta1,
                                       cfg_.adaptive ? ad_node_.get() : nullptr,
                                       cfg_.node_squared_loss);
  }
}

void Trainer::run_episode(EpisodeRecord& rec) {
  ep_loss_sum_ = 0.0;
  ep_loss_count_ = 0;
  env_.reset(rng_reset_);
  ++global_episode_;
  switch_.reset();
  prev_backup_ = false;
  prev_in_zone_ = false;

  for (int step = 0; step < cfg_.env.episode_steps; ++step) {
    ++n_;
    ++stats_.env_steps;
    if (buffer_.size() >= static_cast<std::size_t>(cfg_.batch_size)) update_block();

    const bool in_zone = backup_zone(env_.state(), cfg_.env);
    if (in_zone && !prev_in_zone_) ++stats_.backup_zone_entries;
    prev_in_zone_ = in_zone;
    const bool use_b = mode_ == ConstraintMode::On && switch_.use_backup(in_zone);
    const double t = env_.time();
    const Eigen::VectorXd x = env_.state();
    const double u = use_b ? policy_draw(backup_, x, rng_action_).first(0)
                           : policy_draw(policy_, x, rng_action_).first(0);
    const StepOutcome out = env_.step(u);

    rec.cum_reward += out.reward;
    rec.cum_cost += out.cost;
    if (out.violation) ++rec.violations;
    if (use_b) {
      ++rec.backup_steps;
      ++stats_.backup_steps;
      if (!prev_backup_) {
        ++rec.backup_activations;
        ++stats_.backup_activations;
      }
    } else {
      store(t, x, out.u_applied, out, step);
    }
    prev_backup_ = use_b;
  }
}

void Trainer::update_block() {
  const int m = policy_.control_dim();
  const int nc = static_cast<int>(cbfs_.size());

  if (n_ % cfg_.n_m == 0) node_update();

  const auto idx =
      buffer_.sample_indices(static_cast<std::size_t>(cfg_.batch_size), rng_batch_main_);
  const TransitionBatch batch = gather(buffer_, idx);
  const int bcols = static_cast<int>(batch.size());

  // Constraint residuals are built before the critic step, so the Lyapunov
  // weights they were evaluated with are kept for the matching reverse pass.
  ConstraintForward fwd;
  if (mode_ != ConstraintMode::Off) {
    lyap_at_construction_ = critics_.lyapunov;
    std::vector<Eigen::MatrixXd> xi(static_cast<std::size_t>(constraint_depth_));
    for (auto& block : xi) block = draw_standard_normal(m, bcols, rng_xi_constraints_);
    constraint_forward(policy_, node_, cbfs_, &lyap_at_construction_, cfg_.beta, batch.t, batch.x,
                       xi, fwd);
  }

  const Eigen::MatrixXd xi_next = draw_standard_normal(m, bcols, rng_xi_critic_);
  QLossResult ql = q_loss(critics_, policy_, alpha_p(), batch, cfg_.gamma, xi_next);
  apply_step(critics_.q1, ql.grad_q1, cfg_.eta2, cfg_.adaptive, ad_q1_.get());
  apply_step(critics_.q2, ql.grad_q2, cfg_.eta2, cfg_.adaptive, ad_q2_.get());
  LyapunovLossResult ll = lyapunov_loss(critics_, batch, cfg_.gamma_c);
  apply_step(critics_.lyapunov, ll.grad, cfg_.eta2, cfg_.adaptive, ad_lyap_.get());
  target_update(critics_, cfg_.tau);
  ++stats_.critic_updates;

  const Eigen::MatrixXd xi_pol = draw_standard_normal(m, bcols, rng_xi_policy_);
  PolicyObjectiveResult po = policy_objective(policy_, critics_, alpha_p(), batch.x, xi_pol);
  Eigen::VectorXd f_used = Eigen::VectorXd::Zero(nc);
  double g_used = 0.0;
  if (mode_ == ConstraintMode::On) {
    f_used = fwd.agg.f;
    g_used = fwd.agg.g;
    const LagrangianValue lv = primary_lagrangian_terms(po.value, f_used, g_used, ms_);
    constraint_backward(policy_, node_, cbfs_, &lyap_at_construction_, fwd, lv.f_weights,
                        lv.g_weight, po.grad);
  } else if (mode_ == ConstraintMode::Zeroed) {
    constraint_backward(policy_, node_, cbfs_, &lyap_at_construction_, fwd,
                        Eigen::VectorXd::Zero(nc), 0.0, po.grad);
  }
  apply_step(policy_.net, po.grad, cfg_.eta3, cfg_.adaptive, ad_policy_.get());
  const AlphaLossResult al = alpha_loss_from_logp(alpha_p(), po.log_prob, cfg_.entropy_target);
  if (cfg_.adaptive)
    adam_step_scalar(log_alpha_p_, al.grad_log_alpha, cfg_.eta3, ad_alpha_p_);
  else
    log_alpha_p_ -= cfg_.eta3 * al.grad_log_alpha;
  ++stats_.policy_updates;

  if (mode_ == ConstraintMode::Off) return;

  grow_primary_penalty(ms_);
  if (n_ % cfg_.n_l == 0) {
    update_primary_multipliers(ms_, f_used, g_used);
    ++stats_.multiplier_updates;
  }

  if (n_ % cfg_.n_b == 0) {
    const auto bidx =
        buffer_.sample_indices(static_cast<std::size_t>(cfg_.batch_size), rng_batch_backup_);
    const TransitionBatch bb = gather(buffer_, bidx);
    const int bbc = static_cast<int>(bb.size());
    const Eigen::MatrixXd xi_b = draw_standard_normal(m, bbc, rng_xi_backup_);
    PolicyObjectiveResult bo = policy_objective(backup_, critics_, alpha_b(), bb.x, xi_b);
    ConstraintForward bfwd;
    std::vector<Eigen::MatrixXd> xib(static_cast<std::size_t>(constraint_depth_));
    for (auto& block : xib) block = draw_standard_normal(m, bbc, rng_xi_backup_);
    constraint_forward(backup_, node_, cbfs_, nullptr, cfg_.beta, bb.t, bb.x, xib, bfwd);
    Eigen::VectorXd fb_used = Eigen::VectorXd::Zero(nc);
    if (mode_ == ConstraintMode::On) {
      fb_used = bfwd.agg.f;
      const LagrangianValue bv = backup_lagrangian_terms(bo.value, fb_used, ms_);
      constraint_backward(backup_, node_, cbfs_, nullptr, bfwd, bv.f_weights, 0.0, bo.grad);
    } else {
      constraint_backward(backup_, node_, cbfs_, nullptr, bfwd, Eigen::VectorXd::Zero(nc), 0.0,
                          bo.grad);
    }
    apply_step(backup_.net, bo.grad, cfg_.eta3, cfg_.adaptive, ad_backup_.get());
    const AlphaLossResult ab = alpha_loss_from_logp(alpha_b(), bo.log_prob, cfg_.entropy_target);
    if (cfg_.adaptive)
      adam_step_scalar(log_alpha_b_, ab.grad_log_alpha, cfg_.eta3, ad_alpha_b_);
    else
      log_alpha_b_ -= cfg_.eta3 * ab.grad_log_alpha;
    ++stats_.backup_updates;
    grow_backup_penalty(ms_);
    if (n_ % (static_cast<long>(cfg_.n_b) * cfg_.n_l) == 0) {
      update_backup_multipliers(ms_, fb_used);
      ++stats_.backup_multiplier_updates;
    }
  }
}

bool Trainer::node_update() {
  bool ok = false;
  const TrajectoryBatch tb = sample_windows(cfg_.node_horizon, cfg_.node_batch, rng_windows_, ok);
  if (!ok) return false;
  const double loss = node_train_step(node_, tb, cfg_.eta1,
                                      cfg_.adaptive ? ad_node_.get() : nullptr,
                                      cfg_.node_squared_loss);
  last_model_loss_ = loss;
  ep_loss_sum_ += loss;
  ++ep_loss_count_;
  ++stats_.node_updates;
  return true;
}

TrajectoryBatch Trainer::sample_windows(int horizon, int count, std::mt19937_64& rng, bool& ok) {
  TrajectoryBatch tb;
  ok = false;
  if (horizon < 1 || buffer_.size() == 0) return tb;

  std::uniform_int_distribution<std::size_t> pick(0, buffer_.size() - 1);
  std::vector<std::size_t> starts;
  starts.reserve(static_cast<std::size_t>(count));
  const long max_tries = 50L * count;
  for (long tries = 0; static_cast<int>(starts.size()) < count && tries < max_tries; ++tries) {
    const std::size_t start = pick(rng);
    std::size_t cur = start;
    bool good = true;
    for (int k = 1; k < horizon; ++k) {
      const Transition& a = buffer_.at(cur);
      const std::size_t nxt = buffer_.next_slot(cur);
      if (nxt >= buffer_.size()) {
        good = false;
        break;
      }
      const Transition& b = buffer_.at(nxt);
      if (b.episode != a.episode || b.step != a.step + 1) {
        good = false;
        break;
      }
      cur = nxt;
    }
    if (good) starts.push_back(start);
  }
  if (starts.empty()) return tb;

  const int bsz = static_cast<int>(starts.size());
  tb.t0.resize(bsz);
  tb.states.assign(static_cast<std::size_t>(horizon) + 1,
                   Eigen::MatrixXd(node_.state_dim, bsz));
  tb.controls.assign(static_cast<std::size_t>(horizon),
                     Eigen::MatrixXd(node_.control_dim, bsz));
  for (int j = 0; j < bsz; ++j) {
    std::size_t cur = starts[static_cast<std::size_t>(j)];
    tb.t0(j) = buffer_.at(cur).t;
    for (int k = 0; k < horizon; ++k) {
      const Transition& tr = buffer_.at(cur);
      tb.states[static_cast<std::size_t>(k)].col(j) = tr.x;
      tb.controls[static_cast<std::size_t>(k)].col(j) = tr.u;
      if (k + 1 == horizon) tb.states[static_cast<std::size_t>(k) + 1].col(j) = tr.x_next;
      cur = buffer_.next_slot(cur);
    }
  }
  ok = true;
  return tb;
}

void Trainer::store(double t, const Eigen::VectorXd& x, double u, const StepOutcome& out,
                    int step) {
  Transition tr;
  tr.t = t;
  tr.x = x;
  tr.u = Eigen::VectorXd::Constant(1, u);
  tr.r = out.reward;
  tr.c = out.cost;
  tr.x_next = out.next_state;
  tr.done = false;  // episodes end on the step limit only
  tr.episode = global_episode_;
  tr.step = step;
  buffer_.push(std::move(tr));
  ++stats_.transitions_stored;
}

void Trainer::write_csv_row(const EpisodeRecord& r) {
  csv_ << r.episode << ',' << r.cum_reward << ',' << r.cum_cost << ',' << r.violations << ','
       << r.backup_steps << ',' << r.lambda1 << ',' << r.lambda2 << ',' << r.zeta << ',' << r.c_p
       << ',' << r.model_loss << '\n';
  csv_.flush();
  if (!csv_) throw std::runtime_error("write failed: " + cfg_.out_dir + "/training.csv");
}

void Trainer::save_actor(const std::string& path) const {
  save_actor_checkpoint(ActorState{policy_, backup_, critics_, log_alpha_p_, log_alpha_b_, ms_},
                        path);
}

void Trainer::save_node(const std::string& path) const { save_node_checkpoint(node_, path); }

void Trainer::save_checkpoints(const std::string& actor_name, const std::string& node_name) const {
  save_actor(cfg_.out_dir + "/" + actor_name);
  save_node(cfg_.out_dir + "/" + node_name);
}

namespace {

void put_policy(Checkpoint& ck, const std::string& prefix, const PolicyNet& p) {
  ck.put_mlp(prefix, p.net);
  ck.put_scalar(prefix + ".bound", p.bound);
  ck.put_scalar(prefix + ".log_std_min", p.log_std_min);
  ck.put_scalar(prefix + ".log_std_max", p.log_std_max);
}

PolicyNet get_policy(const Checkpoint& ck, const std::string& prefix) {
  PolicyNet p;
  p.net = ck.get_mlp(prefix);
  p.bound = ck.get_scalar(prefix + ".bound");
  p.log_std_min = ck.get_scalar(prefix + ".log_std_min");
  p.log_std_max = ck.get_scalar(prefix + ".log_std_max");
  return p;
}

}  // namespace

void save_actor_checkpoint(const ActorState& s, const std::string& path) {
  Checkpoint ck;
  put_policy(ck, "policy", s.policy);
  put_policy(ck, "backup", s.backup);
  ck.put_mlp("q1", s.critics.q1);
  ck.put_mlp("q2", s.critics.q2);
  ck.put_mlp("q1_targ", s.critics.q1_targ);
  ck.put_mlp("q2_targ", s.critics.q2_targ);
  ck.put_mlp("lyapunov", s.critics.lyapunov);
  ck.put_mlp("lyapunov_targ", s.critics.lyapunov_targ);
  ck.put_scalar("log_alpha_p", s.log_alpha_p);
  ck.put_scalar("log_alpha_b", s.log_alpha_b);
  ck.put("lambda_p", s.ms.lambda_p);
  ck.put("lambda_b", s.ms.lambda_b);
  ck.put_scalar("zeta", s.ms.zeta);
  ck.put_scalar("c_p", s.ms.c_p);
  ck.put_scalar("c_b", s.ms.c_b);
  ck.put_scalar("rho_c", s.ms.rho_c);
  ck.put_scalar("c_max", s.ms.c_max);
  ck.save(path);
}

ActorState load_actor_checkpoint(const std::string& path) {
  const Checkpoint ck = Checkpoint::load(path);
  ActorState s;
  s.policy = get_policy(ck, "policy");
  s.backup = get_policy(ck, "backup");
  s.critics.q1 = ck.get_mlp("q1");
  s.critics.q2 = ck.get_mlp("q2");
  s.critics.q1_targ = ck.get_mlp("q1_targ");
  s.critics.q2_targ = ck.get_mlp("q2_targ");
  s.critics.lyapunov = ck.get_mlp("lyapunov");
  s.critics.lyapunov_targ = ck.get_mlp("lyapunov_targ");
  s.log_alpha_p = ck.get_scalar("log_alpha_p");
  s.log_alpha_b = ck.get_scalar("log_alpha_b");
  s.ms.lambda_p = ck.get("lambda_p");
  s.ms.lambda_b = ck.get("lambda_b");
  s.ms.zeta = ck.get_scalar("zeta");
  s.ms.c_p = ck.get_scalar("c_p");
  s.ms.c_b = ck.get_scalar("c_b");
  s.ms.rho_c = ck.get_scalar("rho_c");
  s.ms.c_max = ck.get_scalar("c_max");
  s.ms.validate();
  return s;
}

void save_node_checkpoint(const NodeModel& m, const std::string& path) {
  Checkpoint ck;
  ck.put_mlp("net", m.net);
  ck.put("in_shift", m.in_shift);
  ck.put("in_scale", m.in_scale);
  ck.put_scalar("state_dim", m.state_dim);
  ck.put_scalar("control_dim", m.control_dim);
  ck.put_scalar("scheme", m.integrator.scheme == Scheme::Rk4 ? 0.0 : 1.0);
  ck.put_scalar("substeps", m.integrator.substeps);
  ck.put_scalar("interval", m.integrator.interval);
  ck.save(path);
}

NodeModel load_node_checkpoint(const std::string& path) {
  const Checkpoint ck = Checkpoint::load(path);
  NodeModel m;
  m.net = ck.get_mlp("net");
  m.in_shift = ck.get("in_shift");
  m.in_scale = ck.get("in_scale");
  m.state_dim = static_cast<int>(ck.get_scalar("state_dim"));
  m.control_dim = static_cast<int>(ck.get_scalar("control_dim"));
  m.integrator.scheme = ck.get_scalar("scheme") == 0.0 ? Scheme::Rk4 : Scheme::Euler;
  m.integrator.substeps = static_cast<int>(ck.get_scalar("substeps"));
  m.integrator.interval = ck.get_scalar("interval");
  m.integrator.validate();
  if (m.in_shift.size() != m.input_dim() || m.in_scale.size() != m.input_dim())
    throw std::runtime_error("node checkpoint: conditioning size mismatch in " + path);
  return m;
}

SysIdResult run_sysid(const TrainConfig& cfg) {
  cfg.validate();
  if (cfg.episodes < 2)
    throw std::invalid_argument("run_sysid: need at least 2 episodes for a holdout split");

  std::mt19937_64 rng_init(derive_seed(cfg.seed, kInit));
  std::mt19937_64 rng_reset(derive_seed(cfg.seed, kSysIdReset));
  std::mt19937_64 rng_controls(derive_seed(cfg.seed, kSysIdControls));
  std::mt19937_64 rng_pick(derive_seed(cfg.seed, kSysIdPick));

  struct Episode {
    std::vector<double> t;
    std::vector<Eigen::VectorXd> x;  // steps + 1 snapshots
    std::vector<double> u;
  };
  CarEnv env(cfg.env);
  std::uniform_real_distribution<double> du(-cfg.env.u_max, cfg.env.u_max);
  std::vector<Episode> eps(static_cast<std::size_t>(cfg.episodes));
  for (auto& ep : eps) {
    ep.x.push_back(env.reset(rng_reset));
    for (int s = 0; s < cfg.env.episode_steps; ++s) {
      ep.t.push_back(env.time());
      const StepOutcome out = env.step(du(rng_controls));
      ep.u.push_back(out.u_applied);
      ep.x.push_back(out.next_state);
    }
  }

  // Every fifth episode is held out; force one holdout for tiny runs.
  std::vector<bool> held(eps.size(), false);
  int holdout_count = 0;
  for (std::size_t e = 0; e < eps.size(); ++e)
    if ((e + 1) % 5 == 0) {
      held[e] = true;
      ++holdout_count;
    }
  if (holdout_count == 0) held[eps.size() - 1] = true;

  const std::vector<int> hidden(static_cast<std::size_t>(cfg.hidden_depth), cfg.hidden_width);
  NodeModel model = make_node_model(kStateDim, 1, hidden, cfg.env.integrator(), rng_init);

  std::size_t train_samples = 0;
  for (std::size_t e = 0; e < eps.size(); ++e)
    if (!held[e]) train_samples += eps[e].u.size();
  Eigen::RowVectorXd times(train_samples);
  Eigen::MatrixXd states(kStateDim, train_samples);
  Eigen::MatrixXd controls(1, train_samples);
  std::size_t w = 0;
  for (std::size_t e = 0; e < eps.size(); ++e) {
    if (held[e]) continue;
    for (std::size_t s = 0; s < eps[e].u.size(); ++s, ++w) {
      times(static_cast<Eigen::Index>(w)) = eps[e].t[s];
      states.col(static_cast<Eigen::Index>(w)) = eps[e].x[s];
      controls(0, static_cast<Eigen::Index>(w)) = eps[e].u[s];
    }
  }
  fit_input_conditioning(model, times, states, controls);

  auto windows_of = [&](bool holdout, int horizon) {
    std::vector<std::pair<std::size_t, int>> wins;
    for (std::size_t e = 0; e < eps.size(); ++e) {
      if (held[e] != holdout) continue;
      for (int s = 0; s + horizon <= static_cast<int>(eps[e].u.size()); ++s)
        wins.emplace_back(e, s);
    }
    return wins;
  };
  auto make_batch = [&](const std::vector<std::pair<std::size_t, int>>& picks, int horizon) {
    TrajectoryBatch tb;
    const int bsz = static_cast<int>(picks.size());
    tb.t0.resize(bsz);
    tb.states.assign(static_cast<std::size_t>(horizon) + 1, Eigen::MatrixXd(kStateDim, bsz));
    tb.controls.assign(static_cast<std::size_t>(horizon), Eigen::MatrixXd(1, bsz));
    for (int j = 0; j < bsz; ++j) {
      const auto [e, s] = picks[static_cast<std::size_t>(j)];
      tb.t0(j) = eps[e].t[static_cast<std::size_t>(s)];
      for (int k = 0; k <= horizon; ++k)
        tb.states[static_cast<std::size_t>(k)].col(j) = eps[e].x[static_cast<std::size_t>(s + k)];
      for (int k = 0; k < horizon; ++k)
        tb.controls[static_cast<std::size_t>(k)](0, j) = eps[e].u[static_cast<std::size_t>(s + k)];
    }
    return tb;
  };

  const auto train_wins = windows_of(false, cfg.node_horizon);
  if (train_wins.empty()) throw std::runtime_error("run_sysid: no training windows");
  std::unique_ptr<AdamState> adam;
  if (cfg.adaptive) adam = std::make_unique<AdamState>(make_adam_like(model.net));

  SysIdResult res;
  res.gradient_steps = cfg.node_pretrain_steps;
  res.train_windows = static_cast<long>(train_wins.size());
  std::uniform_int_distribution<std::size_t> pick(0, train_wins.size() - 1);
  std::vector<std::pair<std::size_t, int>> picks(static_cast<std::size_t>(cfg.node_batch));
  for (int k = 0; k < cfg.node_pretrain_steps; ++k) {
    for (auto& p : picks) p = train_wins[pick(rng_pick)];
    res.final_train_loss = node_train_step(model, make_batch(picks, cfg.node_horizon), cfg.eta1,
                                           adam.get(), cfg.node_squared_loss);
  }

  const auto h1 = windows_of(true, 1);
  const auto h2 = windows_of(true, 2);
  if (h1.empty() || h2.empty()) throw std::runtime_error("run_sysid: no holdout windows");
  res.holdout_windows = static_cast<long>(h1.size());
  res.one_step_l1 = model_loss(model, make_batch(h1, 1));
  res.two_step_l1 = model_loss(model, make_batch(h2, 2));
  return res;
}

EvalSummary evaluate_policy(const PolicyNet& policy, const EnvConfig& envc, int episodes,
                            unsigned long long seed,
                            std::vector<TrajectoryRow>* first_trajectory) {
  EvalSummary sum;
  sum.episodes = episodes;
  sum.min_h1 = std::numeric_limits<double>::infinity();
  sum.min_h2 = std::numeric_limits<double>::infinity();
  std::mt19937_64 rng(derive_seed(seed, kEval));
  CarEnv env(envc);
  for (int e = 0; e < episodes; ++e) {
    env.reset(rng);
    for (int s = 0; s < envc.episode_steps; ++s) {
      const double t = env.time();
      const Eigen::VectorXd x = env.state();
      const double u = policy_mean_action(policy, x)(0, 0);
      const StepOutcome out = env.step(u);
      sum.mean_reward += out.reward;
      sum.mean_cost += out.cost;
      if (out.violation) ++sum.violations;
      sum.min_h1 = std::min(sum.min_h1, out.h1);
      sum.min_h2 = std::min(sum.min_h2, out.h2);
      if (e == 0 && first_trajectory)
        first_trajectory->push_back(
            TrajectoryRow{t, x, out.u_applied, out.reward, out.cost, out.h1, out.h2,
                          out.violation, false});
    }
  }
  if (episodes > 0) {
    sum.mean_reward /= episodes;
    sum.mean_cost /= episodes;
  } else {
    sum.min_h1 = 0.0;
    sum.min_h2 = 0.0;
  }
  return sum;
}

}  // namespace nlbac
