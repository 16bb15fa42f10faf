#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "nlbac/trainer.hpp"

using namespace nlbac;

namespace fs = std::filesystem;

namespace {

TrainConfig tiny_cfg(const std::string& out_dir, const std::string& mode = "on") {
  TrainConfig cfg;
  cfg.seed = 11;
  cfg.episodes = 2;
  cfg.warmup_episodes = 1;
  cfg.batch_size = 8;
  cfg.buffer_capacity = 4000;
  cfg.hidden_width = 8;
  cfg.hidden_depth = 1;
  cfg.node_batch = 8;
  cfg.node_horizon = 2;
  cfg.node_pretrain_steps = 10;
  cfg.env.episode_steps = 12;
  cfg.constraint_mode = mode;
  cfg.out_dir = out_dir;
  return cfg;
}

fs::path fresh_dir(const char* name) {
  const fs::path p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  return p;
}

bool params_equal(const MlpParams& a, const MlpParams& b) {
  if (param_count(a) != param_count(b)) return false;
  for (std::size_t i = 0; i < param_count(a); ++i)
    if (get_param(a, i) != get_param(b, i)) return false;
  return true;
}

}  // namespace

TEST_CASE("controller switch enforces the dwell budget") {
  ControllerSwitch sw(2);
  CHECK(sw.dwell_left() == 2);
  CHECK(sw.use_backup(true));   // 1st backup step
  CHECK(sw.use_backup(true));   // 2nd, budget exhausted
  CHECK_FALSE(sw.use_backup(true));  // stuck in zone: primary takes over
  CHECK_FALSE(sw.use_backup(true));
  CHECK_FALSE(sw.use_backup(false));  // leaving the zone re-arms the budget
  CHECK(sw.dwell_left() == 2);
  CHECK(sw.use_backup(true));
  CHECK(sw.dwell_left() == 1);

  ControllerSwitch one(1);
  CHECK(one.use_backup(true));
  CHECK_FALSE(one.use_backup(true));
  one.reset();
  CHECK(one.use_backup(true));
}

TEST_CASE("outside the zone the switch never engages") {
  ControllerSwitch sw(5);
  for (int k = 0; k < 10; ++k) CHECK_FALSE(sw.use_backup(false));
  CHECK(sw.dwell_left() == 5);
}

TEST_CASE("stream seeds are deterministic and collision-free") {
  std::set<unsigned long long> seen;
  for (unsigned long long s = 0; s < 32; ++s) {
    const auto v = derive_seed(1234, s);
    CHECK(v == derive_seed(1234, s));
    CHECK(seen.insert(v).second);
  }
  CHECK(derive_seed(1, 0) != derive_seed(2, 0));
  CHECK(derive_seed(0, 0) != 0);
}

TEST_CASE("a short run writes config, log, checkpoints, and per-episode records") {
  const fs::path dir = fresh_dir("nlbac_t_run");
  const TrainConfig cfg = tiny_cfg(dir.string());
  Trainer tr(cfg);
  tr.run();

  CHECK(tr.records().size() == 2);
  for (const auto& rec : tr.records()) {
    CHECK_FALSE(rec.faulted);
    CHECK(std::isfinite(rec.cum_reward));
    CHECK(std::isfinite(rec.cum_cost));
    CHECK(rec.zeta >= 0.0);
    CHECK(rec.lambda1 >= 0.0);
    CHECK(rec.lambda2 >= 0.0);
    CHECK(rec.c_p >= 1.0);
    CHECK(std::isfinite(rec.model_loss));
  }
  CHECK(tr.stats().env_steps == 24);
  CHECK(tr.stats().faults == 0);

  CHECK(fs::exists(dir / "config.txt"));
  CHECK(fs::exists(dir / "training.csv"));
  CHECK(fs::exists(dir / "actor.ckpt"));
  CHECK(fs::exists(dir / "node.ckpt"));

  // saved config parses back to the same settings
  const TrainConfig echo = parse_config_file((dir / "config.txt").string());
  CHECK(echo.seed == cfg.seed);
  CHECK(echo.episodes == cfg.episodes);
  CHECK(echo.constraint_mode == cfg.constraint_mode);
  CHECK(echo.env.episode_steps == cfg.env.episode_steps);

  // the log has one line per episode with the pinned column set
  std::ifstream f(dir / "training.csv");
  std::string line;
  std::getline(f, line);
  CHECK(line ==
        "episode,cum_reward,cum_cost,violations,backup_steps,lambda1,lambda2,zeta,c_p,"
        "model_loss");
  int rows = 0;
  while (std::getline(f, line)) {
    ++rows;
    std::stringstream ss(line);
    std::string cell;
    int fields = 0;
    while (std::getline(ss, cell, ',')) ++fields;
    CHECK(fields == 10);
    CHECK(line.substr(0, 2) == std::to_string(rows) + ",");
  }
  CHECK(rows == 2);
  fs::remove_all(dir);
}

TEST_CASE("identical seeds give bit-identical training runs") {
  const fs::path d1 = fresh_dir("nlbac_t_det1");
  const fs::path d2 = fresh_dir("nlbac_t_det2");
  Trainer a(tiny_cfg(d1.string()));
  Trainer b(tiny_cfg(d2.string()));
  a.run();
  b.run();

  REQUIRE(a.records().size() == b.records().size());
  for (std::size_t i = 0; i < a.records().size(); ++i) {
    CHECK(a.records()[i].cum_reward == b.records()[i].cum_reward);
    CHECK(a.records()[i].cum_cost == b.records()[i].cum_cost);
    CHECK(a.records()[i].violations == b.records()[i].violations);
    CHECK(a.records()[i].backup_steps == b.records()[i].backup_steps);
    CHECK(a.records()[i].zeta == b.records()[i].zeta);
    CHECK(a.records()[i].model_loss == b.records()[i].model_loss);
  }
  CHECK(params_equal(a.policy().net, b.policy().net));
  CHECK(params_equal(a.backup_policy().net, b.backup_policy().net));
  CHECK(params_equal(a.critics().q1, b.critics().q1));
  CHECK(params_equal(a.critics().lyapunov, b.critics().lyapunov));
  CHECK(params_equal(a.node().net, b.node().net));
  CHECK(a.alpha_p() == b.alpha_p());
  CHECK(a.alpha_b() == b.alpha_b());
  CHECK(a.multipliers().c_p == b.multipliers().c_p);
  fs::remove_all(d1);
  fs::remove_all(d2);
}

TEST_CASE("update cadences fire exactly on schedule") {
  SUBCASE("all delays at one") {
    const fs::path dir = fresh_dir("nlbac_t_cad1");
    TrainConfig cfg = tiny_cfg(dir.string());
    cfg.n_m = 1;
    cfg.n_l = 1;
    cfg.n_b = 1;
    Trainer tr(cfg);
    tr.run();
    const TrainStats& st = tr.stats();
    CHECK(st.env_steps == 24);
    CHECK(st.critic_updates == 24);
    CHECK(st.policy_updates == 24);
    CHECK(st.node_updates == 24);
    CHECK(st.multiplier_updates == 24);
    CHECK(st.backup_updates == 24);
    CHECK(st.backup_multiplier_updates == 24);
    CHECK(st.transitions_stored == 12 + 24 - st.backup_steps);
    fs::remove_all(dir);
  }
  SUBCASE("staggered delays") {
    const fs::path dir = fresh_dir("nlbac_t_cad2");
    TrainConfig cfg = tiny_cfg(dir.string());
    cfg.episodes = 1;
    cfg.n_m = 2;
    cfg.n_l = 3;
    cfg.n_b = 4;
    Trainer tr(cfg);
    tr.run();
    const TrainStats& st = tr.stats();
    CHECK(st.env_steps == 12);
    CHECK(st.critic_updates == 12);
    CHECK(st.policy_updates == 12);
    CHECK(st.node_updates == 6);
    CHECK(st.multiplier_updates == 4);
    CHECK(st.backup_updates == 3);
    CHECK(st.backup_multiplier_updates == 1);  // lcm(4, 3) divides only step 12
    fs::remove_all(dir);
  }
}

TEST_CASE("disabling the constraint machinery skips duals and the backup net") {
  const fs::path dir = fresh_dir("nlbac_t_off");
  TrainConfig cfg = tiny_cfg(dir.string(), "off");
  Trainer tr(cfg);
  tr.run();
  const TrainStats& st = tr.stats();
  CHECK(st.critic_updates == 24);
  CHECK(st.policy_updates == 24);
  CHECK(st.node_updates > 0);
  CHECK(st.multiplier_updates == 0);
  CHECK(st.backup_updates == 0);
  CHECK(st.backup_multiplier_updates == 0);
  CHECK(st.backup_steps == 0);
  CHECK(tr.multipliers().c_p == cfg.c_p_init);  // no growth without constraints
  CHECK(tr.multipliers().zeta == cfg.zeta_init);
  fs::remove_all(dir);
}

TEST_CASE("zero episodes still produce a valid config echo and log header") {
  const fs::path dir = fresh_dir("nlbac_t_zero");
  TrainConfig cfg = tiny_cfg(dir.string());
  cfg.episodes = 0;
  Trainer tr(cfg);
  tr.run();
  CHECK(tr.records().empty());
  CHECK(tr.stats().env_steps == 0);
  CHECK(tr.stats().transitions_stored == 0);

  std::ifstream f(dir / "training.csv");
  std::string line;
  CHECK(std::getline(f, line));
  CHECK_FALSE(std::getline(f, line));  // header only
  CHECK_NOTHROW(static_cast<void>(parse_config_file((dir / "config.txt").string())));
  fs::remove_all(dir);
}

TEST_CASE("actor checkpoints restore every trainable quantity bit-exactly") {
  const fs::path dir = fresh_dir("nlbac_t_ckpt");
  Trainer tr(tiny_cfg(dir.string()));
  tr.run();

  const fs::path path = dir / "roundtrip_actor.ckpt";
  tr.save_actor(path.string());
  const ActorState back = load_actor_checkpoint(path.string());

  CHECK(params_equal(back.policy.net, tr.policy().net));
  CHECK(back.policy.bound == tr.policy().bound);
  CHECK(params_equal(back.backup.net, tr.backup_policy().net));
  CHECK(params_equal(back.critics.q1, tr.critics().q1));
  CHECK(params_equal(back.critics.q2, tr.critics().q2));
  CHECK(params_equal(back.critics.q1_targ, tr.critics().q1_targ));
  CHECK(params_equal(back.critics.q2_targ, tr.critics().q2_targ));
  CHECK(params_equal(back.critics.lyapunov, tr.critics().lyapunov));
  CHECK(params_equal(back.critics.lyapunov_targ, tr.critics().lyapunov_targ));
  CHECK(std::exp(back.log_alpha_p) == tr.alpha_p());
  CHECK(std::exp(back.log_alpha_b) == tr.alpha_b());
  CHECK((back.ms.lambda_p - tr.multipliers().lambda_p).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK((back.ms.lambda_b - tr.multipliers().lambda_b).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK(back.ms.zeta == tr.multipliers().zeta);
  CHECK(back.ms.c_p == tr.multipliers().c_p);
  CHECK(back.ms.c_b == tr.multipliers().c_b);
  CHECK(back.ms.rho_c == tr.multipliers().rho_c);
  CHECK(back.ms.c_max == tr.multipliers().c_max);

  // restored policy behaves identically
  std::mt19937_64 rng(3);
  for (int k = 0; k < 5; ++k) {
    Eigen::VectorXd x(kStateDim);
    std::normal_distribution<double> d;
    for (int i = 0; i < kStateDim; ++i) x(i) = 10.0 * d(rng);
    const Eigen::MatrixXd a1 = policy_mean_action(back.policy, x);
    const Eigen::MatrixXd a2 = policy_mean_action(tr.policy(), x);
    CHECK(a1(0, 0) == a2(0, 0));
  }
  fs::remove_all(dir);
}

TEST_CASE("dynamics checkpoints restore predictions bit-exactly") {
  const fs::path dir = fresh_dir("nlbac_t_nck");
  Trainer tr(tiny_cfg(dir.string()));
  tr.run();

  const fs::path path = dir / "roundtrip_node.ckpt";
  tr.save_node(path.string());
  const NodeModel back = load_node_checkpoint(path.string());

  CHECK(back.state_dim == tr.node().state_dim);
  CHECK(back.control_dim == tr.node().control_dim);
  CHECK(back.integrator.substeps == tr.node().integrator.substeps);
  CHECK(back.integrator.interval == tr.node().integrator.interval);
  CHECK(back.integrator.scheme == tr.node().integrator.scheme);
  CHECK((back.in_shift - tr.node().in_shift).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK((back.in_scale - tr.node().in_scale).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK(params_equal(back.net, tr.node().net));

  std::mt19937_64 rng(5);
  std::normal_distribution<double> d;
  Eigen::VectorXd x(kStateDim), u(1);
  for (int i = 0; i < kStateDim; ++i) x(i) = 5.0 * d(rng);
  u(0) = d(rng);
  const Eigen::VectorXd p1 = predict_next(back, 0.3, x, u);
  const Eigen::VectorXd p2 = predict_next(tr.node(), 0.3, x, u);
  CHECK((p1 - p2).lpNorm<Eigen::Infinity>() == 0.0);
  fs::remove_all(dir);
}

TEST_CASE("system identification trains on random rollouts with a holdout split") {
  TrainConfig cfg;
  cfg.seed = 3;
  cfg.episodes = 5;
  cfg.env.episode_steps = 30;
  cfg.hidden_width = 8;
  cfg.hidden_depth = 1;
  cfg.node_batch = 8;
  cfg.node_horizon = 2;
  cfg.node_pretrain_steps = 40;

  const SysIdResult res = run_sysid(cfg);
  CHECK(res.gradient_steps == 40);
  CHECK(res.train_windows > 0);
  CHECK(res.holdout_windows > 0);
  CHECK(std::isfinite(res.final_train_loss));
  CHECK(res.one_step_l1 >= 0.0);
  CHECK(res.two_step_l1 >= 0.0);
  CHECK(std::isfinite(res.two_step_l1));

  const SysIdResult again = run_sysid(cfg);
  CHECK(again.one_step_l1 == res.one_step_l1);
  CHECK(again.two_step_l1 == res.two_step_l1);

  TrainConfig bad = cfg;
  bad.episodes = 1;
  CHECK_THROWS_AS(static_cast<void>(run_sysid(bad)), std::invalid_argument);
}

TEST_CASE("policy evaluation is deterministic and records the first trajectory") {
  std::mt19937_64 rng(9);
  const PolicyNet policy = make_policy(kStateDim, 1, {8}, 20.0, rng);
  EnvConfig env;
  env.episode_steps = 40;

  std::vector<TrajectoryRow> traj;
  const EvalSummary s1 = evaluate_policy(policy, env, 3, 77, &traj);
  const EvalSummary s2 = evaluate_policy(policy, env, 3, 77);
  CHECK(s1.episodes == 3);
  CHECK(s1.mean_reward == s2.mean_reward);
  CHECK(s1.mean_cost == s2.mean_cost);
  CHECK(s1.violations == s2.violations);
  CHECK(s1.min_h1 == s2.min_h1);
  CHECK(s1.min_h2 == s2.min_h2);
  CHECK(std::isfinite(s1.mean_reward));

  REQUIRE(traj.size() == 40);
  CHECK(traj[0].t == 0.0);
  CHECK(traj[1].t == doctest::Approx(env.dt));
  for (const auto& row : traj) {
    CHECK_FALSE(row.backup);
    CHECK(row.state.size() == kStateDim);
    CHECK(std::abs(row.u) <= env.u_max);
  }

  const EvalSummary s3 = evaluate_policy(policy, env, 3, 78);
  CHECK(s3.mean_reward != s1.mean_reward);  // different resets
}
