#include "CLI11.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "nlbac/car_env.hpp"
#include "nlbac/config.hpp"
#include "nlbac/trainer.hpp"

namespace {

int cmd_train(const std::string& cfg_path, long long seed, const std::string& out_dir,
              int episodes) {
  nlbac::TrainConfig cfg = nlbac::parse_config_file(cfg_path);
  if (seed >= 0) cfg.seed = static_cast<unsigned long long>(seed);
  if (!out_dir.empty()) cfg.out_dir = out_dir;
  if (episodes >= 0) cfg.episodes = episodes;

  nlbac::Trainer trainer(cfg);
  trainer.run();

  const auto& st = trainer.stats();
  const auto& recs = trainer.records();
  std::cout << "episodes " << recs.size() << ", env steps " << st.env_steps << ", transitions "
            << st.transitions_stored << "\n"
            << "updates: model " << st.node_updates << ", critic " << st.critic_updates
            << ", policy " << st.policy_updates << ", multiplier " << st.multiplier_updates
            << ", backup " << st.backup_updates << " (multiplier " << st.backup_multiplier_updates
            << ")\n"
            << "backup control: " << st.backup_steps << " steps, " << st.backup_activations
            << " activations; faults " << st.faults << "\n";
  if (!recs.empty()) {
    const auto& last = recs.back();
    std::cout << "last episode: reward " << last.cum_reward << ", cost " << last.cum_cost
              << ", violations " << last.violations << ", model loss " << last.model_loss << "\n";
  }
  std::cout << "wrote " << cfg.out_dir << "/training.csv, config.txt, actor.ckpt, node.ckpt\n";
  return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& cfg_path, int episodes,
             unsigned long long seed, const std::string& traj_path) {
  nlbac::TrainConfig cfg;
  std::string resolved = cfg_path;
  if (resolved.empty()) {
    const auto sibling = std::filesystem::path(ckpt).parent_path() / "config.txt";
    if (std::filesystem::exists(sibling)) resolved = sibling.string();
  }
  if (!resolved.empty()) cfg = nlbac::parse_config_file(resolved);

  const nlbac::ActorState actor = nlbac::load_actor_checkpoint(ckpt);
  std::vector<nlbac::TrajectoryRow> rows;
  const nlbac::EvalSummary sum = nlbac::evaluate_policy(
      actor.policy, cfg.env, episodes, seed, traj_path.empty() ? nullptr : &rows);
  std::cout << "episodes " << sum.episodes << "\n"
            << "mean cumulative reward " << sum.mean_reward << "\n"
            << "mean cumulative cost " << sum.mean_cost << "\n"
            << "violations " << sum.violations << "\n"
            << "min h1 " << sum.min_h1 << ", min h2 " << sum.min_h2 << "\n";
  if (!traj_path.empty()) {
    nlbac::write_trajectory_csv(traj_path, rows);
    std::cout << "wrote " << traj_path << "\n";
  }
  return 0;
}

int cmd_sysid(const std::string& cfg_path) {
  const nlbac::TrainConfig cfg = nlbac::parse_config_file(cfg_path);
  const nlbac::SysIdResult res = nlbac::run_sysid(cfg);
  std::cout << "gradient steps " << res.gradient_steps << ", train windows " << res.train_windows
            << ", holdout windows " << res.holdout_windows << "\n"
            << "final train loss " << res.final_train_loss << "\n"
            << "holdout one-step L1 " << res.one_step_l1 << "\n"
            << "holdout two-step L1 " << res.two_step_l1 << "\n";
  return 0;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

int cmd_plotdata(const std::string& log_path) {
  std::ifstream in(log_path);
  if (!in) throw std::runtime_error("cannot open " + log_path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty log: " + log_path);
  const auto header = split_csv(line);
  auto col = [&](const std::string& name) {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw std::runtime_error("column '" + name + "' missing in " + log_path);
  };
  const std::size_t c_ep = col("episode"), c_rew = col("cum_reward"), c_vio = col("violations");

  struct Row {
    long episode;
    double reward, violations;
  };
  std::vector<Row> rows;
  for (long lineno = 2; std::getline(in, line); ++lineno) {
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() <= std::max({c_ep, c_rew, c_vio}))
      throw std::runtime_error(log_path + ":" + std::to_string(lineno) + ": short row");
    rows.push_back({std::stol(cells[c_ep]), std::stod(cells[c_rew]), std::stod(cells[c_vio])});
  }

  std::cout << "episode,cum_reward,violations,reward_ma10,violations_ma10\n";
  double rew_sum = 0.0, vio_sum = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    rew_sum += rows[i].reward;
    vio_sum += rows[i].violations;
    if (i >= 10) {
      rew_sum -= rows[i - 10].reward;
      vio_sum -= rows[i - 10].violations;
    }
    const double win = static_cast<double>(std::min<std::size_t>(i + 1, 10));
    std::cout << rows[i].episode << ',' << rows[i].reward << ',' << rows[i].violations << ','
              << rew_sum / win << ',' << vio_sum / win << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Safe actor-critic trainer for the five-car following task"};
  app.require_subcommand(1);

  std::string train_cfg, train_out;
  long long train_seed = -1;
  int train_episodes = -1;
  auto* train = app.add_subcommand("train", "run the constrained training loop");
  train->add_option("--config", train_cfg, "config file")->required()->check(CLI::ExistingFile);
  train->add_option("--seed", train_seed, "override the config seed");
  train->add_option("--out", train_out, "override the output directory");
  train->add_option("--episodes", train_episodes, "override the episode count");

  std::string eval_ckpt, eval_cfg, eval_traj;
  int eval_episodes = 0;
  unsigned long long eval_seed = 0;
  auto* ev = app.add_subcommand("eval", "roll out a saved policy with its mean action");
  ev->add_option("--checkpoint", eval_ckpt, "actor checkpoint")
      ->required()
      ->check(CLI::ExistingFile);
  ev->add_option("--episodes", eval_episodes, "episodes to roll")->required();
  ev->add_option("--config", eval_cfg, "config file (default: config.txt beside the checkpoint)");
  ev->add_option("--seed", eval_seed, "evaluation seed");
  ev->add_option("--trajectory", eval_traj, "write the first episode trajectory CSV here");

  std::string sysid_cfg;
  auto* sy = app.add_subcommand("sysid", "train the dynamics model alone on random-control data");
  sy->add_option("--config", sysid_cfg, "config file")->required()->check(CLI::ExistingFile);

  std::string plot_log;
  auto* pd = app.add_subcommand("plotdata",
                                "emit per-episode reward/violation columns from a training log");
  pd->add_option("--log", plot_log, "training CSV")->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return cmd_train(train_cfg, train_seed, train_out, train_episodes);
    if (*ev) return cmd_eval(eval_ckpt, eval_cfg, eval_episodes, eval_seed, eval_traj);
    if (*sy) return cmd_sysid(sysid_cfg);
    if (*pd) return cmd_plotdata(plot_log);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
