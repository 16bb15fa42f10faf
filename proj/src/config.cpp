#include "nlbac/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

namespace nlbac {

void TrainConfig::validate() const {
  env.validate();
  if (episodes < 0) throw std::invalid_argument("config: episodes must be >= 0");
  if (warmup_episodes < 0) throw std::invalid_argument("config: warmup_episodes must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("config: batch_size must be >= 1");
  if (buffer_capacity < batch_size)
    throw std::invalid_argument("config: buffer_capacity must hold at least one batch");
  if (hidden_width < 1 || hidden_depth < 1)
    throw std::invalid_argument("config: hidden sizes must be positive");
  if (!(eta1 > 0.0) || !(eta2 > 0.0) || !(eta3 > 0.0))
    throw std::invalid_argument("config: step sizes must be positive");
  if (n_m < 1 || n_l < 1 || n_b < 1)
    throw std::invalid_argument("config: update delays must be >= 1");
  if (!(gamma > 0.0 && gamma < 1.0) || !(gamma_c > 0.0 && gamma_c < 1.0))
    throw std::invalid_argument("config: discounts must lie in (0, 1)");
  if (!(tau > 0.0 && tau <= 1.0)) throw std::invalid_argument("config: tau must lie in (0, 1]");
  if (!(alpha_init > 0.0)) throw std::invalid_argument("config: alpha_init must be positive");
  if (!(beta > 0.0 && beta <= 1.0))
    throw std::invalid_argument("config: beta must lie in (0, 1]");
  if (!(cbf_gamma1 > 0.0 && cbf_gamma1 <= 1.0) || !(cbf_gamma2 > 0.0 && cbf_gamma2 <= 1.0))
    throw std::invalid_argument("config: barrier slopes must lie in (0, 1]");
  if (t_backup < 1) throw std::invalid_argument("config: t_backup must be >= 1");
  if (lambda_init < 0.0 || zeta_init < 0.0)
    throw std::invalid_argument("config: multiplier inits must be >= 0");
  if (!(c_p_init > 0.0) || !(c_b_init > 0.0))
    throw std::invalid_argument("config: penalty inits must be positive");
  if (!(rho_c > 1.0)) throw std::invalid_argument("config: rho_c must exceed 1");
  if (!(c_max >= c_p_init) || !(c_max >= c_b_init))
    throw std::invalid_argument("config: c_max must be at least the initial penalties");
  if (node_batch < 1) throw std::invalid_argument("config: node_batch must be >= 1");
  if (node_horizon < 1) throw std::invalid_argument("config: node_horizon must be >= 1");
  if (node_pretrain_steps < 0)
    throw std::invalid_argument("config: node_pretrain_steps must be >= 0");
  if (checkpoint_every < 0)
    throw std::invalid_argument("config: checkpoint_every must be >= 0");
  mode();  // throws on an unknown constraint_mode
}

ConstraintMode TrainConfig::mode() const {
  if (constraint_mode == "on") return ConstraintMode::On;
  if (constraint_mode == "zeroed") return ConstraintMode::Zeroed;
  if (constraint_mode == "off") return ConstraintMode::Off;
  throw std::invalid_argument("config: constraint_mode must be on, zeroed or off");
}

namespace {

struct Field {
  std::function<void(TrainConfig&, const std::string&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

template <typename T>
T parse_value(const std::string& s);

template <>
double parse_value<double>(const std::string& s) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = std::string::npos;
  }
  if (used != s.size()) throw std::invalid_argument("bad number: " + s);
  return v;
}

template <>
int parse_value<int>(const std::string& s) {
  std::size_t used = 0;
  int v = 0;
  try {
    v = std::stoi(s, &used);
  } catch (const std::exception&) {
    used = std::string::npos;
  }
  if (used != s.size()) throw std::invalid_argument("bad integer: " + s);
  return v;
}

template <>
unsigned long long parse_value<unsigned long long>(const std::string& s) {
  std::size_t used = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(s, &used);
  } catch (const std::exception&) {
    used = std::string::npos;
  }
  if (used != s.size()) throw std::invalid_argument("bad integer: " + s);
  return v;
}

template <>
bool parse_value<bool>(const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw std::invalid_argument("bad boolean: " + s);
}

template <>
std::string parse_value<std::string>(const std::string& s) {
  return s;
}

std::string format_value(double v) {
  std::ostringstream ss;
  ss.precision(17);
  ss << v;
  return ss.str();
}
std::string format_value(int v) { return std::to_string(v); }
std::string format_value(unsigned long long v) { return std::to_string(v); }
std::string format_value(bool v) { return v ? "true" : "false"; }
std::string format_value(const std::string& v) { return v; }

template <typename T>
Field field_of(T TrainConfig::* member) {
  return {[member](TrainConfig& c, const std::string& s) { c.*member = parse_value<T>(s); },
          [member](const TrainConfig& c) { return format_value(c.*member); }};
}

template <typename T>
Field env_field_of(T EnvConfig::* member) {
  return {[member](TrainConfig& c, const std::string& s) { c.env.*member = parse_value<T>(s); },
          [member](const TrainConfig& c) { return format_value(c.env.*member); }};
}

Field scheme_field() {
  return {[](TrainConfig& c, const std::string& s) {
            if (s == "rk4")
              c.env.scheme = Scheme::Rk4;
            else if (s == "euler")
              c.env.scheme = Scheme::Euler;
            else
              throw std::invalid_argument("scheme must be rk4 or euler");
          },
          [](const TrainConfig& c) {
            return std::string(c.env.scheme == Scheme::Rk4 ? "rk4" : "euler");
          }};
}

// Ordered registry; the order is also the config echo layout.
const std::vector<std::pair<std::string, Field>>& registry() {
  static const std::vector<std::pair<std::string, Field>> fields = {
      {"seed", field_of(&TrainConfig::seed)},
      {"episodes", field_of(&TrainConfig::episodes)},
      {"warmup_episodes", field_of(&TrainConfig::warmup_episodes)},
      {"batch_size", field_of(&TrainConfig::batch_size)},
      {"buffer_capacity", field_of(&TrainConfig::buffer_capacity)},
      {"hidden_width", field_of(&TrainConfig::hidden_width)},
      {"hidden_depth", field_of(&TrainConfig::hidden_depth)},
      {"eta1", field_of(&TrainConfig::eta1)},
      {"eta2", field_of(&TrainConfig::eta2)},
      {"eta3", field_of(&TrainConfig::eta3)},
      {"adaptive", field_of(&TrainConfig::adaptive)},
      {"n_m", field_of(&TrainConfig::n_m)},
      {"n_l", field_of(&TrainConfig::n_l)},
      {"n_b", field_of(&TrainConfig::n_b)},
      {"gamma", field_of(&TrainConfig::gamma)},
      {"gamma_c", field_of(&TrainConfig::gamma_c)},
      {"tau", field_of(&TrainConfig::tau)},
      {"entropy_target", field_of(&TrainConfig::entropy_target)},
      {"alpha_init", field_of(&TrainConfig::alpha_init)},
      {"beta", field_of(&TrainConfig::beta)},
      {"cbf_gamma1", field_of(&TrainConfig::cbf_gamma1)},
      {"cbf_gamma2", field_of(&TrainConfig::cbf_gamma2)},
      {"t_backup", field_of(&TrainConfig::t_backup)},
      {"lambda_init", field_of(&TrainConfig::lambda_init)},
      {"zeta_init", field_of(&TrainConfig::zeta_init)},
      {"c_p_init", field_of(&TrainConfig::c_p_init)},
      {"c_b_init", field_of(&TrainConfig::c_b_init)},
      {"rho_c", field_of(&TrainConfig::rho_c)},
      {"c_max", field_of(&TrainConfig::c_max)},
      {"node_batch", field_of(&TrainConfig::node_batch)},
      {"node_horizon", field_of(&TrainConfig::node_horizon)},
      {"node_pretrain_steps", field_of(&TrainConfig::node_pretrain_steps)},
      {"node_squared_loss", field_of(&TrainConfig::node_squared_loss)},
      {"constraint_mode", field_of(&TrainConfig::constraint_mode)},
      {"out_dir", field_of(&TrainConfig::out_dir)},
      {"checkpoint_every", field_of(&TrainConfig::checkpoint_every)},
      {"dt", env_field_of(&EnvConfig::dt)},
      {"v_s", env_field_of(&EnvConfig::v_s)},
      {"k_v", env_field_of(&EnvConfig::k_v)},
      {"k_b", env_field_of(&EnvConfig::k_b)},
      {"d_i", env_field_of(&EnvConfig::d_i)},
      {"brake_gap_23", env_field_of(&EnvConfig::brake_gap_23)},
      {"brake_gap_5", env_field_of(&EnvConfig::brake_gap_5)},
      {"band_low", env_field_of(&EnvConfig::band_low)},
      {"band_high", env_field_of(&EnvConfig::band_high)},
      {"d_desired", env_field_of(&EnvConfig::d_desired)},
      {"bonus", env_field_of(&EnvConfig::bonus)},
      {"delta", env_field_of(&EnvConfig::delta)},
      {"backup_margin", env_field_of(&EnvConfig::backup_margin)},
      {"u_max", env_field_of(&EnvConfig::u_max)},
      {"episode_steps", env_field_of(&EnvConfig::episode_steps)},
      {"gap_min", env_field_of(&EnvConfig::gap_min)},
      {"gap_max", env_field_of(&EnvConfig::gap_max)},
      {"vel_jitter", env_field_of(&EnvConfig::vel_jitter)},
      {"p5_start", env_field_of(&EnvConfig::p5_start)},
      {"substeps", env_field_of(&EnvConfig::substeps)},
      {"scheme", scheme_field()},
  };
  return fields;
}

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

}  // namespace

void apply_config_line(TrainConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& [name, field] : registry()) {
    if (name == key) {
      field.set(cfg, value);
      return;
    }
  }
  throw std::invalid_argument("config: unknown key '" + key + "'");
}

TrainConfig parse_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config file " + path);
  TrainConfig cfg;
  std::string line;
  int line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument(path + ":" + std::to_string(line_no) +
                                  ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      apply_config_line(cfg, key, value);
    } catch (const std::exception& e) {
      throw std::invalid_argument(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

void save_config(const TrainConfig& cfg, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  f << "# training configuration\n";
  for (const auto& [name, field] : registry()) f << name << " = " << field.get(cfg) << '\n';
  if (!f) throw std::runtime_error("write failed: " + path);
}

}  // namespace nlbac
