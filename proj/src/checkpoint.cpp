#include "nlbac/checkpoint.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace nlbac {

namespace {
constexpr const char* kHeader = "nlbac-checkpoint v1";
}

void Checkpoint::put(const std::string& name, const Eigen::MatrixXd& value) {
  for (auto& e : entries_)
    if (e.first == name) {
      e.second = value;
      return;
    }
  entries_.emplace_back(name, value);
}

void Checkpoint::put_scalar(const std::string& name, double value) {
  Eigen::MatrixXd m(1, 1);
  m(0, 0) = value;
  put(name, m);
}

bool Checkpoint::has(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.first == name) return true;
  return false;
}

const Eigen::MatrixXd& Checkpoint::get(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.first == name) return e.second;
  throw std::out_of_range("checkpoint: no tensor named " + name);
}

double Checkpoint::get_scalar(const std::string& name) const {
  const Eigen::MatrixXd& m = get(name);
  if (m.size() != 1) throw std::invalid_argument("checkpoint: " + name + " is not a scalar");
  return m(0, 0);
}

std::vector<std::string> Checkpoint::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.first);
  return out;
}

void Checkpoint::put_mlp(const std::string& prefix, const MlpParams& p) {
  for (int l = 0; l < p.layer_count(); ++l) {
    put(prefix + ".w" + std::to_string(l), p.w[l]);
    put(prefix + ".b" + std::to_string(l), p.b[l]);
  }
  Eigen::MatrixXd meta(1, 2);
  meta(0, 0) = p.hidden == Activation::Tanh ? 0.0 : 1.0;
  meta(0, 1) = p.output == OutputActivation::Identity ? 0.0 : 1.0;
  put(prefix + ".meta", meta);
}

MlpParams Checkpoint::get_mlp(const std::string& prefix) const {
  MlpParams p;
  const Eigen::MatrixXd& meta = get(prefix + ".meta");
  p.hidden = meta(0, 0) == 0.0 ? Activation::Tanh : Activation::Relu;
  p.output = meta(0, 1) == 0.0 ? OutputActivation::Identity : OutputActivation::Softplus;
  for (int l = 0;; ++l) {
    const std::string wn = prefix + ".w" + std::to_string(l);
    if (!has(wn)) break;
    p.w.push_back(get(wn));
    p.b.push_back(get(prefix + ".b" + std::to_string(l)).col(0));
  }
  if (p.w.empty()) throw std::out_of_range("checkpoint: no layers under " + prefix);
  check_finite(p, "checkpoint");
  return p;
}

void Checkpoint::save(const std::string& path) const {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  f << kHeader << '\n';
  f << std::setprecision(17);
  for (const auto& [name, m] : entries_) {
    f << "tensor " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        if (j) f << ' ';
        f << m(i, j);
      }
      f << '\n';
    }
  }
  if (!f) throw std::runtime_error("write failed: " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(f, line) || line != kHeader)
    throw std::runtime_error(path + ": not a checkpoint (bad header)");

  Checkpoint ck;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::istringstream hdr(line);
    std::string kind, name;
    Eigen::Index rows = 0, cols = 0;
    hdr >> kind >> name >> rows >> cols;
    if (kind != "tensor" || name.empty() || rows <= 0 || cols <= 0)
      throw std::runtime_error(path + ": malformed tensor header: " + line);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
      if (!std::getline(f, line)) throw std::runtime_error(path + ": truncated tensor " + name);
      std::istringstream row(line);
      for (Eigen::Index j = 0; j < cols; ++j)
        if (!(row >> m(i, j)))
          throw std::runtime_error(path + ": bad value in tensor " + name);
    }
    ck.entries_.emplace_back(name, std::move(m));
  }
  return ck;
}

}  // namespace nlbac
