#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "nlbac/mlp.hpp"

namespace nlbac {

// Plain-text parameter document: a versioned header followed by named
// tensors with explicit shapes, values row-major at full double precision.
// Shared by the dynamics model and the actor-critic networks.
class Checkpoint {
 public:
  void put(const std::string& name, const Eigen::MatrixXd& value);
  void put_scalar(const std::string& name, double value);

  bool has(const std::string& name) const;
  const Eigen::MatrixXd& get(const std::string& name) const;
  double get_scalar(const std::string& name) const;
  std::vector<std::string> names() const;

  // Networks are stored as <prefix>.w0, <prefix>.b0, <prefix>.w1, ... plus
  // <prefix>.meta holding (hidden activation, output activation).
  void put_mlp(const std::string& prefix, const MlpParams& p);
  MlpParams get_mlp(const std::string& prefix) const;

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);

 private:
  std::vector<std::pair<std::string, Eigen::MatrixXd>> entries_;
};

}  // namespace nlbac
