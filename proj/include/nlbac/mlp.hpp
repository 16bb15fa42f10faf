#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <random>
#include <utility>
#include <vector>

namespace nlbac {

enum class Activation { Tanh, Relu };
enum class OutputActivation { Identity, Softplus };

// Fully connected network. Layer l maps sizes[l] -> sizes[l+1]; all hidden
// layers share one activation, the output layer is identity or softplus.
// Everything is double precision and deterministic.
struct MlpParams {
  std::vector<Eigen::MatrixXd> w;
  std::vector<Eigen::VectorXd> b;
  Activation hidden = Activation::Tanh;
  OutputActivation output = OutputActivation::Identity;

  int layer_count() const { return static_cast<int>(w.size()); }
  int input_dim() const { return w.empty() ? 0 : static_cast<int>(w.front().cols()); }
  int output_dim() const { return w.empty() ? 0 : static_cast<int>(w.back().rows()); }
};

// Gradient accumulator whose shapes mirror an MlpParams.
struct MlpGrad {
  std::vector<Eigen::MatrixXd> w;
  std::vector<Eigen::VectorXd> b;

  void set_zero();
  void add_scaled(const MlpGrad& other, double scale);
};

MlpGrad make_grad_like(const MlpParams& p);
bool same_shape(const MlpParams& p, const MlpGrad& g);

// Activations recorded during a forward pass; a[0] is the input batch and
// a[l] the output of layer l. Enough to run the reverse pass.
struct MlpCache {
  std::vector<Eigen::MatrixXd> a;
  const Eigen::MatrixXd& out() const { return a.back(); }
};

// Weights and biases drawn uniformly from +-1/sqrt(fan_in).
MlpParams init_mlp(const std::vector<int>& sizes, Activation hidden,
                   OutputActivation output, std::mt19937_64& rng);

// Batched forward pass; columns are independent samples.
Eigen::MatrixXd mlp_forward(const MlpParams& p, const Eigen::MatrixXd& x,
                            MlpCache* cache = nullptr);

// Reverse pass over a cached forward. upstream is d(loss)/d(output) with the
// same shape as the output batch. Accumulates parameter gradients into grad
// (if non-null) and writes d(loss)/d(input) to input_grad (if non-null).
void mlp_backward(const MlpParams& p, const MlpCache& cache,
                  const Eigen::MatrixXd& upstream, MlpGrad* grad,
                  Eigen::MatrixXd* input_grad = nullptr);

// Single-vector convenience: forward + reverse in one call.
std::pair<MlpGrad, Eigen::VectorXd> mlp_backward(const MlpParams& p,
                                                 const Eigen::VectorXd& input,
                                                 const Eigen::VectorXd& upstream);

// Flat parameter indexing used by optimizers and finite-difference checks.
std::size_t param_count(const MlpParams& p);
double get_param(const MlpParams& p, std::size_t idx);
void add_to_param(MlpParams& p, std::size_t idx, double delta);
double get_grad_entry(const MlpGrad& g, std::size_t idx);

// Throws std::invalid_argument when any entry is not finite.
void check_finite(const MlpParams& p, const char* what);

}  // namespace nlbac
