#include "nlbac/mlp.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace nlbac {

namespace {

Eigen::MatrixXd apply_hidden(Activation act, const Eigen::MatrixXd& z) {
  if (act == Activation::Tanh) return z.array().tanh();
  return z.array().max(0.0);
}

Eigen::MatrixXd apply_output(OutputActivation act, const Eigen::MatrixXd& z) {
  if (act == OutputActivation::Identity) return z;
  // softplus, stable for large |z|
  return z.array().max(0.0) + (-z.array().abs()).exp().log1p();
}

// Derivative of the activation expressed through its own output value.
// tanh: 1 - a^2, relu: 1[a > 0], softplus: sigmoid(z) = 1 - exp(-a).
Eigen::ArrayXXd hidden_deriv(Activation act, const Eigen::MatrixXd& a) {
  if (act == Activation::Tanh) return 1.0 - a.array().square();
  return (a.array() > 0.0).cast<double>();
}

Eigen::ArrayXXd output_deriv(OutputActivation act, const Eigen::MatrixXd& a) {
  if (act == OutputActivation::Identity)
    return Eigen::ArrayXXd::Ones(a.rows(), a.cols());
  return 1.0 - (-a.array()).exp();
}

}  // namespace

void MlpGrad::set_zero() {
  for (auto& m : w) m.setZero();
  for (auto& v : b) v.setZero();
}

void MlpGrad::add_scaled(const MlpGrad& other, double scale) {
  for (std::size_t l = 0; l < w.size(); ++l) {
    w[l] += scale * other.w[l];
    b[l] += scale * other.b[l];
  }
}

MlpGrad make_grad_like(const MlpParams& p) {
  MlpGrad g;
  g.w.reserve(p.w.size());
  g.b.reserve(p.b.size());
  for (const auto& m : p.w) g.w.push_back(Eigen::MatrixXd::Zero(m.rows(), m.cols()));
  for (const auto& v : p.b) g.b.push_back(Eigen::VectorXd::Zero(v.size()));
  return g;
}

bool same_shape(const MlpParams& p, const MlpGrad& g) {
  if (p.w.size() != g.w.size() || p.b.size() != g.b.size()) return false;
  for (std::size_t l = 0; l < p.w.size(); ++l) {
    if (p.w[l].rows() != g.w[l].rows() || p.w[l].cols() != g.w[l].cols()) return false;
    if (p.b[l].size() != g.b[l].size()) return false;
  }
  return true;
}

MlpParams init_mlp(const std::vector<int>& sizes, Activation hidden,
                   OutputActivation output, std::mt19937_64& rng) {
  if (sizes.size() < 2) throw std::invalid_argument("init_mlp: need at least two layer sizes");
  for (int s : sizes)
    if (s <= 0) throw std::invalid_argument("init_mlp: layer sizes must be positive");

  MlpParams p;
  p.hidden = hidden;
  p.output = output;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const int fan_in = sizes[l];
    const int fan_out = sizes[l + 1];
    const double limit = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-limit, limit);
    Eigen::MatrixXd w(fan_out, fan_in);
    for (int i = 0; i < fan_out; ++i)
      for (int j = 0; j < fan_in; ++j) w(i, j) = dist(rng);
    Eigen::VectorXd b(fan_out);
    for (int i = 0; i < fan_out; ++i) b(i) = dist(rng);
    p.w.push_back(std::move(w));
    p.b.push_back(std::move(b));
  }
  return p;
}

Eigen::MatrixXd mlp_forward(const MlpParams& p, const Eigen::MatrixXd& x, MlpCache* cache) {
  if (p.w.empty()) throw std::invalid_argument("mlp_forward: empty network");
  if (x.rows() != p.input_dim())
    throw std::invalid_argument("mlp_forward: input has " + std::to_string(x.rows()) +
                                " rows, network expects " + std::to_string(p.input_dim()));

  if (cache) {
    cache->a.clear();
    cache->a.push_back(x);
  }
  Eigen::MatrixXd a = x;
  const int last = p.layer_count() - 1;
  for (int l = 0; l <= last; ++l) {
    Eigen::MatrixXd z = (p.w[l] * a).colwise() + p.b[l];
    a = (l == last) ? apply_output(p.output, z) : apply_hidden(p.hidden, z);
    if (cache) cache->a.push_back(a);
  }
  return a;
}

void mlp_backward(const MlpParams& p, const MlpCache& cache,
                  const Eigen::MatrixXd& upstream, MlpGrad* grad,
                  Eigen::MatrixXd* input_grad) {
  const int last = p.layer_count() - 1;
  if (static_cast<int>(cache.a.size()) != last + 2)
    throw std::invalid_argument("mlp_backward: cache does not match network depth");
  if (upstream.rows() != p.output_dim() || upstream.cols() != cache.a.back().cols())
    throw std::invalid_argument("mlp_backward: upstream shape mismatch");
  if (grad && !same_shape(p, *grad))
    throw std::invalid_argument("mlp_backward: gradient shape mismatch");

  Eigen::MatrixXd g = upstream;
  for (int l = last; l >= 0; --l) {
    const Eigen::MatrixXd& a_out = cache.a[l + 1];
    Eigen::MatrixXd gz;
    if (l == last)
      gz = g.array() * output_deriv(p.output, a_out);
    else
      gz = g.array() * hidden_deriv(p.hidden, a_out);
    if (grad) {
      grad->w[l].noalias() += gz * cache.a[l].transpose();
      grad->b[l] += gz.rowwise().sum();
    }
    if (l > 0 || input_grad) g.noalias() = p.w[l].transpose() * gz;
  }
  if (input_grad) *input_grad = g;
}

std::pair<MlpGrad, Eigen::VectorXd> mlp_backward(const MlpParams& p,
                                                 const Eigen::VectorXd& input,
                                                 const Eigen::VectorXd& upstream) {
  MlpCache cache;
  mlp_forward(p, input, &cache);
  MlpGrad grad = make_grad_like(p);
  Eigen::MatrixXd input_grad;
  mlp_backward(p, cache, upstream, &grad, &input_grad);
  return {std::move(grad), Eigen::VectorXd(input_grad.col(0))};
}

std::size_t param_count(const MlpParams& p) {
  std::size_t n = 0;
  for (const auto& m : p.w) n += static_cast<std::size_t>(m.size());
  for (const auto& v : p.b) n += static_cast<std::size_t>(v.size());
  return n;
}

namespace {

// Flat order: all weight matrices (column-major, Eigen's layout), then biases.
template <typename Params, typename Fn>
void locate_param(Params& p, std::size_t idx, Fn&& fn) {
  for (auto& m : p.w) {
    const std::size_t n = static_cast<std::size_t>(m.size());
    if (idx < n) {
      fn(m.data()[idx]);
      return;
    }
    idx -= n;
  }
  for (auto& v : p.b) {
    const std::size_t n = static_cast<std::size_t>(v.size());
    if (idx < n) {
      fn(v.data()[idx]);
      return;
    }
    idx -= n;
  }
  throw std::out_of_range("parameter index out of range");
}

}  // namespace

double get_param(const MlpParams& p, std::size_t idx) {
  double out = 0.0;
  locate_param(const_cast<MlpParams&>(p), idx, [&](double& v) { out = v; });
  return out;
}

void add_to_param(MlpParams& p, std::size_t idx, double delta) {
  locate_param(p, idx, [&](double& v) { v += delta; });
}

double get_grad_entry(const MlpGrad& g, std::size_t idx) {
  double out = 0.0;
  locate_param(const_cast<MlpGrad&>(g), idx, [&](double& v) { out = v; });
  return out;
}

void check_finite(const MlpParams& p, const char* what) {
  for (const auto& m : p.w)
    if (!m.allFinite()) throw std::invalid_argument(std::string(what) + ": non-finite weight");
  for (const auto& v : p.b)
    if (!v.allFinite()) throw std::invalid_argument(std::string(what) + ": non-finite bias");
}

}  // namespace nlbac
