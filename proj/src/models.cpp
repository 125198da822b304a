#include "fdivmin/models.hpp"

#include <cmath>

#include "fdivmin/errors.hpp"

namespace fdivmin {

namespace {

// B x 1 tensor holding a scalar leaf broadcast down the rows.
NodeId broadcast_scalar_rows(Tape& t, NodeId scalar, std::size_t rows) {
  NodeId v = t.reshape(scalar, {1});
  return t.bias_add(t.constant(Tensor::zeros({rows, 1})), v);
}

// Hard clamp to [lo, hi]; gradient passes only inside the interval.
NodeId clamp_node(Tape& t, NodeId x, double lo, double hi,
                  const std::shared_ptr<long>& counter) {
  ForwardFn fwd = [lo, hi, counter](const std::vector<const Tensor*>& p) {
    Tensor out = *p[0];
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (out[i] < lo) {
        out[i] = lo;
        ++(*counter);
      } else if (out[i] > hi) {
        out[i] = hi;
        ++(*counter);
      }
    }
    return out;
  };
  BackwardFn bwd = [lo, hi](const Tensor& g,
                            const std::vector<const Tensor*>& p,
                            const Tensor&, std::vector<Tensor*>& pg) {
    if (!pg[0]) return;
    for (std::size_t i = 0; i < g.size(); ++i) {
      double v = (*p[0])[i];
      if (v > lo && v < hi) (*pg[0])[i] += g[i];
    }
  };
  return t.custom("clamp", {x}, std::move(fwd), std::move(bwd));
}

}  // namespace

Mlp::Mlp(std::string prefix, std::size_t input_dim,
         std::vector<std::size_t> hidden, std::size_t output_dim,
         double leaky_slope)
    : prefix_(std::move(prefix)), slope_(leaky_slope) {
  dims_.push_back(input_dim);
  for (std::size_t h : hidden) dims_.push_back(h);
  dims_.push_back(output_dim);
}

void Mlp::init_params(ParameterSet& ps, Role role, Rng& rng) const {
  for (std::size_t i = 0; i + 1 < dims_.size(); ++i) {
    std::size_t fan_in = dims_[i], fan_out = dims_[i + 1];
    double std_dev = std::sqrt(2.0 / static_cast<double>(fan_in + fan_out));
    Tensor w = Tensor::zeros({fan_in, fan_out});
    for (std::size_t k = 0; k < w.size(); ++k) w[k] = std_dev * rng.normal();
    ps.add(prefix_ + ".W" + std::to_string(i), std::move(w), role);
    ps.add(prefix_ + ".b" + std::to_string(i), Tensor::zeros({fan_out}),
           role);
  }
}

NodeId Mlp::forward(Tape& t, const ParameterSet& ps, NodeId x) const {
  if (t.value(x).rank() != 2 || t.value(x).cols() != dims_.front())
    throw ContractViolation("Mlp::forward: input must be B x " +
                            std::to_string(dims_.front()));
  NodeId h = x;
  for (std::size_t i = 0; i + 1 < dims_.size(); ++i) {
    NodeId w = t.param(ps, prefix_ + ".W" + std::to_string(i));
    NodeId b = t.param(ps, prefix_ + ".b" + std::to_string(i));
    h = t.bias_add(t.matmul(h, w), b);
    if (i + 2 < dims_.size()) h = t.leaky_relu(h, slope_);
  }
  return h;
}

Encoder::Encoder(std::string prefix, std::size_t data_dim,
                 std::vector<std::size_t> hidden, std::size_t latent_dim)
    : latent_dim_(latent_dim) {
  if (hidden.empty())
    throw ContractViolation("Encoder: need at least one hidden layer");
  std::size_t trunk_out = hidden.back();
  hidden.pop_back();
  trunk_ = Mlp(prefix + ".trunk", data_dim, hidden, trunk_out);
  mean_head_ = Mlp(prefix + ".mean", trunk_out, {}, latent_dim);
  logvar_head_ = Mlp(prefix + ".logvar", trunk_out, {}, latent_dim);
}

void Encoder::init_params(ParameterSet& ps, Rng& rng) const {
  trunk_.init_params(ps, Role::phi, rng);
  mean_head_.init_params(ps, Role::phi, rng);
  logvar_head_.init_params(ps, Role::phi, rng);
}

std::pair<NodeId, NodeId> Encoder::forward(Tape& t, const ParameterSet& ps,
                                           NodeId y) const {
  NodeId h = t.leaky_relu(trunk_.forward(t, ps, y), trunk_.leaky_slope());
  NodeId mean = mean_head_.forward(t, ps, h);
  NodeId log_var =
      clamp_node(t, logvar_head_.forward(t, ps, h), -10.0, 10.0,
                 clamp_count_);
  return {mean, log_var};
}

DiagonalGaussian Encoder::params_at(const ParameterSet& ps,
                                    const Tensor& y) const {
  Tape t;
  NodeId yn = t.constant(Tensor({1, y.size()}, y.raw()));
  auto [mean, log_var] = forward(t, ps, yn);
  return {Tensor::vector(t.value(mean).raw()),
          Tensor::vector(t.value(log_var).raw())};
}

double Encoder::log_prob(const ParameterSet& ps, const Tensor& y,
                         const Tensor& z) const {
  return params_at(ps, y).log_prob(z);
}

ImplicitGenerator::ImplicitGenerator(std::string prefix,
                                     std::size_t latent_dim,
                                     std::vector<std::size_t> hidden,
                                     std::size_t data_dim)
    : net_(Mlp(std::move(prefix), latent_dim, std::move(hidden), data_dim)),
      latent_dim_(latent_dim) {}

void ImplicitGenerator::init_params(ParameterSet& ps, Rng& rng) const {
  net_.init_params(ps, Role::theta, rng);
}

NodeId ImplicitGenerator::mean(Tape& t, const ParameterSet& ps,
                               NodeId z) const {
  return net_.forward(t, ps, z);
}

Tensor ImplicitGenerator::mean_value(const ParameterSet& ps,
                                     const Tensor& z) const {
  Tape t;
  NodeId zn = t.constant(Tensor({1, z.size()}, z.raw()));
  return Tensor::vector(t.value(mean(t, ps, zn)).raw());
}

ImplicitGenerator::Draw ImplicitGenerator::sample_y(const ParameterSet& ps,
                                                    double sigma,
                                                    Rng& rng) const {
  Tensor z = rng.normal_tensor({latent_dim_});
  Tensor eps = rng.normal_tensor({data_dim()});
  Tensor y = mean_value(ps, z);
  for (std::size_t d = 0; d < y.size(); ++d) y[d] += sigma * eps[d];
  return {std::move(y), std::move(z), std::move(eps)};
}

void GaussianModel1D::init_params(ParameterSet& ps, double mu0,
                                  double sigma0) const {
  ps.add(mu_name, Tensor::scalar(mu0), Role::theta);
  ps.add(log_sigma_name, Tensor::scalar(std::log(sigma0)), Role::theta);
}

double GaussianModel1D::sigma(const ParameterSet& ps) const {
  return std::exp(ps.at(log_sigma_name).value());
}

double GaussianModel1D::log_prob(const ParameterSet& ps, double x) const {
  double m = mu(ps), s = sigma(ps);
  double z = (x - m) / s;
  return -0.5 * kLogTwoPi - std::log(s) - 0.5 * z * z;
}

NodeId GaussianModel1D::sample(Tape& t, const ParameterSet& ps,
                               const Tensor& eps) const {
  NodeId m = t.param(ps, mu_name);
  NodeId s = t.exp(t.param(ps, log_sigma_name));
  return t.add(m, t.multiply(s, t.constant(eps)));
}

NodeId GaussianModel1D::log_prob_rows(Tape& t, const ParameterSet& ps,
                                      NodeId x) const {
  std::size_t b = t.value(x).rows();
  NodeId mean = broadcast_scalar_rows(t, t.param(ps, mu_name), b);
  NodeId log_var = broadcast_scalar_rows(
      t, t.scale(t.param(ps, log_sigma_name), 2.0), b);
  return gaussian_log_prob_rows(t, mean, log_var, x);
}

void JointGaussianModel1D::init_params(ParameterSet& ps, double mu0,
                                       double w0, double sigma_c0) const {
  ps.add(mu_name, Tensor::scalar(mu0), Role::theta);
  ps.add(w_name, Tensor::scalar(w0), Role::theta);
  ps.add(log_sigma_c_name, Tensor::scalar(std::log(sigma_c0)), Role::theta);
}

double JointGaussianModel1D::sigma_c(const ParameterSet& ps) const {
  return std::exp(ps.at(log_sigma_c_name).value());
}

double JointGaussianModel1D::marginal_sigma(const ParameterSet& ps) const {
  double wv = w(ps), sc = sigma_c(ps);
  return std::sqrt(wv * wv + sc * sc);
}

NodeId JointGaussianModel1D::conditional_mean(Tape& t, const ParameterSet& ps,
                                              NodeId z) const {
  std::size_t b = t.value(z).rows();
  NodeId wb = broadcast_scalar_rows(t, t.param(ps, w_name), b);
  NodeId mb = broadcast_scalar_rows(t, t.param(ps, mu_name), b);
  return t.add(mb, t.multiply(wb, z));
}

NodeId JointGaussianModel1D::joint_log_prob_rows(Tape& t,
                                                 const ParameterSet& ps,
                                                 NodeId y, NodeId z) const {
  std::size_t b = t.value(y).rows();
  NodeId mean = conditional_mean(t, ps, z);
  NodeId log_var = broadcast_scalar_rows(
      t, t.scale(t.param(ps, log_sigma_c_name), 2.0), b);
  NodeId ll_y = gaussian_log_prob_rows(t, mean, log_var, y);
  NodeId zero = t.constant(Tensor::zeros({b, 1}));
  NodeId ll_z = gaussian_log_prob_rows(t, zero, zero, z);
  return t.add(ll_y, ll_z);
}

DiagonalGaussian JointGaussianModel1D::exact_posterior(const ParameterSet& ps,
                                                       double y) const {
  double m = mu(ps), wv = w(ps), sc = sigma_c(ps);
  double s2 = wv * wv + sc * sc;
  double post_mean = wv * (y - m) / s2;
  double post_var = sc * sc / s2;
  return {Tensor::vector({post_mean}),
          Tensor::vector({std::log(post_var)})};
}

}  // namespace fdivmin
