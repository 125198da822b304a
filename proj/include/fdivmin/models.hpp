#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "fdivmin/gaussian.hpp"
#include "fdivmin/params.hpp"
#include "fdivmin/rng.hpp"
#include "fdivmin/spread.hpp"
#include "fdivmin/tape.hpp"

namespace fdivmin {

// Fully connected net, leaky-relu hidden layers (slope 0.01), linear output.
// Parameters are named <prefix>.W<i> / <prefix>.b<i> inside a ParameterSet.
class Mlp {
 public:
  Mlp() = default;
  Mlp(std::string prefix, std::size_t input_dim,
      std::vector<std::size_t> hidden, std::size_t output_dim,
      double leaky_slope = 0.01);

  // Weights ~ N(0, 2/(fan_in+fan_out)), biases 0.
  void init_params(ParameterSet& ps, Role role, Rng& rng) const;

  // X is B x input_dim; returns B x output_dim.
  NodeId forward(Tape& t, const ParameterSet& ps, NodeId x) const;

  std::size_t input_dim() const { return dims_.front(); }
  std::size_t output_dim() const { return dims_.back(); }
  const std::vector<std::size_t>& dims() const { return dims_; }
  const std::string& prefix() const { return prefix_; }
  double leaky_slope() const { return slope_; }

 private:
  std::string prefix_;
  std::vector<std::size_t> dims_;  // input, hidden..., output
  double slope_ = 0.01;
};

// q_phi(z|y): shared Mlp trunk with two linear heads for the mean and the
// log-variance. log-variance is clamped to [-10, 10]; the clamp never fires
// in a healthy run, so activations are counted and reported.
class Encoder {
 public:
  Encoder() = default;
  Encoder(std::string prefix, std::size_t data_dim,
          std::vector<std::size_t> hidden, std::size_t latent_dim);

  void init_params(ParameterSet& ps, Rng& rng) const;  // phi role

  // y is B x data_dim; returns (mean, log_variance), each B x latent_dim.
  std::pair<NodeId, NodeId> forward(Tape& t, const ParameterSet& ps,
                                    NodeId y) const;

  // Recognition density at a single y (value-level, no gradients).
  DiagonalGaussian params_at(const ParameterSet& ps, const Tensor& y) const;
  double log_prob(const ParameterSet& ps, const Tensor& y,
                  const Tensor& z) const;

  std::size_t latent_dim() const { return latent_dim_; }
  std::size_t data_dim() const { return trunk_.input_dim(); }
  long clamp_activations() const { return *clamp_count_; }

 private:
  Mlp trunk_;
  Mlp mean_head_;
  Mlp logvar_head_;
  std::size_t latent_dim_ = 0;
  std::shared_ptr<long> clamp_count_ = std::make_shared<long>(0);
};

// Implicit generator delta(x - mu_theta(z)) with standard-normal prior and
// a fixed (non-trainable) spread width. The unspreaded model is never
// evaluated as a density; only mean() and the spreaded conditional exist.
class ImplicitGenerator {
 public:
  ImplicitGenerator() = default;
  ImplicitGenerator(std::string prefix, std::size_t latent_dim,
                    std::vector<std::size_t> hidden, std::size_t data_dim);

  void init_params(ParameterSet& ps, Rng& rng) const;  // theta role

  // Z is B x latent_dim; returns mu_theta(Z), B x data_dim.
  NodeId mean(Tape& t, const ParameterSet& ps, NodeId z) const;
  Tensor mean_value(const ParameterSet& ps, const Tensor& z) const;

  // z ~ N(0,I); y = mu_theta(z) + sigma * eps. Both noises returned.
  struct Draw {
    Tensor y;
    Tensor z;
    Tensor epsilon;
  };
  Draw sample_y(const ParameterSet& ps, double sigma, Rng& rng) const;

  std::size_t latent_dim() const { return latent_dim_; }
  std::size_t data_dim() const { return net_.output_dim(); }
  const Mlp& net() const { return net_; }

 private:
  Mlp net_;
  std::size_t latent_dim_ = 0;
};

// Univariate Gaussian model with trainable (mu, log_sigma), theta role.
struct GaussianModel1D {
  std::string mu_name = "model.mu";
  std::string log_sigma_name = "model.log_sigma";

  void init_params(ParameterSet& ps, double mu0, double sigma0) const;

  double mu(const ParameterSet& ps) const { return ps.at(mu_name).value(); }
  double sigma(const ParameterSet& ps) const;

  double log_prob(const ParameterSet& ps, double x) const;
  // Reparameterized sample as a tape node (eps constant).
  NodeId sample(Tape& t, const ParameterSet& ps, const Tensor& eps) const;
  // Log density of a batch of fixed points, one per row; returns B-vector.
  NodeId log_prob_rows(Tape& t, const ParameterSet& ps, NodeId x) const;
};

// Trainable bivariate Gaussian written as z ~ N(0,1), y|z = N(mu + w z,
// sigma_c^2); marginalizes to the univariate N(mu, w^2 + sigma_c^2).
struct JointGaussianModel1D {
  std::string mu_name = "joint.mu";
  std::string w_name = "joint.w";
  std::string log_sigma_c_name = "joint.log_sigma_c";

  void init_params(ParameterSet& ps, double mu0, double w0,
                   double sigma_c0) const;

  double mu(const ParameterSet& ps) const { return ps.at(mu_name).value(); }
  double w(const ParameterSet& ps) const { return ps.at(w_name).value(); }
  double sigma_c(const ParameterSet& ps) const;
  double marginal_sigma(const ParameterSet& ps) const;

  // Joint log density rows: y, z are Bx1 nodes; returns B-vector of
  // log N(y; mu + w z, sigma_c^2) + log N(z; 0, 1).
  NodeId joint_log_prob_rows(Tape& t, const ParameterSet& ps, NodeId y,
                             NodeId z) const;

  // Conditional mean node mu + w z for z a Bx1 node.
  NodeId conditional_mean(Tape& t, const ParameterSet& ps, NodeId z) const;

  // Exact posterior p(z|y) of the joint (used by tightness oracles).
  DiagonalGaussian exact_posterior(const ParameterSet& ps, double y) const;
};

}  // namespace fdivmin
