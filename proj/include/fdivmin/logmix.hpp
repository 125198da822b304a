#pragma once

#include <optional>
#include <vector>

#include "fdivmin/dataset.hpp"
#include "fdivmin/spread.hpp"
#include "fdivmin/tape.hpp"

namespace fdivmin {

// Top-d principal directions of the centered sample covariance. Learned
// once per dataset and frozen.
struct PcaProjection {
  Tensor basis;        // D x d, orthonormal columns
  Tensor center;       // D
  std::size_t reduced_dim() const { return basis.cols(); }

  // U^T (x - center)
  Tensor project(const Tensor& x) const;
};

PcaProjection fit_pca(const EmpiricalDataset& data, std::size_t d);

// Configuration of the index sampler for the reverse-KL gradient.
struct IndexSamplerConfig {
  double temperature = 10.0;     // squared-distance scale in trick mode
  std::size_t samples_per_y = 30;
  std::optional<PcaProjection> pca;
  bool use_unbiased = true;      // disables PCA + temperature tricks
  // Ablation: trick mode measured on the noisy y (intermediate Appendix
  // formula) instead of the noiseless projected mean.
  bool trick_on_y = false;
};

// p(n|y): softmax over -|y - x_n|^2 / (2 sigma^2) in unbiased mode, or over
// -|U^T mu - U^T x_n|^2 / temperature in trick mode (mu is the noiseless
// generator mean; y is used instead when trick_on_y is set).
std::vector<double> index_posterior(const EmpiricalDataset& data,
                                    const SpreadNoise& noise, const Tensor& y,
                                    const Tensor& generator_mean,
                                    const IndexSamplerConfig& config);

// Tape-recorded surrogate whose theta-gradient estimates
// grad_theta log p_hat(y) up to an additive constant. y is a BxD node
// carrying theta-gradients (reparameterized); means is the matching BxD
// value of mu_theta(z). Indices are drawn from the index posterior and
// treated as constants. Returns a B-vector of per-sample surrogates
// (1/T) sum_t log N(y; x_{n_t}, sigma^2 I).
NodeId logmix_surrogate_rows(Tape& t, const EmpiricalDataset& data,
                             const SpreadNoise& noise, NodeId y,
                             const Tensor& means,
                             const IndexSamplerConfig& config, Rng& rng);

// Exact grad_theta log p_hat(mu_theta(z) + sigma * eps) by differentiating
// the full-sum spreaded density through the reparameterized y. Oracle use.
template <typename MeanBuilder>
GradientMap full_sum_gradient(const EmpiricalDataset& data,
                              const SpreadNoise& noise,
                              const MeanBuilder& build_mean, const Tensor& z,
                              const Tensor& epsilon) {
  Tape t;
  NodeId zn = t.constant(Tensor({1, z.size()}, z.raw()));
  NodeId mean = build_mean(t, zn);  // 1 x D
  std::vector<double> scaled = epsilon.raw();
  for (double& v : scaled) v *= noise.sigma;
  NodeId y = t.add(mean, t.constant(Tensor({1, epsilon.size()},
                                           std::move(scaled))));
  NodeId lp = t.sum(spread_log_prob_rows(t, y, data, noise.sigma));
  return t.backward(lp);
}

// log[(1/M) sum_{m in minibatch} N(y; x_m, sigma^2 I)] — the biased
// estimator the full-sum machinery exists to avoid; kept to measure the
// bias.
double naive_minibatch_log_prob(const EmpiricalDataset& data,
                                const SpreadNoise& noise, const Tensor& y,
                                const std::vector<std::size_t>& minibatch);

}  // namespace fdivmin
