#pragma once

#include "fdivmin/dataset.hpp"
#include "fdivmin/gaussian.hpp"
#include "fdivmin/tape.hpp"
#include "fdivmin/tensor.hpp"

namespace fdivmin {

// Isotropic Gaussian noise process p(y|x) = N(y; x, sigma^2 I).
struct SpreadNoise {
  double sigma;

  explicit SpreadNoise(double s);
};

// The noise-convolved empirical distribution
// p_hat(y) = (1/N) sum_n N(y; x_n, sigma^2 I). Full support, exact density.
struct SpreadedEmpirical {
  EmpiricalDataset dataset;
  SpreadNoise noise;

  std::size_t dim() const { return dataset.dim(); }

  // Exact log density over ALL N points, via log-sum-exp. This is the
  // trusted oracle; minibatch approximations live elsewhere.
  double log_prob(const Tensor& y) const;

  // Draw y: pick a point uniformly, add noise.
  Tensor sample(Rng& rng) const;
};

// Spreaded implicit-model conditional: N(y; generator_mean, sigma^2 I).
DiagonalGaussian spread_model_conditional(Tensor generator_mean,
                                          const SpreadNoise& noise);

// Geometric interpolation sigma_start * (sigma_end/sigma_start)^(step/total).
struct AnnealSchedule {
  double sigma_start;
  double sigma_end;
  std::size_t total_steps;

  AnnealSchedule(double start, double end, std::size_t steps);

  double sigma_at(std::size_t step) const;
};

// Tape-recorded exact spreaded log density of each row of y (BxD);
// returns a B-vector. Gradients flow to y.
NodeId spread_log_prob_rows(Tape& t, NodeId y, const EmpiricalDataset& data,
                            double sigma);

}  // namespace fdivmin
