#pragma once

#include <cmath>

#include "fdivmin/rng.hpp"
#include "fdivmin/tape.hpp"
#include "fdivmin/tensor.hpp"

namespace fdivmin {

inline constexpr double kLogTwoPi = 1.8378770664093453;

// Diagonal Gaussian with variance stored as log_variance, so the implied
// variance is positive by construction.
struct DiagonalGaussian {
  Tensor mean;
  Tensor log_var;

  std::size_t dim() const { return mean.size(); }

  static DiagonalGaussian standard(std::size_t d) {
    return {Tensor::zeros({d}), Tensor::zeros({d})};
  }

  static DiagonalGaussian isotropic(Tensor mean, double sigma) {
    std::size_t d = mean.size();
    return {std::move(mean),
            Tensor::full({d}, 2.0 * std::log(sigma))};
  }

  double log_prob(const Tensor& x) const;

  // Reparameterized draw; the epsilon used is written to *eps_out when
  // requested so callers can replay it on a tape.
  Tensor sample(Rng& rng, Tensor* eps_out = nullptr) const;
};

// Sum_d [ log(sigma_b/sigma_a) + (sigma_a^2 + (mu_a-mu_b)^2) / (2 sigma_b^2)
// - 1/2 ].
double gaussian_kl_closed_form(const DiagonalGaussian& a,
                               const DiagonalGaussian& b);

// ---- Tape-recorded versions (all inputs are nodes; vectors of equal dim).

// Returns the scalar log N(x; mean, diag exp(log_var)).
NodeId gaussian_log_prob(Tape& t, NodeId mean, NodeId log_var, NodeId x);

// Row-wise version: mean, log_var, x are BxD; returns a B-vector.
NodeId gaussian_log_prob_rows(Tape& t, NodeId mean, NodeId log_var, NodeId x);

// Row-wise isotropic version with fixed sigma.
NodeId gaussian_log_prob_rows_iso(Tape& t, NodeId mean, double sigma,
                                  NodeId x);

// mean + exp(log_var / 2) * eps with eps entering as a constant.
NodeId gaussian_sample_reparam(Tape& t, NodeId mean, NodeId log_var,
                               const Tensor& eps);

}  // namespace fdivmin
