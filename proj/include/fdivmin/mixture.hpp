#pragma once

#include <vector>

#include "fdivmin/rng.hpp"
#include "fdivmin/tensor.hpp"

namespace fdivmin {

// Mixture of diagonal Gaussians. Weights live on the simplex.
struct GaussianMixture {
  Tensor weights;  // K
  Tensor means;    // KxD
  Tensor stds;     // KxD

  GaussianMixture(Tensor w, Tensor m, Tensor s);

  std::size_t num_components() const { return weights.size(); }
  std::size_t dim() const { return means.cols(); }

  double log_prob(const Tensor& x) const;
  double log_prob1(double x) const;  // 1-D convenience
  Tensor sample(Rng& rng, std::size_t* component_out = nullptr) const;

  // Moments of the 1-D mixture (the forward-KL optimum is exactly these).
  double mean1() const;
  double variance1() const;

  static GaussianMixture single(double mean, double std);
  // 0.3 N(1, 0.1^2) + 0.7 N(2, 0.5^2).
  static GaussianMixture two_gaussian_benchmark();
  // K modes of std `component_std` on a circle of `radius` in 2-D.
  static GaussianMixture ring(std::size_t k, double radius,
                              double component_std);
};

}  // namespace fdivmin
