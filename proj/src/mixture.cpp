#include "fdivmin/mixture.hpp"

#include <cmath>
#include <numbers>

#include "fdivmin/errors.hpp"
#include "fdivmin/gaussian.hpp"

namespace fdivmin {

GaussianMixture::GaussianMixture(Tensor w, Tensor m, Tensor s)
    : weights(std::move(w)), means(std::move(m)), stds(std::move(s)) {
  if (weights.rank() != 1 || means.rank() != 2 || stds.rank() != 2)
    throw ContractViolation("GaussianMixture: bad ranks");
  if (means.rows() != weights.size() || !means.same_shape(stds))
    throw ContractViolation("GaussianMixture: component count mismatch");
  if (weights.size() < 1)
    throw ContractViolation("GaussianMixture: need K >= 1");
  double total = 0.0;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    if (weights[k] < 0.0)
      throw ContractViolation("GaussianMixture: negative weight");
    total += weights[k];
  }
  if (std::abs(total - 1.0) > 1e-12)
    throw ContractViolation("GaussianMixture: weights must sum to 1");
}

double GaussianMixture::log_prob(const Tensor& x) const {
  if (x.size() != dim())
    throw ContractViolation("GaussianMixture::log_prob: dimension mismatch");
  std::size_t K = num_components(), D = dim();
  double max_term = -std::numeric_limits<double>::infinity();
  std::vector<double> terms(K);
  for (std::size_t k = 0; k < K; ++k) {
    double lp = std::log(weights[k]);
    for (std::size_t d = 0; d < D; ++d) {
      double sd = stds(k, d);
      double z = (x[d] - means(k, d)) / sd;
      lp += -0.5 * kLogTwoPi - std::log(sd) - 0.5 * z * z;
    }
    terms[k] = lp;
    max_term = std::max(max_term, lp);
  }
  double s = 0.0;
  for (double v : terms) s += std::exp(v - max_term);
  return max_term + std::log(s);
}

double GaussianMixture::log_prob1(double x) const {
  return log_prob(Tensor::vector({x}));
}

Tensor GaussianMixture::sample(Rng& rng, std::size_t* component_out) const {
  std::size_t k = rng.categorical(weights.raw());
  if (component_out) *component_out = k;
  Tensor x = Tensor::zeros({dim()});
  for (std::size_t d = 0; d < dim(); ++d)
    x[d] = means(k, d) + stds(k, d) * rng.normal();
  return x;
}

double GaussianMixture::mean1() const {
  if (dim() != 1) throw ContractViolation("mean1: mixture is not 1-D");
  double m = 0.0;
  for (std::size_t k = 0; k < num_components(); ++k)
    m += weights[k] * means(k, 0);
  return m;
}

double GaussianMixture::variance1() const {
  if (dim() != 1) throw ContractViolation("variance1: mixture is not 1-D");
  double m = mean1();
  double second = 0.0;
  for (std::size_t k = 0; k < num_components(); ++k)
    second += weights[k] *
              (stds(k, 0) * stds(k, 0) + means(k, 0) * means(k, 0));
  return second - m * m;
}

GaussianMixture GaussianMixture::single(double mean, double std) {
  return GaussianMixture(Tensor::vector({1.0}), Tensor::matrix(1, 1, {mean}),
                         Tensor::matrix(1, 1, {std}));
}

GaussianMixture GaussianMixture::two_gaussian_benchmark() {
  return GaussianMixture(Tensor::vector({0.3, 0.7}),
                         Tensor::matrix(2, 1, {1.0, 2.0}),
                         Tensor::matrix(2, 1, {0.1, 0.5}));
}

GaussianMixture GaussianMixture::ring(std::size_t k, double radius,
                                      double component_std) {
  Tensor w = Tensor::full({k}, 1.0 / static_cast<double>(k));
  Tensor m = Tensor::zeros({k, 2});
  Tensor s = Tensor::full({k, 2}, component_std);
  for (std::size_t i = 0; i < k; ++i) {
    double angle = 2.0 * std::numbers::pi * static_cast<double>(i) /
                   static_cast<double>(k);
    m(i, 0) = radius * std::cos(angle);
    m(i, 1) = radius * std::sin(angle);
  }
  return GaussianMixture(std::move(w), std::move(m), std::move(s));
}

}  // namespace fdivmin
