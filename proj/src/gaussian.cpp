#include "fdivmin/gaussian.hpp"

#include <cmath>

#include "fdivmin/errors.hpp"

namespace fdivmin {

double DiagonalGaussian::log_prob(const Tensor& x) const {
  if (x.size() != dim())
    throw ContractViolation("DiagonalGaussian::log_prob: dimension mismatch");
  double lp = 0.0;
  for (std::size_t d = 0; d < dim(); ++d) {
    double lv = log_var[d];
    double diff = x[d] - mean[d];
    lp += -0.5 * kLogTwoPi - 0.5 * lv - 0.5 * diff * diff * std::exp(-lv);
  }
  return lp;
}

Tensor DiagonalGaussian::sample(Rng& rng, Tensor* eps_out) const {
  Tensor eps = rng.normal_tensor(mean.shape());
  Tensor out = mean;
  for (std::size_t d = 0; d < dim(); ++d)
    out[d] += std::exp(0.5 * log_var[d]) * eps[d];
  if (eps_out) *eps_out = std::move(eps);
  return out;
}

double gaussian_kl_closed_form(const DiagonalGaussian& a,
                               const DiagonalGaussian& b) {
  if (a.dim() != b.dim())
    throw ContractViolation("gaussian_kl_closed_form: dimension mismatch");
  double kl = 0.0;
  for (std::size_t d = 0; d < a.dim(); ++d) {
    double va = std::exp(a.log_var[d]);
    double vb = std::exp(b.log_var[d]);
    double dm = a.mean[d] - b.mean[d];
    kl += 0.5 * (b.log_var[d] - a.log_var[d]) + (va + dm * dm) / (2.0 * vb) -
          0.5;
  }
  return kl;
}

NodeId gaussian_log_prob(Tape& t, NodeId mean, NodeId log_var, NodeId x) {
  const Tensor& m = t.value(mean);
  if (!m.same_shape(t.value(log_var)) || !m.same_shape(t.value(x)))
    throw ContractViolation("gaussian_log_prob: dimension mismatch");
  std::size_t d = m.size();
  NodeId diff = t.subtract(x, mean);
  NodeId quad = t.multiply(t.square(diff),
                           t.exp(t.scale(log_var, -1.0)));
  NodeId s = t.add(t.scale(t.sum(log_var), 0.5), t.scale(t.sum(quad), 0.5));
  return t.add_scalar(t.scale(s, -1.0),
                      -0.5 * kLogTwoPi * static_cast<double>(d));
}

NodeId gaussian_log_prob_rows(Tape& t, NodeId mean, NodeId log_var,
                              NodeId x) {
  const Tensor& m = t.value(mean);
  if (m.rank() != 2 || !m.same_shape(t.value(log_var)) ||
      !m.same_shape(t.value(x)))
    throw ContractViolation("gaussian_log_prob_rows: shape mismatch");
  std::size_t d = m.cols();
  NodeId diff = t.subtract(x, mean);
  NodeId quad = t.multiply(t.square(diff), t.exp(t.scale(log_var, -1.0)));
  NodeId s = t.add(t.sum_axis(log_var, 1), t.sum_axis(quad, 1));
  return t.add_scalar(t.scale(s, -0.5),
                      -0.5 * kLogTwoPi * static_cast<double>(d));
}

NodeId gaussian_log_prob_rows_iso(Tape& t, NodeId mean, double sigma,
                                  NodeId x) {
  const Tensor& m = t.value(mean);
  if (m.rank() != 2 || !m.same_shape(t.value(x)))
    throw ContractViolation("gaussian_log_prob_rows_iso: shape mismatch");
  std::size_t d = m.cols();
  double var = sigma * sigma;
  NodeId sq = t.sum_axis(t.square(t.subtract(x, mean)), 1);
  return t.add_scalar(
      t.scale(sq, -0.5 / var),
      -0.5 * static_cast<double>(d) * (kLogTwoPi + std::log(var)));
}

NodeId gaussian_sample_reparam(Tape& t, NodeId mean, NodeId log_var,
                               const Tensor& eps) {
  NodeId std_dev = t.exp(t.scale(log_var, 0.5));
  NodeId noise = t.multiply(std_dev, t.constant(eps));
  return t.add(mean, noise);
}

}  // namespace fdivmin
