#include "fdivmin/spread.hpp"

#include <Eigen/Core>

#include <cmath>

#include "fdivmin/errors.hpp"

namespace fdivmin {

namespace {
using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatMap = Eigen::Map<const RowMat>;

// G[b,n] = -|y_b - x_n|^2 / (2 sigma^2)
RowMat scaled_neg_sqdist(const Tensor& y, const Tensor& x, double sigma) {
  ConstMatMap my(y.data(), static_cast<Eigen::Index>(y.rows()),
                 static_cast<Eigen::Index>(y.cols()));
  ConstMatMap mx(x.data(), static_cast<Eigen::Index>(x.rows()),
                 static_cast<Eigen::Index>(x.cols()));
  RowMat g = my * mx.transpose();
  Eigen::VectorXd ny = my.rowwise().squaredNorm();
  Eigen::VectorXd nx = mx.rowwise().squaredNorm();
  g = ((2.0 * g).colwise() - ny).rowwise() - nx.transpose();
  g *= 1.0 / (2.0 * sigma * sigma);
  return g;
}
}  // namespace

SpreadNoise::SpreadNoise(double s) : sigma(s) {
  if (!(s > 0.0)) throw ContractViolation("SpreadNoise: sigma must be > 0");
}

double SpreadedEmpirical::log_prob(const Tensor& y) const {
  if (y.size() != dim())
    throw ContractViolation("SpreadedEmpirical::log_prob: dim mismatch");
  std::size_t n = dataset.num_points(), d = dim();
  double inv2v = 1.0 / (2.0 * noise.sigma * noise.sigma);
  double max_e = -std::numeric_limits<double>::infinity();
  std::vector<double> exponents(n);
  for (std::size_t i = 0; i < n; ++i) {
    double sq = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      double diff = y[k] - dataset.points(i, k);
      sq += diff * diff;
    }
    exponents[i] = -sq * inv2v;
    max_e = std::max(max_e, exponents[i]);
  }
  double s = 0.0;
  for (double e : exponents) s += std::exp(e - max_e);
  return max_e + std::log(s) - std::log(static_cast<double>(n)) -
         0.5 * static_cast<double>(d) *
             (kLogTwoPi + 2.0 * std::log(noise.sigma));
}

Tensor SpreadedEmpirical::sample(Rng& rng) const {
  std::size_t i = rng.uniform_index(dataset.num_points());
  Tensor y = dataset.point(i);
  for (std::size_t k = 0; k < dim(); ++k)
    y[k] += noise.sigma * rng.normal();
  return y;
}

DiagonalGaussian spread_model_conditional(Tensor generator_mean,
                                          const SpreadNoise& noise) {
  return DiagonalGaussian::isotropic(std::move(generator_mean), noise.sigma);
}

AnnealSchedule::AnnealSchedule(double start, double end, std::size_t steps)
    : sigma_start(start), sigma_end(end), total_steps(steps) {
  if (!(start >= end) || !(end > 0.0) || steps == 0)
    throw ContractViolation(
        "AnnealSchedule: need sigma_start >= sigma_end > 0 and steps > 0");
}

double AnnealSchedule::sigma_at(std::size_t step) const {
  if (step > total_steps)
    throw ContractViolation("AnnealSchedule: step out of range");
  double frac = static_cast<double>(step) / static_cast<double>(total_steps);
  return sigma_start * std::pow(sigma_end / sigma_start, frac);
}

NodeId spread_log_prob_rows(Tape& t, NodeId y, const EmpiricalDataset& data,
                            double sigma) {
  const Tensor& Y = t.value(y);
  if (Y.rank() != 2 || Y.cols() != data.dim())
    throw ContractViolation("spread_log_prob_rows: shape mismatch");
  Tensor points = data.points;
  std::size_t n = data.num_points(), d = data.dim();
  double norm_const = -std::log(static_cast<double>(n)) -
                      0.5 * static_cast<double>(d) *
                          (kLogTwoPi + 2.0 * std::log(sigma));

  ForwardFn fwd = [points, sigma, norm_const](
                      const std::vector<const Tensor*>& p) {
    const Tensor& Y = *p[0];
    RowMat g = scaled_neg_sqdist(Y, points, sigma);
    Tensor out = Tensor::zeros({Y.rows()});
    for (Eigen::Index b = 0; b < g.rows(); ++b) {
      double m = g.row(b).maxCoeff();
      double s = (g.row(b).array() - m).exp().sum();
      out[static_cast<std::size_t>(b)] = m + std::log(s) + norm_const;
    }
    return out;
  };
  BackwardFn bwd = [points, sigma](const Tensor& grad,
                                   const std::vector<const Tensor*>& p,
                                   const Tensor&, std::vector<Tensor*>& pg) {
    if (!pg[0]) return;
    const Tensor& Y = *p[0];
    RowMat g = scaled_neg_sqdist(Y, points, sigma);
    ConstMatMap mx(points.data(), static_cast<Eigen::Index>(points.rows()),
                   static_cast<Eigen::Index>(points.cols()));
    ConstMatMap my(Y.data(), static_cast<Eigen::Index>(Y.rows()),
                   static_cast<Eigen::Index>(Y.cols()));
    double inv_var = 1.0 / (sigma * sigma);
    Eigen::Map<RowMat> mg(pg[0]->data(), my.rows(), my.cols());
    for (Eigen::Index b = 0; b < g.rows(); ++b) {
      double m = g.row(b).maxCoeff();
      Eigen::VectorXd w = (g.row(b).array() - m).exp();
      w /= w.sum();
      // d logp / d y_b = (weighted data mean - y_b) / sigma^2
      Eigen::RowVectorXd pull =
          (w.transpose() * mx - my.row(b)) * inv_var;
      mg.row(b) += grad[static_cast<std::size_t>(b)] * pull;
    }
  };
  return t.custom("spread_log_prob_rows", {y}, std::move(fwd),
                  std::move(bwd));
}

}  // namespace fdivmin
