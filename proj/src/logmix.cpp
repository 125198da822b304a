#include "fdivmin/logmix.hpp"

#include <Eigen/Dense>

#include <cmath>

#include "fdivmin/errors.hpp"
#include "fdivmin/gaussian.hpp"

namespace fdivmin {

namespace {
using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatMap = Eigen::Map<const RowMat>;

std::vector<double> softmax(std::vector<double> logits) {
  double m = logits[0];
  for (double v : logits) m = std::max(m, v);
  double s = 0.0;
  for (double& v : logits) {
    v = std::exp(v - m);
    s += v;
  }
  for (double& v : logits) v /= s;
  return logits;
}
}  // namespace

Tensor PcaProjection::project(const Tensor& x) const {
  std::size_t D = basis.rows(), d = basis.cols();
  if (x.size() != D)
    throw ContractViolation("PcaProjection::project: dimension mismatch");
  Tensor out = Tensor::zeros({d});
  for (std::size_t j = 0; j < d; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < D; ++i)
      s += basis(i, j) * (x[i] - center[i]);
    out[j] = s;
  }
  return out;
}

PcaProjection fit_pca(const EmpiricalDataset& data, std::size_t d) {
  std::size_t N = data.num_points(), D = data.dim();
  if (d < 1 || d > std::min(N, D))
    throw ContractViolation("fit_pca: need 1 <= d <= min(N, D)");
  ConstMatMap x(data.points.data(), static_cast<Eigen::Index>(N),
                static_cast<Eigen::Index>(D));
  Eigen::RowVectorXd mean = x.colwise().mean();
  RowMat centered = x.rowwise() - mean;
  Eigen::MatrixXd cov =
      centered.transpose() * centered / static_cast<double>(N - 1 ? N - 1 : 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success)
    throw NumericFailure("fit_pca: eigendecomposition failed");
  // Eigenvalues ascend; take the top d and check they are non-degenerate.
  std::size_t rank = 0;
  double top = eig.eigenvalues()(static_cast<Eigen::Index>(D - 1));
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(D); ++i)
    if (eig.eigenvalues()(i) > 1e-12 * std::max(top, 1.0)) ++rank;
  if (rank < d)
    throw ContractViolation("fit_pca: covariance rank " +
                            std::to_string(rank) + " < requested d=" +
                            std::to_string(d));
  Tensor basis = Tensor::zeros({D, d});
  Tensor center = Tensor::zeros({D});
  for (std::size_t i = 0; i < D; ++i) center[i] = mean(static_cast<int>(i));
  for (std::size_t j = 0; j < d; ++j) {
    Eigen::VectorXd col =
        eig.eigenvectors().col(static_cast<Eigen::Index>(D - 1 - j));
    // Deterministic sign: largest-magnitude entry positive.
    Eigen::Index argmax = 0;
    col.cwiseAbs().maxCoeff(&argmax);
    if (col(argmax) < 0.0) col = -col;
    for (std::size_t i = 0; i < D; ++i)
      basis(i, j) = col(static_cast<Eigen::Index>(i));
  }
  return {std::move(basis), std::move(center)};
}

std::vector<double> index_posterior(const EmpiricalDataset& data,
                                    const SpreadNoise& noise, const Tensor& y,
                                    const Tensor& generator_mean,
                                    const IndexSamplerConfig& config) {
  std::size_t N = data.num_points(), D = data.dim();
  std::vector<double> logits(N);
  if (config.use_unbiased) {
    double inv = 1.0 / (2.0 * noise.sigma * noise.sigma);
    for (std::size_t n = 0; n < N; ++n) {
      double sq = 0.0;
      for (std::size_t k = 0; k < D; ++k) {
        double diff = y[k] - data.points(n, k);
        sq += diff * diff;
      }
      logits[n] = -sq * inv;
    }
    return softmax(std::move(logits));
  }
  if (!config.pca)
    throw ContractViolation("index_posterior: trick mode needs a PCA");
  const Tensor& ref = config.trick_on_y ? y : generator_mean;
  Tensor pref = config.pca->project(ref);
  double inv = config.trick_on_y
                   ? 1.0 / (2.0 * noise.sigma * noise.sigma)
                   : 1.0 / config.temperature;
  std::size_t d = config.pca->reduced_dim();
  for (std::size_t n = 0; n < N; ++n) {
    Tensor px = config.pca->project(data.point(n));
    double sq = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      double diff = pref[k] - px[k];
      sq += diff * diff;
    }
    logits[n] = -sq * inv;
  }
  return softmax(std::move(logits));
}

NodeId logmix_surrogate_rows(Tape& t, const EmpiricalDataset& data,
                             const SpreadNoise& noise, NodeId y,
                             const Tensor& means,
                             const IndexSamplerConfig& config, Rng& rng) {
  const Tensor& Y = t.value(y);
  if (Y.rank() != 2 || Y.cols() != data.dim() || !Y.same_shape(means))
    throw ContractViolation("logmix_surrogate_rows: shape mismatch");
  std::size_t B = Y.rows(), D = Y.cols();
  std::size_t T = config.samples_per_y;
  double var = noise.sigma * noise.sigma;

  // Draw T indices per row; only the selected points' first/second moments
  // enter the surrogate:
  //   (1/T) sum_t log N(y; x_t, s^2 I)
  //     = -D/2 log(2 pi s^2) - (|y|^2 - 2 y . sbar + cbar) / (2 s^2)
  // with sbar = mean of selected points, cbar = mean of their |x|^2.
  Tensor sel_mean = Tensor::zeros({B, D});
  Tensor sel_sq = Tensor::zeros({B});
  for (std::size_t b = 0; b < B; ++b) {
    Tensor yb = Tensor::zeros({D});
    Tensor mb = Tensor::zeros({D});
    for (std::size_t k = 0; k < D; ++k) {
      yb[k] = Y(b, k);
      mb[k] = means(b, k);
    }
    std::vector<double> post = index_posterior(data, noise, yb, mb, config);
    for (std::size_t s = 0; s < T; ++s) {
      std::size_t n = rng.categorical(post);
      double sq = 0.0;
      for (std::size_t k = 0; k < D; ++k) {
        double xv = data.points(n, k);
        sel_mean(b, k) += xv / static_cast<double>(T);
        sq += xv * xv;
      }
      sel_sq[b] += sq / static_cast<double>(T);
    }
  }

  NodeId sq_y = t.sum_axis(t.square(y), 1);
  NodeId dot = t.sum_axis(t.multiply(y, t.constant(std::move(sel_mean))), 1);
  Tensor offset = Tensor::zeros({B});
  double log_norm =
      -0.5 * static_cast<double>(D) * (kLogTwoPi + std::log(var));
  for (std::size_t b = 0; b < B; ++b)
    offset[b] = log_norm - sel_sq[b] / (2.0 * var);
  return t.add(t.add(t.scale(sq_y, -0.5 / var), t.scale(dot, 1.0 / var)),
               t.constant(std::move(offset)));
}

double naive_minibatch_log_prob(const EmpiricalDataset& data,
                                const SpreadNoise& noise, const Tensor& y,
                                const std::vector<std::size_t>& minibatch) {
  if (minibatch.empty())
    throw ContractViolation("naive_minibatch_log_prob: empty minibatch");
  std::size_t D = data.dim();
  double inv2v = 1.0 / (2.0 * noise.sigma * noise.sigma);
  double max_e = -std::numeric_limits<double>::infinity();
  std::vector<double> exponents;
  exponents.reserve(minibatch.size());
  for (std::size_t m : minibatch) {
    double sq = 0.0;
    for (std::size_t k = 0; k < D; ++k) {
      double diff = y[k] - data.points(m, k);
      sq += diff * diff;
    }
    exponents.push_back(-sq * inv2v);
    max_e = std::max(max_e, exponents.back());
  }
  double s = 0.0;
  for (double e : exponents) s += std::exp(e - max_e);
  return max_e + std::log(s) -
         std::log(static_cast<double>(minibatch.size())) -
         0.5 * static_cast<double>(D) *
             (kLogTwoPi + 2.0 * std::log(noise.sigma));
}

}  // namespace fdivmin
