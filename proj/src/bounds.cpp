#include "fdivmin/bounds.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>

#include "fdivmin/errors.hpp"

namespace fdivmin {

namespace {

constexpr double kLogRatioGuard = 500.0;

// KL(N(m0,S0) || N(m1,S1)) for full covariances.
double gaussian_kl_full(const Eigen::VectorXd& m0, const Eigen::MatrixXd& S0,
                        const Eigen::VectorXd& m1, const Eigen::MatrixXd& S1) {
  Eigen::MatrixXd S1inv = S1.inverse();
  Eigen::VectorXd d = m1 - m0;
  double k = static_cast<double>(m0.size());
  return 0.5 * ((S1inv * S0).trace() + d.dot(S1inv * d) - k +
                std::log(S1.determinant() / S0.determinant()));
}

double kl_1d(double m0, double v0, double m1, double v1) {
  return gaussian_kl_closed_form(
      {Tensor::vector({m0}), Tensor::vector({std::log(v0)})},
      {Tensor::vector({m1}), Tensor::vector({std::log(v1)})});
}

// B x D constant of fresh spreaded-data draws.
Tensor sample_data_rows(const SpreadedEmpirical& data, std::size_t b,
                        Rng& rng) {
  std::size_t d = data.dim();
  Tensor y = Tensor::zeros({b, d});
  for (std::size_t i = 0; i < b; ++i) {
    Tensor yi = data.sample(rng);
    for (std::size_t k = 0; k < d; ++k) y(i, k) = yi[k];
  }
  return y;
}

// Builds the oriented log-ratio rows for a fresh batch sampled from the
// direction's numerator joint.
NodeId sampled_log_ratio_rows(Tape& t, Direction dir, const ModelJoint& model,
                              const Encoder& enc, const SpreadedEmpirical& data,
                              const ParameterSet& ps, std::size_t batch,
                              Rng& rng) {
  if (dir == Direction::model_to_data) {
    NodeId z = t.constant(rng.normal_tensor({batch, model.latent_dim}));
    Tensor eps = rng.normal_tensor({batch, model.data_dim});
    auto draw = model.reparam_y(t, ps, z, eps);
    return joint_log_ratio(t, model, enc, data, ps, draw.y, z, dir, draw.mean)
        .log_ratio;
  }
  NodeId y = t.constant(sample_data_rows(data, batch, rng));
  auto [q_mean, q_log_var] = enc.forward(t, ps, y);
  NodeId z = gaussian_sample_reparam(
      t, q_mean, q_log_var, rng.normal_tensor({batch, enc.latent_dim()}));
  return joint_log_ratio(t, model, enc, data, ps, y, z, dir).log_ratio;
}

void check_log_ratio(const Tensor& log_r, const std::string& divergence) {
  for (std::size_t i = 0; i < log_r.size(); ++i) {
    if (!std::isfinite(log_r[i]) || std::abs(log_r[i]) > kLogRatioGuard)
      throw NumericFailure("upper bound integrand overflow: |log r| = " +
                           std::to_string(log_r[i]) + " at sample " +
                           std::to_string(i) + " (" + divergence + ")");
  }
}

}  // namespace

double JointLogRatioTerms::log_ratio(Direction dir) const {
  double model_minus_data =
      (log_p_y_given_z + log_p_z) - (log_p_hat_y + log_q_z_given_y);
  return dir == Direction::model_to_data ? model_minus_data
                                         : -model_minus_data;
}

ModelJoint generator_joint(const ImplicitGenerator& gen, double sigma) {
  if (!(sigma > 0.0))
    throw ContractViolation("generator_joint: sigma must be positive");
  ModelJoint m;
  m.data_dim = gen.data_dim();
  m.latent_dim = gen.latent_dim();
  m.reparam_y = [&gen, sigma](Tape& t, const ParameterSet& ps, NodeId z,
                              const Tensor& eps) -> ModelJoint::ReparamDraw {
    NodeId mean = gen.mean(t, ps, z);
    std::vector<double> noise = eps.raw();
    for (double& v : noise) v *= sigma;
    NodeId y = t.add(mean, t.constant(Tensor(eps.shape(), std::move(noise))));
    return {y, mean};
  };
  m.log_conditional_rows = [&gen, sigma](Tape& t, const ParameterSet& ps,
                                         NodeId y, NodeId z,
                                         NodeId mean_hint) -> NodeId {
    NodeId mean = mean_hint >= 0 ? mean_hint : gen.mean(t, ps, z);
    return gaussian_log_prob_rows_iso(t, mean, sigma, y);
  };
  m.mean_value = [&gen](const ParameterSet& ps, const Tensor& z) {
    return gen.mean_value(ps, z);
  };
  return m;
}

ModelJoint joint_gaussian_joint(const JointGaussianModel1D& model) {
  ModelJoint m;
  m.data_dim = 1;
  m.latent_dim = 1;
  m.reparam_y = [&model](Tape& t, const ParameterSet& ps, NodeId z,
                         const Tensor& eps) -> ModelJoint::ReparamDraw {
    NodeId mean = model.conditional_mean(t, ps, z);
    NodeId sc = t.exp(t.param(ps, model.log_sigma_c_name));
    // sigma_c is trainable, so the noise scale must stay on the tape:
    // y = mean + exp(log_sigma_c) * eps, broadcast via bias_add on zeros.
    std::size_t b = eps.rows();
    NodeId sc_rows = t.bias_add(t.constant(Tensor::zeros({b, 1})),
                                t.reshape(sc, {1}));
    NodeId y = t.add(mean, t.multiply(sc_rows, t.constant(eps)));
    return {y, mean};
  };
  m.log_conditional_rows = [&model](Tape& t, const ParameterSet& ps, NodeId y,
                                    NodeId z, NodeId mean_hint) -> NodeId {
    std::size_t b = t.value(y).rows();
    NodeId mean =
        mean_hint >= 0 ? mean_hint : model.conditional_mean(t, ps, z);
    NodeId lv = t.scale(t.param(ps, model.log_sigma_c_name), 2.0);
    NodeId lv_rows =
        t.bias_add(t.constant(Tensor::zeros({b, 1})), t.reshape(lv, {1}));
    return gaussian_log_prob_rows(t, mean, lv_rows, y);
  };
  m.mean_value = [&model](const ParameterSet& ps, const Tensor& z) {
    return Tensor::vector({model.mu(ps) + model.w(ps) * z[0]});
  };
  return m;
}

NodeId standard_normal_log_prob_rows(Tape& t, NodeId z) {
  const Tensor& zv = t.value(z);
  NodeId zero = t.constant(Tensor::zeros({zv.rows(), zv.cols()}));
  return gaussian_log_prob_rows(t, zero, zero, z);
}

JointLogRatioNodes joint_log_ratio(Tape& t, const ModelJoint& model,
                                   const Encoder& enc,
                                   const SpreadedEmpirical& data,
                                   const ParameterSet& ps, NodeId y, NodeId z,
                                   Direction dir, NodeId mean_hint) {
  JointLogRatioNodes out;
  out.log_p_y_given_z = model.log_conditional_rows(t, ps, y, z, mean_hint);
  out.log_p_z = standard_normal_log_prob_rows(t, z);
  out.log_p_hat_y =
      spread_log_prob_rows(t, y, data.dataset, data.noise.sigma);
  auto [q_mean, q_log_var] = enc.forward(t, ps, y);
  out.log_q_z_given_y = gaussian_log_prob_rows(t, q_mean, q_log_var, z);
  NodeId model_side = t.add(out.log_p_y_given_z, out.log_p_z);
  NodeId data_side = t.add(out.log_p_hat_y, out.log_q_z_given_y);
  out.log_ratio = dir == Direction::model_to_data
                      ? t.subtract(model_side, data_side)
                      : t.subtract(data_side, model_side);
  return out;
}

JointLogRatioTerms joint_log_ratio_terms(const ModelJoint& model,
                                         const Encoder& enc,
                                         const SpreadedEmpirical& data,
                                         const ParameterSet& ps,
                                         const Tensor& y, const Tensor& z) {
  Tape t;
  NodeId yn = t.constant(Tensor({1, y.size()}, y.raw()));
  NodeId zn = t.constant(Tensor({1, z.size()}, z.raw()));
  auto nodes = joint_log_ratio(t, model, enc, data, ps, yn, zn,
                               Direction::model_to_data);
  return {t.value(nodes.log_p_y_given_z).value(),
          t.value(nodes.log_p_z).value(), t.value(nodes.log_p_hat_y).value(),
          t.value(nodes.log_q_z_given_y).value()};
}

BoundEstimate upper_bound_estimate(const FDivergenceSpec& spec, Direction dir,
                                   const ModelJoint& model, const Encoder& enc,
                                   const SpreadedEmpirical& data,
                                   const ParameterSet& ps,
                                   std::size_t n_samples, Rng& rng) {
  if (n_samples < 2)
    throw ContractViolation("upper_bound_estimate: n_samples must be >= 2");
  // Chunked so the B x N spread matrix stays small at large sample counts.
  const std::size_t chunk = 512;
  double mean = 0.0, m2 = 0.0;
  std::size_t count = 0;
  for (std::size_t done = 0; done < n_samples;) {
    std::size_t b = std::min(chunk, n_samples - done);
    Tape t;
    NodeId log_r =
        sampled_log_ratio_rows(t, dir, model, enc, data, ps, b, rng);
    const Tensor& lr = t.value(log_r);
    check_log_ratio(lr, spec.name);
    for (std::size_t i = 0; i < b; ++i) {
      double v = spec.integrand_from_log_ratio(lr[i]);
      if (!std::isfinite(v))
        throw NumericFailure("upper_bound_estimate: non-finite integrand (" +
                             spec.name + ")");
      ++count;
      double delta = v - mean;
      mean += delta / static_cast<double>(count);
      m2 += delta * (v - mean);
    }
    done += b;
  }
  double variance = m2 / static_cast<double>(count - 1);
  double stderr_ = std::sqrt(std::max(variance, 0.0) /
                             static_cast<double>(count));
  return {mean, stderr_, count, dir, spec.name};
}

NodeId fdiv_upper_bound_loss(Tape& t, const FDivergenceSpec& spec,
                             Direction dir, const ModelJoint& model,
                             const Encoder& enc, const SpreadedEmpirical& data,
                             const ParameterSet& ps, std::size_t batch,
                             Rng& rng) {
  if (batch < 1)
    throw ContractViolation("fdiv_upper_bound_loss: batch must be >= 1");
  // No |log r| guard here: early in training the joints legitimately start
  // far apart, and the integrand forms stay finite for large |log r|.
  NodeId log_r =
      sampled_log_ratio_rows(t, dir, model, enc, data, ps, batch, rng);
  return t.mean(fdiv_integrand(t, spec, log_r));
}

NodeId elbo_rows(Tape& t, const ModelJoint& model, const Encoder& enc,
                 const ParameterSet& ps, NodeId y, const Tensor& eps_z) {
  auto [q_mean, q_log_var] = enc.forward(t, ps, y);
  NodeId z = gaussian_sample_reparam(t, q_mean, q_log_var, eps_z);
  NodeId log_cond = model.log_conditional_rows(t, ps, y, z, -1);
  NodeId log_prior = standard_normal_log_prob_rows(t, z);
  NodeId log_q = gaussian_log_prob_rows(t, q_mean, q_log_var, z);
  return t.subtract(t.add(log_cond, log_prior), log_q);
}

double elbo(const ModelJoint& model, const Encoder& enc,
            const ParameterSet& ps, const Tensor& y, std::size_t n_z_samples,
            Rng& rng) {
  if (n_z_samples < 1)
    throw ContractViolation("elbo: n_z_samples must be >= 1");
  Tape t;
  Tensor y_rows = Tensor::zeros({n_z_samples, y.size()});
  for (std::size_t i = 0; i < n_z_samples; ++i)
    for (std::size_t k = 0; k < y.size(); ++k) y_rows(i, k) = y[k];
  NodeId rows = elbo_rows(t, model, enc, ps, t.constant(std::move(y_rows)),
                          rng.normal_tensor({n_z_samples, enc.latent_dim()}));
  return t.value(t.mean(rows)).value();
}

NodeId forward_kl_surrogate_loss(Tape& t, const ModelJoint& model,
                                 const Encoder& enc,
                                 const SpreadedEmpirical& data,
                                 const ParameterSet& ps, std::size_t batch,
                                 Rng& rng) {
  if (batch < 1)
    throw ContractViolation("forward_kl_surrogate_loss: batch must be >= 1");
  NodeId y = t.constant(sample_data_rows(data, batch, rng));
  NodeId rows = elbo_rows(t, model, enc, ps, y,
                          rng.normal_tensor({batch, enc.latent_dim()}));
  return t.scale(t.mean(rows), -1.0);
}

NodeId reverse_kl_surrogate_loss(Tape& t, const ModelJoint& model,
                                 const Encoder& enc,
                                 const SpreadedEmpirical& data,
                                 const IndexSamplerConfig& logmix_cfg,
                                 const ParameterSet& ps, std::size_t batch,
                                 Rng& rng) {
  if (batch < 1)
    throw ContractViolation("reverse_kl_surrogate_loss: batch must be >= 1");
  Tensor z_draws = rng.normal_tensor({batch, model.latent_dim});
  NodeId z = t.constant(z_draws);
  Tensor eps = rng.normal_tensor({batch, model.data_dim});
  auto draw = model.reparam_y(t, ps, z, eps);
  NodeId log_cond =
      model.log_conditional_rows(t, ps, draw.y, z, draw.mean);
  NodeId log_prior = standard_normal_log_prob_rows(t, z);
  auto [q_mean, q_log_var] = enc.forward(t, ps, draw.y);
  NodeId log_q = gaussian_log_prob_rows(t, q_mean, q_log_var, z);
  // Index posteriors are evaluated at the noiseless means.
  const Tensor& means = t.value(draw.mean);
  NodeId surrogate = logmix_surrogate_rows(t, data.dataset, data.noise,
                                           draw.y, means, logmix_cfg, rng);
  return t.mean(
      t.subtract(t.add(log_cond, log_prior), t.add(log_q, surrogate)));
}

AppendixOracleReport appendix_a_oracle(const std::string& case_name) {
  if (case_name == "tightness") {
    // Model joint p(y,z): z ~ N(0,1), y|z ~ N(mu1 + w z, sc^2); data side
    // q(y) N(m2, s2^2) with conditional fixed to the model's exact
    // posterior, which is when the joint bound is tight.
    double mu1 = 0.3, w = 0.8, sc = 0.5, m2 = 1.2, s2 = 0.9;
    double s1v = w * w + sc * sc;
    double a = w / s1v, v = sc * sc / s1v;
    Eigen::VectorXd mp(2), mq(2);
    Eigen::MatrixXd Sp(2, 2), Sq(2, 2);
    mp << mu1, 0.0;
    Sp << s1v, w, w, 1.0;
    mq << m2, a * (m2 - mu1);
    Sq << s2 * s2, a * s2 * s2, a * s2 * s2, a * a * s2 * s2 + v;
    double joint = gaussian_kl_full(mp, Sp, mq, Sq);
    double marginal = kl_1d(mu1, s1v, m2, s2 * s2);
    return {case_name, joint, marginal, std::abs(joint - marginal)};
  }
  if (case_name == "independence_decomposition") {
    // Joint KL against an independent target decomposes into a latent KL
    // plus an expected conditional-vs-marginal KL.
    double mz = 0.2, vz = 0.49;        // q(z)
    double alpha = 0.5, beta = 0.1, s = 0.6;  // q(x|z) = N(alpha z + beta, s^2)
    double mx = 0.3, tt = 1.1;         // p(x)
    Eigen::VectorXd mq(2), mp(2);
    Eigen::MatrixXd Sq(2, 2), Sp(2, 2);
    mq << mz, alpha * mz + beta;
    Sq << vz, alpha * vz, alpha * vz, alpha * alpha * vz + s * s;
    mp << 0.0, mx;
    Sp << 1.0, 0.0, 0.0, tt * tt;
    double joint = gaussian_kl_full(mq, Sq, mp, Sp);
    double mean_gap_sq = alpha * alpha * vz +
                         (alpha * mz + beta - mx) * (alpha * mz + beta - mx);
    double expected_cond = std::log(tt / s) +
                           (s * s + mean_gap_sq) / (2.0 * tt * tt) - 0.5;
    double decomposed = kl_1d(mz, vz, 0.0, 1.0) + expected_cond;
    return {case_name, joint, decomposed, std::abs(joint - decomposed)};
  }
  if (case_name == "factorized") {
    // Shared latent on both sides: the joint KL collapses to the marginal.
    double mq = 0.4, vq = 0.64, mp = 0.0, vp = 1.69;
    Eigen::VectorXd m0(2), m1(2);
    Eigen::MatrixXd S0(2, 2), S1(2, 2);
    m0 << mq, 0.0;
    S0 << vq, 0.0, 0.0, 1.0;
    m1 << mp, 0.0;
    S1 << vp, 0.0, 0.0, 1.0;
    double joint = gaussian_kl_full(m0, S0, m1, S1);
    double marginal = kl_1d(mq, vq, mp, vp);
    return {case_name, joint, marginal, std::abs(joint - marginal)};
  }
  throw ContractViolation("appendix_a_oracle: unknown case " + case_name);
}

}  // namespace fdivmin
