#pragma once

#include <functional>
#include <string>

#include "fdivmin/divergences.hpp"
#include "fdivmin/logmix.hpp"
#include "fdivmin/models.hpp"
#include "fdivmin/spread.hpp"

namespace fdivmin {

// Monte Carlo estimate of a joint f-divergence bound.
struct BoundEstimate {
  double value;
  double std_error;
  std::size_t n_samples;
  Direction direction;
  std::string divergence;
};

// The four log-densities entering the auxiliary joint ratio at one (y, z).
struct JointLogRatioTerms {
  double log_p_y_given_z;
  double log_p_z;
  double log_p_hat_y;
  double log_q_z_given_y;

  // model_to_data: model joint minus data joint; data_to_model: negated.
  double log_ratio(Direction dir) const;
};

// Tape-level hooks for the model joint p(z) p_theta(y|z). Two concrete
// instantiations exist: the implicit generator with a fixed spread width,
// and the trainable bivariate Gaussian.
struct ModelJoint {
  std::size_t data_dim = 1;
  std::size_t latent_dim = 1;

  struct ReparamDraw {
    NodeId y;
    NodeId mean;  // conditional mean node reused by log_conditional_rows
  };
  // y = reparameterized draw from p_theta(y|z); z is B x latent (node),
  // eps is B x data_dim noise entering as a constant.
  std::function<ReparamDraw(Tape&, const ParameterSet&, NodeId z,
                            const Tensor& eps)>
      reparam_y;
  // log p_theta(y|z) rows; mean_hint (< 0 when absent) is the node returned
  // by reparam_y, letting implementations skip a second forward pass.
  std::function<NodeId(Tape&, const ParameterSet&, NodeId y, NodeId z,
                       NodeId mean_hint)>
      log_conditional_rows;
  // Noiseless conditional mean value at a single z (index-posterior input).
  std::function<Tensor(const ParameterSet&, const Tensor& z)> mean_value;
};

ModelJoint generator_joint(const ImplicitGenerator& gen, double sigma);
ModelJoint joint_gaussian_joint(const JointGaussianModel1D& model);

// log N(z; 0, I) rows for a B x L node.
NodeId standard_normal_log_prob_rows(Tape& t, NodeId z);

// All four joint factors as tape nodes (B-vectors) at given (y, z) nodes.
struct JointLogRatioNodes {
  NodeId log_p_y_given_z;
  NodeId log_p_z;
  NodeId log_p_hat_y;
  NodeId log_q_z_given_y;
  NodeId log_ratio;  // oriented per the requested direction
};

JointLogRatioNodes joint_log_ratio(Tape& t, const ModelJoint& model,
                                   const Encoder& enc,
                                   const SpreadedEmpirical& data,
                                   const ParameterSet& ps, NodeId y, NodeId z,
                                   Direction dir, NodeId mean_hint = -1);

// Value-level single-point version of the above.
JointLogRatioTerms joint_log_ratio_terms(const ModelJoint& model,
                                         const Encoder& enc,
                                         const SpreadedEmpirical& data,
                                         const ParameterSet& ps,
                                         const Tensor& y, const Tensor& z);

// Monte Carlo upper bound: samples the joint named by the direction
// (model_to_data from p(z)p_theta(y|z), data_to_model from p_hat(y)q(z|y))
// and averages f(r)/r; int q f(p/q) = E_p[f(r)/r] bridges the integrator.
// Throws NumericFailure when |log r| exceeds 500 on any sample.
BoundEstimate upper_bound_estimate(const FDivergenceSpec& spec, Direction dir,
                                   const ModelJoint& model, const Encoder& enc,
                                   const SpreadedEmpirical& data,
                                   const ParameterSet& ps,
                                   std::size_t n_samples, Rng& rng);

// Differentiable batch loss: mean of f(r)/r over fresh joint samples from
// the direction's numerator side. Minimizing it in theta minimizes the
// bound; phi enters through log q. Used directly for js/gan training.
NodeId fdiv_upper_bound_loss(Tape& t, const FDivergenceSpec& spec,
                             Direction dir, const ModelJoint& model,
                             const Encoder& enc, const SpreadedEmpirical& data,
                             const ParameterSet& ps, std::size_t batch,
                             Rng& rng);

// Per-row single-sample ELBO at fixed y rows: log p_theta(y|z) + log p(z)
// - log q(z|y) with z = reparameterized draw from q(.|y) using eps_z rows.
NodeId elbo_rows(Tape& t, const ModelJoint& model, const Encoder& enc,
                 const ParameterSet& ps, NodeId y, const Tensor& eps_z);

// Monte Carlo ELBO at a single y.
double elbo(const ModelJoint& model, const Encoder& enc,
            const ParameterSet& ps, const Tensor& y, std::size_t n_z_samples,
            Rng& rng);

// Negative ELBO averaged over a fresh minibatch of spreaded data draws;
// equals the forward-KL joint bound up to the data-entropy constant.
NodeId forward_kl_surrogate_loss(Tape& t, const ModelJoint& model,
                                 const Encoder& enc,
                                 const SpreadedEmpirical& data,
                                 const ParameterSet& ps, std::size_t batch,
                                 Rng& rng);

// Reverse-KL training loss: mean over model-joint samples of
// [log p_theta(y|z) + log p(z) - log q(z|y) - logmix_surrogate(y)].
// The surrogate replaces log p_hat only in the gradient path; bound values
// for reporting come from upper_bound_estimate (exact full sum).
NodeId reverse_kl_surrogate_loss(Tape& t, const ModelJoint& model,
                                 const Encoder& enc,
                                 const SpreadedEmpirical& data,
                                 const IndexSamplerConfig& logmix_cfg,
                                 const ParameterSet& ps, std::size_t batch,
                                 Rng& rng);

// Closed-form checks of the bound identities on fixed Gaussian instances;
// each case computes both sides by independent routes.
struct AppendixOracleReport {
  std::string case_name;
  double joint_value;
  double marginal_value;
  double discrepancy;
};

// case_name in {tightness, independence_decomposition, factorized}.
AppendixOracleReport appendix_a_oracle(const std::string& case_name);

}  // namespace fdivmin
