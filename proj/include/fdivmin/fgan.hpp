#pragma once

#include <string>
#include <vector>

#include "fdivmin/bounds.hpp"
#include "fdivmin/divergences.hpp"
#include "fdivmin/mixture.hpp"
#include "fdivmin/models.hpp"

namespace fdivmin {

// Unconstrained critic V(x); the divergence name fixes the output
// activation mapping V into the conjugate domain.
struct Discriminator {
  Mlp net;
  std::string divergence;

  Discriminator(std::string prefix, std::size_t data_dim,
                std::vector<std::size_t> hidden,
                std::string divergence_name);

  void init_params(ParameterSet& ps, Rng& rng) const;  // phi role

  // Raw V on B x data_dim input; returns B x 1.
  NodeId raw(Tape& t, const ParameterSet& ps, NodeId x) const;
};

// Tape nodes for g_f(v) and f*(g_f(v)), elementwise, in overflow-free form.
NodeId fgan_activation(Tape& t, const FDivergenceSpec& spec, NodeId v);
NodeId fgan_conjugate_of_activation(Tape& t, const FDivergenceSpec& spec,
                                    NodeId v);

// Differentiable variational lower bound
//   mean_data[g_f(V(x))] - mean_model[f*(g_f(V(x)))]
// with the model side reparameterized. n_samples draws per side.
NodeId fgan_bound_node(Tape& t, const FDivergenceSpec& spec,
                       const GaussianMixture& target,
                       const GaussianModel1D& model,
                       const Discriminator& disc, const ParameterSet& ps,
                       std::size_t n_samples, Rng& rng);

// Value + std error of the same estimator on fresh draws.
BoundEstimate lower_bound_estimate(const FDivergenceSpec& spec,
                                   const GaussianMixture& target,
                                   const GaussianModel1D& model,
                                   const Discriminator& disc,
                                   const ParameterSet& ps,
                                   std::size_t n_samples, Rng& rng);

struct FganSchedule {
  std::size_t steps = 20000;
  double lr_model = 1e-3;
  double lr_disc = 1e-3;
  std::size_t disc_steps_per_model_step = 1;
  std::size_t batch = 100;
  std::size_t quad_every = 0;  // 0 disables the exact-divergence column
};

struct FganTraceRow {
  std::size_t step;
  double bound;
  double mu;
  double sigma;
  double exact_divergence;  // NaN when not evaluated this step
};

struct FganResult {
  std::vector<FganTraceRow> trace;
  bool diverged = false;
};

// Alternating ascent on the discriminator / descent on the model. Aborts
// (returning the trace so far) when |bound| exceeds 1e3.
FganResult fgan_train(const FDivergenceSpec& spec,
                      const GaussianMixture& target,
                      const GaussianModel1D& model, const Discriminator& disc,
                      ParameterSet& ps, const FganSchedule& schedule,
                      Rng& rng);

}  // namespace fdivmin
