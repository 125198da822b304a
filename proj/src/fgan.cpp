#include "fdivmin/fgan.hpp"

#include <cmath>
#include <limits>

#include "fdivmin/errors.hpp"
#include "fdivmin/optim.hpp"

namespace fdivmin {

namespace {

constexpr double kLogTwo = 0.6931471805599453;

double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                  : std::exp(x) / (1.0 + std::exp(x));
}

using ScalarFn = double (*)(double);

NodeId elementwise(Tape& t, const std::string& label, NodeId x, ScalarFn val,
                   ScalarFn deriv) {
  ForwardFn fwd = [val](const std::vector<const Tensor*>& p) {
    Tensor out = *p[0];
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = val(out[i]);
    return out;
  };
  BackwardFn bwd = [deriv](const Tensor& g,
                           const std::vector<const Tensor*>& p, const Tensor&,
                           std::vector<Tensor*>& pg) {
    if (!pg[0]) return;
    for (std::size_t i = 0; i < g.size(); ++i)
      (*pg[0])[i] += g[i] * deriv((*p[0])[i]);
  };
  return t.custom(label, {x}, std::move(fwd), std::move(bwd));
}

// Activation / composed-conjugate pairs in overflow-free form.
double act_rev(double v) { return -std::exp(v); }
double act_rev_d(double v) { return -std::exp(v); }
double act_js(double v) { return 0.5 * (kLogTwo - softplus(-v)); }
double act_js_d(double v) { return 0.5 * sigmoid(-v); }
double act_soft(double v) { return -softplus(-v); }
double act_soft_d(double v) { return sigmoid(-v); }

double conj_fwd(double v) { return std::exp(v - 1.0); }
double conj_rev(double v) { return -1.0 - v; }
double conj_rev_d(double) { return -1.0; }
double conj_js(double v) { return 0.5 * (softplus(v) - kLogTwo); }
double conj_js_d(double v) { return 0.5 * sigmoid(v); }
double conj_gan(double v) { return softplus(v) - 2.0 * kLogTwo; }
double conj_soft_d(double v) { return sigmoid(v); }

struct BoundParts {
  NodeId data_side;   // B x 1 per-sample g_f(V(x))
  NodeId model_side;  // B x 1 per-sample f*(g_f(V(y)))
  NodeId bound;       // scalar
};

NodeId model_samples(Tape& t, const GaussianModel1D& model,
                     const ParameterSet& ps, const Tensor& eps) {
  std::size_t b = eps.rows();
  NodeId zeros = t.constant(Tensor::zeros({b, 1}));
  NodeId mu_rows = t.bias_add(zeros, t.reshape(t.param(ps, model.mu_name),
                                               {1}));
  NodeId s_rows = t.bias_add(
      zeros, t.reshape(t.exp(t.param(ps, model.log_sigma_name)), {1}));
  return t.add(mu_rows, t.multiply(s_rows, t.constant(eps)));
}

BoundParts build_bound(Tape& t, const FDivergenceSpec& spec,
                       const GaussianMixture& target,
                       const GaussianModel1D& model, const Discriminator& disc,
                       const ParameterSet& ps, std::size_t n, Rng& rng) {
  Tensor x = Tensor::zeros({n, 1});
  for (std::size_t i = 0; i < n; ++i) x(i, 0) = target.sample(rng)[0];
  NodeId data_side =
      fgan_activation(t, spec, disc.raw(t, ps, t.constant(std::move(x))));
  NodeId y = model_samples(t, model, ps, rng.normal_tensor({n, 1}));
  NodeId model_side =
      fgan_conjugate_of_activation(t, spec, disc.raw(t, ps, y));
  NodeId bound = t.subtract(t.mean(data_side), t.mean(model_side));
  return {data_side, model_side, bound};
}

double sample_variance(const Tensor& v) {
  double mean = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) mean += v[i];
  mean /= static_cast<double>(v.size());
  double s = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i)
    s += (v[i] - mean) * (v[i] - mean);
  return s / static_cast<double>(v.size() - 1);
}

}  // namespace

Discriminator::Discriminator(std::string prefix, std::size_t data_dim,
                             std::vector<std::size_t> hidden,
                             std::string divergence_name)
    : net(Mlp(std::move(prefix), data_dim, std::move(hidden), 1)),
      divergence(std::move(divergence_name)) {
  divergence_by_name(divergence);  // validate eagerly
}

void Discriminator::init_params(ParameterSet& ps, Rng& rng) const {
  net.init_params(ps, Role::phi, rng);
}

NodeId Discriminator::raw(Tape& t, const ParameterSet& ps, NodeId x) const {
  return net.forward(t, ps, x);
}

NodeId fgan_activation(Tape& t, const FDivergenceSpec& spec, NodeId v) {
  if (spec.name == "forward_kl") return v;  // identity activation
  if (spec.name == "reverse_kl")
    return elementwise(t, "fgan_act_rev", v, act_rev, act_rev_d);
  if (spec.name == "js")
    return elementwise(t, "fgan_act_js", v, act_js, act_js_d);
  if (spec.name == "gan")
    return elementwise(t, "fgan_act_gan", v, act_soft, act_soft_d);
  throw ContractViolation("fgan_activation: no activation for " + spec.name);
}

NodeId fgan_conjugate_of_activation(Tape& t, const FDivergenceSpec& spec,
                                    NodeId v) {
  // The composition is evaluated directly so no intermediate can leave the
  // conjugate domain; the domain claim itself is asserted in debug tests.
  if (spec.name == "forward_kl")
    return elementwise(t, "fgan_conj_fwd", v, conj_fwd, conj_fwd);
  if (spec.name == "reverse_kl")
    return elementwise(t, "fgan_conj_rev", v, conj_rev, conj_rev_d);
  if (spec.name == "js")
    return elementwise(t, "fgan_conj_js", v, conj_js, conj_js_d);
  if (spec.name == "gan")
    return elementwise(t, "fgan_conj_gan", v, conj_gan, conj_soft_d);
  throw ContractViolation("fgan_conjugate_of_activation: no form for " +
                          spec.name);
}

NodeId fgan_bound_node(Tape& t, const FDivergenceSpec& spec,
                       const GaussianMixture& target,
                       const GaussianModel1D& model,
                       const Discriminator& disc, const ParameterSet& ps,
                       std::size_t n_samples, Rng& rng) {
  if (n_samples < 2)
    throw ContractViolation("fgan_bound_node: n_samples must be >= 2");
  return build_bound(t, spec, target, model, disc, ps, n_samples, rng).bound;
}

BoundEstimate lower_bound_estimate(const FDivergenceSpec& spec,
                                   const GaussianMixture& target,
                                   const GaussianModel1D& model,
                                   const Discriminator& disc,
                                   const ParameterSet& ps,
                                   std::size_t n_samples, Rng& rng) {
  if (n_samples < 2)
    throw ContractViolation("lower_bound_estimate: n_samples must be >= 2");
  Tape t;
  BoundParts parts =
      build_bound(t, spec, target, model, disc, ps, n_samples, rng);
  double n = static_cast<double>(n_samples);
  double var = sample_variance(t.value(parts.data_side)) / n +
               sample_variance(t.value(parts.model_side)) / n;
  return {t.value(parts.bound).value(), std::sqrt(var), n_samples,
          Direction::data_to_model, spec.name};
}

FganResult fgan_train(const FDivergenceSpec& spec,
                      const GaussianMixture& target,
                      const GaussianModel1D& model, const Discriminator& disc,
                      ParameterSet& ps, const FganSchedule& schedule,
                      Rng& rng) {
  Optimizer model_opt(OptimizerKind::adam, schedule.lr_model, Role::theta);
  Optimizer disc_opt(OptimizerKind::adam, schedule.lr_disc, Role::phi);
  FganResult result;
  result.trace.reserve(schedule.steps);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t step = 0; step < schedule.steps; ++step) {
    for (std::size_t d = 0; d < schedule.disc_steps_per_model_step; ++d) {
      Tape t;
      NodeId bound = fgan_bound_node(t, spec, target, model, disc, ps,
                                     schedule.batch, rng);
      disc_opt.step(ps, t.backward(t.scale(bound, -1.0)));  // ascent
    }
    Tape t;
    NodeId bound = fgan_bound_node(t, spec, target, model, disc, ps,
                                   schedule.batch, rng);
    double bound_value = t.value(bound).value();
    double exact = nan;
    if (schedule.quad_every > 0 && step % schedule.quad_every == 0) {
      const FDivergenceSpec& s = spec;
      double lo = model.mu(ps) - 12.0 * model.sigma(ps);
      double hi = model.mu(ps) + 12.0 * model.sigma(ps);
      for (std::size_t k = 0; k < target.num_components(); ++k) {
        lo = std::min(lo, target.means(k, 0) - 12.0 * target.stds(k, 0));
        hi = std::max(hi, target.means(k, 0) + 12.0 * target.stds(k, 0));
      }
      exact = exact_fdiv_quadrature(
          s, Direction::data_to_model,
          [&](double x) { return target.log_prob1(x); },
          [&](double x) { return model.log_prob(ps, x); }, lo, hi);
    }
    result.trace.push_back(
        {step, bound_value, model.mu(ps), model.sigma(ps), exact});
    if (std::abs(bound_value) > 1e3 || !std::isfinite(bound_value)) {
      result.diverged = true;
      return result;
    }
    model_opt.step(ps, t.backward(bound));  // descent on the bound
  }
  return result;
}

}  // namespace fdivmin
