#pragma once

#include <functional>
#include <string>
#include <vector>

#include "fdivmin/gaussian.hpp"
#include "fdivmin/tape.hpp"

namespace fdivmin {

// Orientation of the ratio u inside f and of the integrating density:
//   data_to_model : u = p_data / p_model, integrator p_model (Table-1 order)
//   model_to_data : u = p_model / p_data, integrator p_data
// Every bound/oracle call states this explicitly.
enum class Direction { data_to_model, model_to_data };

Direction direction_from_name(const std::string& name);
const char* direction_name(Direction d);

// One named f-divergence: f, f', the Fenchel conjugate f*, its domain, and
// the output activation g_f that maps an unconstrained value into dom f*.
// The GAN f from the usual table has f(1) = -log 4; it is stored shifted by
// +2 log 2 so every registry entry satisfies f(1) = 0, and the shift is
// recorded for comparisons against the unshifted convention.
struct FDivergenceSpec {
  std::string name;
  double (*f)(double u);
  double (*f_prime)(double u);
  double (*conjugate)(double t);          // conjugate of the stored f
  bool (*in_conjugate_domain)(double t);
  double (*activation)(double v);         // g_f
  double f_shift;                         // stored f = table f + f_shift

  // f(e^L)/e^L evaluated stably from the log-ratio L. This is the
  // per-sample integrand of the sampled bound (integrand of
  // int q f(p/q) seen from the p side).
  double (*integrand_from_log_ratio)(double log_r);
  double (*integrand_derivative)(double log_r);  // d/dL of the above

  // q f(p/q) evaluated from the two log densities without ever forming the
  // ratio; stays finite in tails where exp(lp) * integrand would be 0 * inf.
  double (*q_times_f)(double lp, double lq);
};

double f_eval(const FDivergenceSpec& spec, double u);
double f_prime_eval(const FDivergenceSpec& spec, double u);
double conjugate_eval(const FDivergenceSpec& spec, double t);
double output_activation_eval(const FDivergenceSpec& spec, double v);

const FDivergenceSpec& divergence_by_name(const std::string& name);
const std::vector<FDivergenceSpec>& all_divergences();

// Tape-recorded elementwise integrand transform f(r)/r applied to a tensor
// of log-ratios.
NodeId fdiv_integrand(Tape& t, const FDivergenceSpec& spec, NodeId log_ratio);

// Adaptive-Simpson evaluation of  int q(x) f(p(x)/q(x)) dx  on 1-D
// densities, with (p, q) assigned from `direction`. Densities are passed as
// log-densities for stability. Throws NumericFailure if the tolerance is
// not reached within max_depth.
double exact_fdiv_quadrature(const FDivergenceSpec& spec, Direction direction,
                             const std::function<double(double)>& log_p_data,
                             const std::function<double(double)>& log_p_model,
                             double lo, double hi, double abs_tol = 1e-8,
                             int max_depth = 40);

}  // namespace fdivmin
