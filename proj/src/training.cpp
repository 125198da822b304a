#include "fdivmin/training.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include "fdivmin/errors.hpp"

namespace fdivmin {

TrainResult interleaved_train(const Objective& objective, Optimizer& theta_opt,
                              Optimizer& phi_opt, ParameterSet& params,
                              const LoopSchedule& schedule,
                              const BoundEval& bound_eval,
                              std::size_t bound_every, Rng& rng) {
  TrainResult result;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  ParameterSet snapshot = params;
  auto abort_with = [&](const std::string& reason) {
    params = snapshot;
    result.aborted = true;
    result.abort_reason = reason;
  };
  for (std::size_t step = 0; step < schedule.theta_steps; ++step) {
    double sigma = schedule.sigma_at(step);
    try {
      for (std::size_t k = 0; k < schedule.phi_steps_per_theta; ++k) {
        Tape t;
        NodeId loss = objective(t, params, sigma, rng);
        double value = t.value(loss).value();
        if (!std::isfinite(value)) {
          abort_with("non-finite phi loss at step " + std::to_string(step));
          return result;
        }
        phi_opt.step(params, t.backward(loss));
        result.trace.push_back({step, "phi", sigma, value, nan, nan});
      }
      Tape t;
      NodeId loss = objective(t, params, sigma, rng);
      double value = t.value(loss).value();
      if (!std::isfinite(value)) {
        abort_with("non-finite theta loss at step " + std::to_string(step));
        return result;
      }
      double bound_mean = nan, bound_stderr = nan;
      if (bound_eval && bound_every > 0 && step % bound_every == 0) {
        BoundEstimate est = bound_eval(params, sigma, rng);
        bound_mean = est.value;
        bound_stderr = est.std_error;
      }
      theta_opt.step(params, t.backward(loss));
      result.trace.push_back(
          {step, "theta", sigma, value, bound_mean, bound_stderr});
      snapshot = params;
    } catch (const NumericFailure& e) {
      abort_with(std::string("numeric failure at step ") +
                 std::to_string(step) + ": " + e.what());
      return result;
    }
  }
  return result;
}

void write_trace_csv(const std::vector<TraceRow>& trace,
                     const std::string& path) {
  std::ofstream f(path);
  if (!f) throw ContractViolation("write_trace_csv: cannot open " + path);
  f << "step,phase,sigma,loss,bound_mean,bound_stderr\n";
  f.precision(12);
  for (const auto& row : trace) {
    f << row.step << ',' << row.phase << ',' << row.sigma << ',' << row.loss
      << ',';
    if (std::isnan(row.bound_mean))
      f << ',';
    else
      f << row.bound_mean << ',';
    if (!std::isnan(row.bound_stderr)) f << row.bound_stderr;
    f << '\n';
  }
}

}  // namespace fdivmin
