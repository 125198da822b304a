#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "fdivmin/bounds.hpp"
#include "fdivmin/optim.hpp"
#include "fdivmin/spread.hpp"

namespace fdivmin {

// Interleaving plan: per theta step, refresh sigma, run k phi-only steps,
// then one theta step.
struct LoopSchedule {
  std::size_t theta_steps = 1000;
  std::size_t phi_steps_per_theta = 1;
  std::size_t batch = 100;
  std::optional<AnnealSchedule> anneal;
  double fixed_sigma = 1.0;  // spread width when not annealing

  double sigma_at(std::size_t step) const {
    return anneal ? anneal->sigma_at(step) : fixed_sigma;
  }
};

struct TraceRow {
  std::size_t step;
  std::string phase;  // "phi" or "theta"
  double sigma;
  double loss;
  double bound_mean;    // NaN when not evaluated at this row
  double bound_stderr;  // NaN when not evaluated at this row
};

// Builds the tape-recorded scalar loss for the current parameters at the
// given spread width.
using Objective =
    std::function<NodeId(Tape&, const ParameterSet&, double sigma, Rng&)>;

// Optional bound evaluator reported along the trace (empty = skipped).
using BoundEval =
    std::function<BoundEstimate(const ParameterSet&, double sigma, Rng&)>;

struct TrainResult {
  std::vector<TraceRow> trace;
  bool aborted = false;
  std::string abort_reason;
};

// Runs the interleaved loop, mutating `params` in place. A non-finite loss
// (or a numeric failure inside the objective) aborts and restores the last
// parameters that produced a finite theta-step loss. `bound_every` > 0
// evaluates `bound_eval` on every that-many-th theta step.
TrainResult interleaved_train(const Objective& objective, Optimizer& theta_opt,
                              Optimizer& phi_opt, ParameterSet& params,
                              const LoopSchedule& schedule,
                              const BoundEval& bound_eval,
                              std::size_t bound_every, Rng& rng);

void write_trace_csv(const std::vector<TraceRow>& trace,
                     const std::string& path);

}  // namespace fdivmin
