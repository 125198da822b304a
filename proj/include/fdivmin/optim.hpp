#pragma once

#include <optional>
#include <string>
#include <unordered_map>

#include "fdivmin/params.hpp"

namespace fdivmin {

enum class OptimizerKind { sgd, adam, rmsprop };

OptimizerKind optimizer_from_name(const std::string& name);

// SGD / Adam (bias-corrected) / RMSprop over a ParameterSet, optionally
// restricted to one role. Accumulators are created lazily and mirror the
// parameter shapes.
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double learning_rate,
            std::optional<Role> role = {});

  // Applies one update in place. Gradients must be keyed like the
  // parameters; missing keys for in-role parameters are a contract error.
  void step(ParameterSet& params, const GradientMap& grads);

  long step_count() const { return step_count_; }
  double learning_rate() const { return lr_; }
  void set_learning_rate(double lr) { lr_ = lr; }

  // Adam defaults.
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  // RMSprop defaults.
  double rms_decay = 0.9;
  double rms_eps = 1e-8;

 private:
  OptimizerKind kind_;
  double lr_;
  std::optional<Role> role_;
  long step_count_ = 0;
  std::unordered_map<std::string, Tensor> m_;  // first moment / rms accum
  std::unordered_map<std::string, Tensor> v_;  // second moment (adam)
};

}  // namespace fdivmin
