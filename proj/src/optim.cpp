#include "fdivmin/optim.hpp"

#include <cmath>

#include "fdivmin/errors.hpp"

namespace fdivmin {

OptimizerKind optimizer_from_name(const std::string& name) {
  if (name == "sgd") return OptimizerKind::sgd;
  if (name == "adam") return OptimizerKind::adam;
  if (name == "rmsprop") return OptimizerKind::rmsprop;
  throw ContractViolation("unknown optimizer: " + name);
}

Optimizer::Optimizer(OptimizerKind kind, double learning_rate,
                     std::optional<Role> role)
    : kind_(kind), lr_(learning_rate), role_(role) {}

void Optimizer::step(ParameterSet& params, const GradientMap& grads) {
  ++step_count_;
  for (const auto& entry : params.entries()) {
    if (role_ && entry.role != *role_) continue;
    auto it = grads.find(entry.name);
    if (it == grads.end())
      throw ContractViolation("Optimizer::step: missing gradient for " +
                              entry.name);
    const Tensor& g = it->second;
    Tensor& p = params.at(entry.name);
    if (!g.same_shape(p))
      throw ContractViolation("Optimizer::step: gradient shape mismatch for " +
                              entry.name);
    switch (kind_) {
      case OptimizerKind::sgd: {
        for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr_ * g[i];
        break;
      }
      case OptimizerKind::adam: {
        auto [mi, inserted_m] = m_.try_emplace(entry.name,
                                               Tensor::zeros(p.shape()));
        auto [vi, inserted_v] = v_.try_emplace(entry.name,
                                               Tensor::zeros(p.shape()));
        Tensor& m = mi->second;
        Tensor& v = vi->second;
        double t = static_cast<double>(step_count_);
        double bc1 = 1.0 - std::pow(beta1, t);
        double bc2 = 1.0 - std::pow(beta2, t);
        for (std::size_t i = 0; i < p.size(); ++i) {
          m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
          v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
          double mhat = m[i] / bc1;
          double vhat = v[i] / bc2;
          p[i] -= lr_ * mhat / (std::sqrt(vhat) + adam_eps);
        }
        break;
      }
      case OptimizerKind::rmsprop: {
        auto [mi, inserted] = m_.try_emplace(entry.name,
                                             Tensor::zeros(p.shape()));
        Tensor& acc = mi->second;
        for (std::size_t i = 0; i < p.size(); ++i) {
          acc[i] = rms_decay * acc[i] + (1.0 - rms_decay) * g[i] * g[i];
          p[i] -= lr_ * g[i] / (std::sqrt(acc[i]) + rms_eps);
        }
        break;
      }
    }
  }
}

}  // namespace fdivmin
