#include "fdivmin/tape.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>

#include "fdivmin/errors.hpp"

namespace fdivmin {

namespace {

using MatMap = Eigen::Map<
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstMatMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic,
                                                   Eigen::Dynamic,
                                                   Eigen::RowMajor>>;

void require(bool ok, const std::string& msg) {
  if (!ok) throw ContractViolation(msg);
}

}  // namespace

NodeId Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Tape::leaf(const std::string& name, const Tensor& value) {
  if (!name.empty()) {
    auto it = leaf_ids_.find(name);
    if (it != leaf_ids_.end()) return it->second;
  }
  NodeId id = push({OpKind::leaf, name, value, {}, nullptr, nullptr});
  if (!name.empty()) leaf_ids_[name] = id;
  return id;
}

NodeId Tape::constant(Tensor value) {
  return push({OpKind::constant, "", std::move(value), {}, nullptr, nullptr});
}

NodeId Tape::custom(const std::string& label, std::vector<NodeId> parents,
                    ForwardFn forward, BackwardFn backward) {
  std::vector<const Tensor*> pv;
  pv.reserve(parents.size());
  for (NodeId p : parents) pv.push_back(&nodes_.at(p).value);
  Tensor value = forward(pv);
  return push({OpKind::custom, label, std::move(value), std::move(parents),
               std::move(forward), std::move(backward)});
}

NodeId Tape::unary(OpKind kind, NodeId x, ForwardFn fwd, BackwardFn bwd) {
  std::vector<const Tensor*> pv{&nodes_.at(x).value};
  Tensor value = fwd(pv);
  return push({kind, "", std::move(value), {x}, std::move(fwd),
               std::move(bwd)});
}

NodeId Tape::add(NodeId a, NodeId b) {
  require(value(a).same_shape(value(b)),
          "add: shape mismatch " + value(a).shape_str() + " vs " +
              value(b).shape_str());
  ForwardFn fwd = [](const std::vector<const Tensor*>& p) {
    Tensor out = *p[0];
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += (*p[1])[i];
    return out;
  };
  BackwardFn bwd = [](const Tensor& g, const std::vector<const Tensor*>&,
                      const Tensor&, std::vector<Tensor*>& pg) {
    for (int k = 0; k < 2; ++k)
      if (pg[k])
        for (std::size_t i = 0; i < g.size(); ++i) (*pg[k])[i] += g[i];
  };
  std::vector<const Tensor*> pv{&value(a), &value(b)};
  Tensor out = fwd(pv);
  return push({OpKind::add, "", std::move(out), {a, b}, std::move(fwd),
               std::move(bwd)});
}

NodeId Tape::subtract(NodeId a, NodeId b) {
  require(value(a).same_shape(value(b)),
          "subtract: shape mismatch " + value(a).shape_str() + " vs " +
              value(b).shape_str());
  ForwardFn fwd = [](const std::vector<const Tensor*>& p) {
    Tensor out = *p[0];
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= (*p[1])[i];
    return out;
  };
  BackwardFn bwd = [](const Tensor& g, const std::vector<const Tensor*>&,
                      const Tensor&, std::vector<Tensor*>& pg) {
    if (pg[0])
      for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += g[i];
    if (pg[1])
      for (std::size_t i = 0; i < g.size(); ++i) (*pg[1])[i] -= g[i];
  };
  std::vector<const Tensor*> pv{&value(a), &value(b)};
  Tensor out = fwd(pv);
  return push({OpKind::subtract, "", std::move(out), {a, b}, std::move(fwd),
               std::move(bwd)});
}

NodeId Tape::multiply(NodeId a, NodeId b) {
  require(value(a).same_shape(value(b)),
          "multiply: shape mismatch " + value(a).shape_str() + " vs " +
              value(b).shape_str());
  ForwardFn fwd = [](const std::vector<const Tensor*>& p) {
    Tensor out = *p[0];
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= (*p[1])[i];
    return out;
  };
  BackwardFn bwd = [](const Tensor& g, const std::vector<const Tensor*>& p,
                      const Tensor&, std::vector<Tensor*>& pg) {
    if (pg[0])
      for (std::size_t i = 0; i < g.size(); ++i)
        (*pg[0])[i] += g[i] * (*p[1])[i];
    if (pg[1])
      for (std::size_t i = 0; i < g.size(); ++i)
        (*pg[1])[i] += g[i] * (*p[0])[i];
  };
  std::vector<const Tensor*> pv{&value(a), &value(b)};
  Tensor out = fwd(pv);
  return push({OpKind::multiply, "", std::move(out), {a, b}, std::move(fwd),
               std::move(bwd)});
}

NodeId Tape::matmul(NodeId a, NodeId b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  require(A.rank() == 2 && B.rank() == 2, "matmul: inputs must be rank-2");
  require(A.cols() == B.rows(),
          "matmul: inner dimension mismatch " + A.shape_str() + " x " +
              B.shape_str());
  ForwardFn fwd = [](const std::vector<const Tensor*>& p) {
    const Tensor& A = *p[0];
    const Tensor& B = *p[1];
    Tensor out = Tensor::zeros({A.rows(), B.cols()});
    ConstMatMap ma(A.data(), static_cast<Eigen::Index>(A.rows()),
                   static_cast<Eigen::Index>(A.cols()));
    ConstMatMap mb(B.data(), static_cast<Eigen::Index>(B.rows()),
                   static_cast<Eigen::Index>(B.cols()));
    MatMap mo(out.data(), ma.rows(), mb.cols());
    mo.noalias() = ma * mb;
    return out;
  };
  BackwardFn bwd = [](const Tensor& g, const std::vector<const Tensor*>& p,
                      const Tensor&, std::vector<Tensor*>& pg) {
    const Tensor& A = *p[0];
    const Tensor& B = *p[1];
    ConstMatMap ma(A.data(), static_cast<Eigen::Index>(A.rows()),
                   static_cast<Eigen::Index>(A.cols()));
    ConstMatMap mb(B.data(), static_cast<Eigen::Index>(B.rows()),
                   static_cast<Eigen::Index>(B.cols()));
    ConstMatMap mg(g.data(), ma.rows(), mb.cols());
    if (pg[0]) {
      MatMap mga(pg[0]->data(), ma.rows(), ma.cols());
      mga.noalias() += mg * mb.transpose();
    }
    if (pg[1]) {
      MatMap mgb(pg[1]->data(), mb.rows(), mb.cols());
      mgb.noalias() += ma.transpose() * mg;
    }
  };
  std::vector<const Tensor*> pv{&A, &B};
  Tensor out = fwd(pv);
  return push({OpKind::matmul, "", std::move(out), {a, b}, std::move(fwd),
               std::move(bwd)});
}

NodeId Tape::bias_add(NodeId x, NodeId bias) {
  const Tensor& X = value(x);
  const Tensor& B = value(bias);
  require(X.rank() == 2 && B.rank() == 1 && X.cols() == B.size(),
          "bias_add: need BxN input and N bias, got " + X.shape_str() +
              " and " + B.shape_str());
  ForwardFn fwd = [](const std::vector<const Tensor*>& p) {
    Tensor out = *p[0];
    const Tensor& b = *p[1];
    std::size_t n = b.size();
    for (std::size_t r = 0; r < out.rows(); ++r)
      for (std::size_t c = 0; c < n; ++c) out(r, c) += b[c];
    return out;
  };
  BackwardFn bwd = [](const Tensor& g, const std::vector<const Tensor*>& p,
                      const Tensor&, std::vector<Tensor*>& pg) {
    if (pg[0])
      for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += g[i];
    if (pg[1]) {
      std::size_t n = p[1]->size();
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < n; ++c) (*pg[1])[c] += g(r, c);
    }
  };
  std::vector<const Tensor*> pv{&X, &B};
  Tensor out = fwd(pv);
  return push({OpKind::bias_add, "", std::move(out), {x, bias},
               std::move(fwd), std::move(bwd)});
}

NodeId Tape::leaky_relu(NodeId x, double slope) {
  ForwardFn fwd = [slope](const std::vector<const Tensor*>& p) {
    Tensor out = *p[0];
    for (std::size_t i = 0; i < out.size(); ++i)
      if (out[i] < 0.0) out[i] *= slope;
    return out;
  };
  BackwardFn bwd = [slope](const Tensor& g,
                           const std::vector<const Tensor*>& p, const Tensor&,
                           std::vector<Tensor*>& pg) {
    if (!pg[0]) return;
    for (std::size_t i = 0; i < g.size(); ++i)
      (*pg[0])[i] += g[i] * ((*p[0])[i] >= 0.0 ? 1.0 : slope);
  };
  return unary(OpKind::leaky_relu, x, std::move(fwd), std::move(bwd));
}

NodeId Tape::relu(NodeId x) { return leaky_relu(x, 0.0); }

NodeId Tape::exp(NodeId x) {
  ForwardFn fwd = [](const std::vector<const Tensor*>& p) {
    Tensor out = *p[0];
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(out[i]);
    return out;
  };
  BackwardFn bwd = [](const Tensor& g, const std::vector<const Tensor*>&,
                      const Tensor& v, std::vector<Tensor*>& pg) {
    if (!pg[0]) return;
    for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += g[i] * v[i];
  };
  return unary(OpKind::exp, x, std::move(fwd), std::move(bwd));
}

NodeId Tape::log(NodeId x) {
  const Tensor& X = value(x);
  for (std::size_t i = 0; i < X.size(); ++i)
    if (!(X[i] > 0.0))
      throw DomainViolation("log: non-positive input at node " +
                            std::to_string(x) + ", coordinate " +
                            std::to_string(i));
  ForwardFn fwd = [](const std::vector<const Tensor*>& p) {
    Tensor out = *p[0];
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(out[i]);
    return out;
  };
  BackwardFn bwd = [](const Tensor& g, const std::vector<const Tensor*>& p,
                      const Tensor&, std::vector<Tensor*>& pg) {
    if (!pg[0]) return;
    for (std::size_t i = 0; i < g.size(); ++i)
      (*pg[0])[i] += g[i] / (*p[0])[i];
  };
  return unary(OpKind::log, x, std::move(fwd), std::move(bwd));
}

NodeId Tape::square(NodeId x) {
  ForwardFn fwd = [](const std::vector<const Tensor*>& p) {
    Tensor out = *p[0];
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= out[i];
    return out;
  };
  BackwardFn bwd = [](const Tensor& g, const std::vector<const Tensor*>& p,
                      const Tensor&, std::vector<Tensor*>& pg) {
    if (!pg[0]) return;
    for (std::size_t i = 0; i < g.size(); ++i)
      (*pg[0])[i] += 2.0 * g[i] * (*p[0])[i];
  };
  return unary(OpKind::square, x, std::move(fwd), std::move(bwd));
}

NodeId Tape::sum(NodeId x) {
  ForwardFn fwd = [](const std::vector<const Tensor*>& p) {
    double s = 0.0;
    for (std::size_t i = 0; i < p[0]->size(); ++i) s += (*p[0])[i];
    return Tensor::scalar(s);
  };
  BackwardFn bwd = [](const Tensor& g, const std::vector<const Tensor*>&,
                      const Tensor&, std::vector<Tensor*>& pg) {
    if (!pg[0]) return;
    for (std::size_t i = 0; i < pg[0]->size(); ++i) (*pg[0])[i] += g[0];
  };
  return unary(OpKind::sum, x, std::move(fwd), std::move(bwd));
}

NodeId Tape::mean(NodeId x) {
  std::size_t n = value(x).size();
  require(n > 0, "mean: empty tensor");
  ForwardFn fwd = [n](const std::vector<const Tensor*>& p) {
    double s = 0.0;
    for (std::size_t i = 0; i < p[0]->size(); ++i) s += (*p[0])[i];
    return Tensor::scalar(s / static_cast<double>(n));
  };
  BackwardFn bwd = [n](const Tensor& g, const std::vector<const Tensor*>&,
                       const Tensor&, std::vector<Tensor*>& pg) {
    if (!pg[0]) return;
    double gi = g[0] / static_cast<double>(n);
    for (std::size_t i = 0; i < pg[0]->size(); ++i) (*pg[0])[i] += gi;
  };
  return unary(OpKind::mean, x, std::move(fwd), std::move(bwd));
}

NodeId Tape::logsumexp(NodeId x, int axis) {
  const Tensor& X = value(x);
  // Max-subtraction throughout; the spreaded-empirical likelihoods this
  // feeds sum many tiny Gaussian terms.
  auto lse = [](const double* v, std::size_t n, std::size_t stride) {
    double m = v[0];
    for (std::size_t i = 1; i < n; ++i) m = std::max(m, v[i * stride]);
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += std::exp(v[i * stride] - m);
    return m + std::log(s);
  };
  if (axis < 0) {
    require(X.rank() <= 1 || X.rank() == 2,
            "logsumexp: unsupported rank");
    ForwardFn fwd = [lse](const std::vector<const Tensor*>& p) {
      return Tensor::scalar(lse(p[0]->data(), p[0]->size(), 1));
    };
    BackwardFn bwd = [](const Tensor& g, const std::vector<const Tensor*>& p,
                        const Tensor& v, std::vector<Tensor*>& pg) {
      if (!pg[0]) return;
      for (std::size_t i = 0; i < p[0]->size(); ++i)
        (*pg[0])[i] += g[0] * std::exp((*p[0])[i] - v[0]);
    };
    return unary(OpKind::logsumexp, x, std::move(fwd), std::move(bwd));
  }
  require(X.rank() == 2 && (axis == 0 || axis == 1),
          "logsumexp: axis reduction needs rank-2 input and axis in {0,1}");
  ForwardFn fwd = [lse, axis](const std::vector<const Tensor*>& p) {
    const Tensor& X = *p[0];
    std::size_t R = X.rows(), C = X.cols();
    if (axis == 1) {
      Tensor out = Tensor::zeros({R});
      for (std::size_t r = 0; r < R; ++r)
        out[r] = lse(X.data() + r * C, C, 1);
      return out;
    }
    Tensor out = Tensor::zeros({C});
    for (std::size_t c = 0; c < C; ++c) out[c] = lse(X.data() + c, R, C);
    return out;
  };
  BackwardFn bwd = [axis](const Tensor& g,
                          const std::vector<const Tensor*>& p,
                          const Tensor& v, std::vector<Tensor*>& pg) {
    if (!pg[0]) return;
    const Tensor& X = *p[0];
    std::size_t R = X.rows(), C = X.cols();
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t c = 0; c < C; ++c) {
        std::size_t k = (axis == 1) ? r : c;
        (*pg[0])(r, c) += g[k] * std::exp(X(r, c) - v[k]);
      }
  };
  return unary(OpKind::logsumexp, x, std::move(fwd), std::move(bwd));
}

NodeId Tape::scale(NodeId x, double c) {
  ForwardFn fwd = [c](const std::vector<const Tensor*>& p) {
    Tensor out = *p[0];
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= c;
    return out;
  };
  BackwardFn bwd = [c](const Tensor& g, const std::vector<const Tensor*>&,
                       const Tensor&, std::vector<Tensor*>& pg) {
    if (!pg[0]) return;
    for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += c * g[i];
  };
  return unary(OpKind::scale, x, std::move(fwd), std::move(bwd));
}

NodeId Tape::add_scalar(NodeId x, double c) {
  ForwardFn fwd = [c](const std::vector<const Tensor*>& p) {
    Tensor out = *p[0];
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += c;
    return out;
  };
  BackwardFn bwd = [](const Tensor& g, const std::vector<const Tensor*>&,
                      const Tensor&, std::vector<Tensor*>& pg) {
    if (!pg[0]) return;
    for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += g[i];
  };
  return unary(OpKind::add_scalar, x, std::move(fwd), std::move(bwd));
}

NodeId Tape::sum_axis(NodeId x, int axis) {
  const Tensor& X = value(x);
  require(X.rank() == 2 && (axis == 0 || axis == 1),
          "sum_axis: need rank-2 input and axis in {0,1}");
  ForwardFn fwd = [axis](const std::vector<const Tensor*>& p) {
    const Tensor& X = *p[0];
    std::size_t R = X.rows(), C = X.cols();
    Tensor out = Tensor::zeros({axis == 1 ? R : C});
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t c = 0; c < C; ++c)
        out[axis == 1 ? r : c] += X(r, c);
    return out;
  };
  BackwardFn bwd = [axis](const Tensor& g,
                          const std::vector<const Tensor*>& p, const Tensor&,
                          std::vector<Tensor*>& pg) {
    if (!pg[0]) return;
    std::size_t R = p[0]->rows(), C = p[0]->cols();
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t c = 0; c < C; ++c)
        (*pg[0])(r, c) += g[axis == 1 ? r : c];
  };
  return unary(OpKind::sum_axis, x, std::move(fwd), std::move(bwd));
}

NodeId Tape::reshape(NodeId x, std::vector<std::size_t> shape) {
  require(Tensor::num_elements(shape) == value(x).size(),
          "reshape: element count mismatch");
  ForwardFn fwd = [shape](const std::vector<const Tensor*>& p) {
    return Tensor(shape, p[0]->raw());
  };
  BackwardFn bwd = [](const Tensor& g, const std::vector<const Tensor*>&,
                      const Tensor&, std::vector<Tensor*>& pg) {
    if (!pg[0]) return;
    for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += g[i];
  };
  return unary(OpKind::reshape, x, std::move(fwd), std::move(bwd));
}

NodeId Tape::record(OpKind kind, const std::vector<NodeId>& in, double aux) {
  auto need = [&](std::size_t n) {
    require(in.size() == n, "record: wrong input count");
  };
  switch (kind) {
    case OpKind::add: need(2); return add(in[0], in[1]);
    case OpKind::subtract: need(2); return subtract(in[0], in[1]);
    case OpKind::multiply: need(2); return multiply(in[0], in[1]);
    case OpKind::matmul: need(2); return matmul(in[0], in[1]);
    case OpKind::bias_add: need(2); return bias_add(in[0], in[1]);
    case OpKind::leaky_relu:
      need(1);
      return leaky_relu(in[0], aux == 0.0 ? 0.01 : aux);
    case OpKind::relu: need(1); return relu(in[0]);
    case OpKind::exp: need(1); return exp(in[0]);
    case OpKind::log: need(1); return log(in[0]);
    case OpKind::square: need(1); return square(in[0]);
    case OpKind::sum: need(1); return sum(in[0]);
    case OpKind::mean: need(1); return mean(in[0]);
    case OpKind::logsumexp:
      need(1);
      return logsumexp(in[0], static_cast<int>(aux));
    case OpKind::scale: need(1); return scale(in[0], aux);
    case OpKind::add_scalar: need(1); return add_scalar(in[0], aux);
    case OpKind::sum_axis:
      need(1);
      return sum_axis(in[0], static_cast<int>(aux));
    default:
      throw ContractViolation("record: kind is not a recordable primitive");
  }
}

std::vector<Tensor> Tape::backward_all(NodeId output) const {
  const Node& out = nodes_.at(output);
  if (!out.value.is_scalar())
    throw ContractViolation("backward: output must be a scalar node");
  std::vector<Tensor> grads(nodes_.size());
  std::vector<bool> reached(nodes_.size(), false);
  grads[output] = Tensor::scalar(1.0);
  reached[output] = true;
  for (NodeId id = output; id >= 0; --id) {
    if (!reached[id]) continue;
    const Node& n = nodes_[id];
    if (!n.backward) continue;
    std::vector<const Tensor*> pv;
    std::vector<Tensor*> pg;
    pv.reserve(n.parents.size());
    pg.reserve(n.parents.size());
    for (NodeId p : n.parents) {
      pv.push_back(&nodes_[p].value);
      if (!reached[p]) {
        grads[p] = Tensor::zeros(nodes_[p].value.shape());
        reached[p] = true;
      }
      pg.push_back(&grads[p]);
    }
    n.backward(grads[id], pv, n.value, pg);
  }
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    if (!reached[i]) grads[i] = Tensor::zeros(nodes_[i].value.shape());
  return grads;
}

GradientMap Tape::backward(NodeId output) const {
  std::vector<Tensor> grads = backward_all(output);
  GradientMap out;
  for (const auto& [name, id] : leaf_ids_) out[name] = grads[id];
  return out;
}

double Tape::replay(NodeId output) {
  for (auto& n : nodes_) {
    if (!n.forward) continue;
    std::vector<const Tensor*> pv;
    pv.reserve(n.parents.size());
    for (NodeId p : n.parents) pv.push_back(&nodes_[p].value);
    n.value = n.forward(pv);
  }
  return nodes_.at(output).value.value();
}

double gradient_check(
    const std::function<NodeId(Tape&, const ParameterSet&)>& build,
    ParameterSet& params, double eps) {
  Tape tape;
  NodeId out = build(tape, params);
  GradientMap analytic = tape.backward(out);

  auto eval = [&](const ParameterSet& p) {
    Tape t;
    return t.value(build(t, p)).value();
  };

  double worst = 0.0;
  for (const auto& entry : params.entries()) {
    Tensor& v = params.at(entry.name);
    const Tensor* g = analytic.count(entry.name) ? &analytic[entry.name]
                                                 : nullptr;
    for (std::size_t i = 0; i < v.size(); ++i) {
      double keep = v[i];
      v[i] = keep + eps;
      double fp = eval(params);
      v[i] = keep - eps;
      double fm = eval(params);
      v[i] = keep;
      double fd = (fp - fm) / (2.0 * eps);
      double an = g ? (*g)[i] : 0.0;
      // Floor the denominator above the intrinsic noise of the central
      // difference itself (loss roundoff / 2 eps ~ 1e-11), otherwise
      // coordinates with vanishing gradients report pure FD noise.
      double denom = std::max(1e-6, std::abs(an) + std::abs(fd));
      worst = std::max(worst, std::abs(an - fd) / denom);
    }
  }
  return worst;
}

}  // namespace fdivmin
