#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "fdivmin/params.hpp"
#include "fdivmin/tensor.hpp"

namespace fdivmin {

class Tape;

using NodeId = std::int32_t;

enum class OpKind {
  leaf,
  constant,
  add,
  subtract,
  multiply,
  matmul,
  bias_add,
  leaky_relu,
  relu,
  exp,
  log,
  square,
  sum,
  mean,
  logsumexp,
  scale,
  add_scalar,
  sum_axis,
  reshape,
  custom,
};

// Recomputes the node value from parent values (tape replay).
using ForwardFn = std::function<Tensor(const std::vector<const Tensor*>&)>;

// Given d(output)/d(node), accumulates into d(output)/d(parent_i).
// parent_grads[i] is pre-sized to the parent's shape.
using BackwardFn = std::function<void(const Tensor& out_grad,
                                      const std::vector<const Tensor*>& parents,
                                      const Tensor& value,
                                      std::vector<Tensor*>& parent_grads)>;

// Append-only reverse-mode tape over Tensors. Node references only point
// backward, so node ids are already in topological order.
class Tape {
 public:
  struct Node {
    OpKind kind;
    std::string label;  // leaf name, or op tag for custom nodes
    Tensor value;
    std::vector<NodeId> parents;
    ForwardFn forward;    // null for leaves/constants
    BackwardFn backward;  // null for leaves/constants
  };

  // Trainable leaf; repeated calls with the same name return the same node.
  NodeId leaf(const std::string& name, const Tensor& value);
  NodeId param(const ParameterSet& ps, const std::string& name) {
    return leaf(name, ps.at(name));
  }
  NodeId constant(Tensor value);

  NodeId add(NodeId a, NodeId b);
  NodeId subtract(NodeId a, NodeId b);
  NodeId multiply(NodeId a, NodeId b);
  NodeId matmul(NodeId a, NodeId b);
  // X: BxN, bias: N, broadcast over rows.
  NodeId bias_add(NodeId x, NodeId bias);
  NodeId leaky_relu(NodeId x, double slope = 0.01);
  NodeId relu(NodeId x);
  NodeId exp(NodeId x);
  NodeId log(NodeId x);
  NodeId square(NodeId x);
  NodeId sum(NodeId x);
  NodeId mean(NodeId x);
  // Stable log-sum-exp. Rank-1 input with axis<0 gives a scalar;
  // rank-2 input reduces along `axis` (0 or 1).
  NodeId logsumexp(NodeId x, int axis = -1);
  NodeId scale(NodeId x, double c);
  NodeId add_scalar(NodeId x, double c);
  NodeId sum_axis(NodeId x, int axis);
  NodeId reshape(NodeId x, std::vector<std::size_t> shape);

  // Generic dispatcher over the primitive op set. `aux` carries the
  // kind-specific constant (slope, scale, axis).
  NodeId record(OpKind kind, const std::vector<NodeId>& inputs,
                double aux = 0.0);

  // Escape hatch for composite differentiable functions (densities over a
  // whole dataset, divergence integrand transforms). The forward function
  // must be deterministic so the replay invariant holds.
  NodeId custom(const std::string& label, std::vector<NodeId> parents,
                ForwardFn forward, BackwardFn backward);

  const Tensor& value(NodeId id) const { return nodes_.at(id).value; }
  const Node& node(NodeId id) const { return nodes_.at(id); }
  std::size_t num_nodes() const { return nodes_.size(); }

  // d(scalar output)/d(leaf) for every named leaf on the tape. Leaves not
  // reached by the graph get zero gradients.
  GradientMap backward(NodeId output) const;

  // Gradient w.r.t. every node (same layout as nodes); used by tests.
  std::vector<Tensor> backward_all(NodeId output) const;

  // Recompute all node values in order from the leaves. Returns the value
  // of `output` after the pass.
  double replay(NodeId output);

 private:
  NodeId push(Node n);
  NodeId unary(OpKind kind, NodeId x, ForwardFn fwd, BackwardFn bwd);

  std::vector<Node> nodes_;
  std::unordered_map<std::string, NodeId> leaf_ids_;
};

// Max over coordinates of |analytic - central difference| / max(1e-12,
// |analytic| + |central difference|), for a deterministic scalar function of
// the parameters. `build` must construct the loss on the given tape.
double gradient_check(
    const std::function<NodeId(Tape&, const ParameterSet&)>& build,
    ParameterSet& params, double eps = 1e-4);

}  // namespace fdivmin
