#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace gradvar {

using NodeId = std::uint32_t;
inline constexpr NodeId kNoNode = 0xffffffffu;

/// Closed operation set. Every op has an exact symbolic derivative rule
/// composed of ops from this same set, so derivatives of derivatives stay
/// inside the set.
enum class Op : std::uint8_t {
  kInput,
  kParam,
  kConst,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kNeg,
  kTanh,
  kExp,
  kLog,
  kSquare,
  kSoftplus,
  kSum,
};

const char* op_name(Op op);

struct Node {
  Op op;
  std::int32_t slot = -1;      // binding slot for kInput / kParam
  std::uint32_t arg_begin = 0; // offset into the argument pool
  std::uint32_t arg_count = 0;
  double constant = 0.0;       // payload for kConst
};

/// An input or parameter leaf is referenced by a slot that the evaluation
/// bindings do not cover.
class BindingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A node evaluated to a non-finite value; carries the offending node id.
class NumericError : public std::runtime_error {
 public:
  NumericError(NodeId node, const std::string& what)
      : std::runtime_error(what), node_(node) {}
  NodeId node() const { return node_; }

 private:
  NodeId node_;
};

/// Append-only scalar computation DAG. Nodes are topologically ordered by
/// construction (every argument id precedes the node that uses it).
/// Construction is single-threaded; once built, evaluation is pure and safe
/// to run concurrently with distinct workspaces.
class Graph {
 public:
  NodeId input(int slot);
  NodeId param(int slot);
  NodeId constant(double value);

  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId div(NodeId a, NodeId b);
  NodeId neg(NodeId a);
  NodeId tanh(NodeId a);
  NodeId exp(NodeId a);
  NodeId log(NodeId a);
  NodeId square(NodeId a);
  NodeId softplus(NodeId a);
  NodeId sum(std::span<const NodeId> terms);

  /// Appends nodes computing the exact derivative of `output` with respect
  /// to the input leaf `input_leaf`, and returns the node holding it. If
  /// `output` does not depend on the leaf, returns a constant-zero node.
  /// The returned node is an ordinary node: it can be evaluated, derived
  /// again, and differentiated with respect to parameters.
  NodeId derive(NodeId output, NodeId input_leaf);

  std::size_t size() const { return nodes_.size(); }
  const Node& node(NodeId id) const { return nodes_[id]; }
  std::span<const NodeId> args(const Node& n) const {
    return {args_.data() + n.arg_begin, n.arg_count};
  }
  /// One past the highest input slot referenced by any leaf.
  int input_slot_count() const { return input_slots_; }
  /// One past the highest parameter slot referenced by any leaf.
  int param_slot_count() const { return param_slots_; }

 private:
  NodeId push(Op op, std::span<const NodeId> as, std::int32_t slot = -1,
              double constant = 0.0);
  NodeId push1(Op op, NodeId a) {
    const NodeId as[] = {a};
    return push(op, as);
  }
  NodeId push2(Op op, NodeId a, NodeId b) {
    const NodeId as[] = {a, b};
    return push(op, as);
  }
  bool is_const(NodeId id) const { return nodes_[id].op == Op::kConst; }
  bool is_const(NodeId id, double v) const {
    return is_const(id) && nodes_[id].constant == v;
  }
  double const_value(NodeId id) const { return nodes_[id].constant; }
  void check_arg(NodeId a) const;

  // Tangent of `id` w.r.t. one fixed leaf; kNoNode encodes an identically
  // zero derivative so zero branches never materialize as nodes.
  NodeId tangent_add(NodeId ta, NodeId tb);
  NodeId tangent_of(NodeId id, NodeId leaf, std::vector<NodeId>& tg);

  std::vector<Node> nodes_;
  std::vector<NodeId> args_;
  std::unordered_map<double, NodeId> const_pool_;
  std::unordered_map<NodeId, std::vector<NodeId>> tangents_; // per leaf
  int input_slots_ = 0;
  int param_slots_ = 0;
};

/// Reusable value/adjoint buffers for repeated evaluation of one graph.
/// Each concurrent evaluation needs its own workspace.
class Workspace {
 public:
  /// Computes the value of every node. Throws BindingError if a leaf slot
  /// is not covered and NumericError if an intermediate is non-finite.
  void forward(const Graph& g, std::span<const double> inputs,
               std::span<const double> params);

  /// Reverse sweep from the given seed nodes (node, seed adjoint).
  /// Accumulates d(sum of seeded outputs)/d(param) into `param_grad`,
  /// which must have at least `g.param_slot_count()` entries.
  /// Requires a preceding forward() on the same graph.
  void backward(const Graph& g,
                std::span<const std::pair<NodeId, double>> seeds,
                std::span<double> param_grad);

  double value(NodeId id) const { return values_[id]; }
  double adjoint(NodeId id) const { return adjoints_[id]; }
  std::span<const double> values() const { return values_; }

 private:
  std::vector<double> values_;
  std::vector<double> adjoints_;
};

class ParamStore;

/// Evaluates every node and returns the full value vector.
std::vector<double> eval_forward(const Graph& g, std::span<const double> inputs,
                                 const ParamStore& params);

/// Gradient of the scalar node `output` with respect to every parameter
/// slot; exact to floating point for the closed op set.
std::vector<double> grad_reverse(const Graph& g, NodeId output,
                                 std::span<const double> inputs,
                                 const ParamStore& params);

} // namespace gradvar
