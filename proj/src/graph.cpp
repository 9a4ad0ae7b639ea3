#include "gradvar/graph.hpp"

#include <algorithm>
#include <cmath>

#include "gradvar/param_store.hpp"

namespace gradvar {

namespace {

// softplus(x) = ln(1+e^x), evaluated as max(x,0) + log1p(e^{-|x|}) so large
// inputs neither overflow nor lose precision.
double softplus_value(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

// sigmoid(x) = 0.5*(1 + tanh(x/2)); stable for all x, and expressible inside
// the closed op set, which keeps softplus twice-differentiable symbolically.
double sigmoid_value(double x) { return 0.5 * (1.0 + std::tanh(0.5 * x)); }

} // namespace

const char* op_name(Op op) {
  switch (op) {
    case Op::kInput: return "input";
    case Op::kParam: return "param";
    case Op::kConst: return "const";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kDiv: return "div";
    case Op::kNeg: return "neg";
    case Op::kTanh: return "tanh";
    case Op::kExp: return "exp";
    case Op::kLog: return "log";
    case Op::kSquare: return "square";
    case Op::kSoftplus: return "softplus";
    case Op::kSum: return "sum";
  }
  return "?";
}

void Graph::check_arg(NodeId a) const {
  if (a >= nodes_.size())
    throw std::invalid_argument("Graph: argument id out of range");
}

NodeId Graph::push(Op op, std::span<const NodeId> as, std::int32_t slot,
                   double constant) {
  for (NodeId a : as) check_arg(a);
  Node n;
  n.op = op;
  n.slot = slot;
  n.arg_begin = static_cast<std::uint32_t>(args_.size());
  n.arg_count = static_cast<std::uint32_t>(as.size());
  n.constant = constant;
  args_.insert(args_.end(), as.begin(), as.end());
  nodes_.push_back(n);
  return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Graph::input(int slot) {
  if (slot < 0) throw std::invalid_argument("Graph: negative input slot");
  input_slots_ = std::max(input_slots_, slot + 1);
  return push(Op::kInput, {}, slot);
}

NodeId Graph::param(int slot) {
  if (slot < 0) throw std::invalid_argument("Graph: negative param slot");
  param_slots_ = std::max(param_slots_, slot + 1);
  return push(Op::kParam, {}, slot);
}

NodeId Graph::constant(double value) {
  if (std::isnan(value))
    throw std::invalid_argument("Graph: NaN constant");
  if (value == 0.0) value = 0.0; // collapse -0.0 into the +0.0 pool entry
  auto it = const_pool_.find(value);
  if (it != const_pool_.end()) return it->second;
  NodeId id = push(Op::kConst, {}, -1, value);
  const_pool_[value] = id;
  return id;
}

// The binary builders fold constant operands where folding is exact; this
// keeps derivative subgraphs from accumulating trivial nodes.

NodeId Graph::add(NodeId a, NodeId b) {
  if (is_const(a) && is_const(b)) return constant(const_value(a) + const_value(b));
  if (is_const(a, 0.0)) return b;
  if (is_const(b, 0.0)) return a;
  return push2(Op::kAdd, a, b);
}

NodeId Graph::sub(NodeId a, NodeId b) {
  if (is_const(a) && is_const(b)) return constant(const_value(a) - const_value(b));
  if (is_const(b, 0.0)) return a;
  if (is_const(a, 0.0)) return neg(b);
  return push2(Op::kSub, a, b);
}

NodeId Graph::mul(NodeId a, NodeId b) {
  if (is_const(a) && is_const(b)) return constant(const_value(a) * const_value(b));
  if (is_const(a, 1.0)) return b;
  if (is_const(b, 1.0)) return a;
  if (is_const(a, 0.0) || is_const(b, 0.0)) return constant(0.0);
  return push2(Op::kMul, a, b);
}

NodeId Graph::div(NodeId a, NodeId b) {
  if (is_const(a) && is_const(b) && const_value(b) != 0.0)
    return constant(const_value(a) / const_value(b));
  if (is_const(b, 1.0)) return a;
  return push2(Op::kDiv, a, b);
}

NodeId Graph::neg(NodeId a) {
  if (is_const(a)) return constant(-const_value(a));
  if (nodes_[a].op == Op::kNeg) return args(nodes_[a])[0];
  return push1(Op::kNeg, a);
}

NodeId Graph::tanh(NodeId a) {
  if (is_const(a)) return constant(std::tanh(const_value(a)));
  return push1(Op::kTanh, a);
}

NodeId Graph::exp(NodeId a) {
  if (is_const(a)) {
    double v = std::exp(const_value(a));
    if (std::isfinite(v)) return constant(v);
  }
  return push1(Op::kExp, a);
}

NodeId Graph::log(NodeId a) {
  if (is_const(a)) {
    double v = std::log(const_value(a));
    if (std::isfinite(v)) return constant(v);
  }
  return push1(Op::kLog, a);
}

NodeId Graph::square(NodeId a) {
  if (is_const(a)) return constant(const_value(a) * const_value(a));
  return push1(Op::kSquare, a);
}

NodeId Graph::softplus(NodeId a) {
  if (is_const(a)) return constant(softplus_value(const_value(a)));
  return push1(Op::kSoftplus, a);
}

NodeId Graph::sum(std::span<const NodeId> terms) {
  if (terms.empty()) return constant(0.0);
  if (terms.size() == 1) return terms[0];
  bool all_const = std::all_of(terms.begin(), terms.end(),
                               [&](NodeId t) { return is_const(t); });
  if (all_const) {
    double s = 0.0;
    for (NodeId t : terms) s += const_value(t);
    return constant(s);
  }
  return push(Op::kSum, terms);
}

NodeId Graph::tangent_add(NodeId ta, NodeId tb) {
  if (ta == kNoNode) return tb;
  if (tb == kNoNode) return ta;
  return add(ta, tb);
}

// Symbolic derivative of node `id` w.r.t. `leaf`, given tangents of all
// earlier nodes in `tg`. Appends only the nodes a nonzero branch needs.
NodeId Graph::tangent_of(NodeId id, NodeId leaf, std::vector<NodeId>& tg) {
  const Node n = nodes_[id]; // copy: push() may reallocate nodes_
  const NodeId* as = args_.data() + n.arg_begin;
  auto t = [&](std::size_t i) { return tg[as[i]]; };
  switch (n.op) {
    case Op::kInput:
      return id == leaf ? constant(1.0) : kNoNode;
    case Op::kParam:
    case Op::kConst:
      return kNoNode;
    case Op::kAdd:
      return tangent_add(t(0), t(1));
    case Op::kSub: {
      NodeId ta = t(0), tb = t(1);
      if (tb == kNoNode) return ta;
      if (ta == kNoNode) return neg(tb);
      return sub(ta, tb);
    }
    case Op::kMul: {
      NodeId ta = t(0), tb = t(1);
      NodeId lhs = ta == kNoNode ? kNoNode : mul(ta, as[1]);
      NodeId rhs = tb == kNoNode ? kNoNode : mul(as[0], tb);
      return tangent_add(lhs, rhs);
    }
    case Op::kDiv: {
      NodeId ta = t(0), tb = t(1);
      NodeId lhs = ta == kNoNode ? kNoNode : div(ta, as[1]);
      NodeId rhs =
          tb == kNoNode ? kNoNode : div(mul(as[0], tb), square(as[1]));
      if (rhs == kNoNode) return lhs;
      if (lhs == kNoNode) return neg(rhs);
      return sub(lhs, rhs);
    }
    case Op::kNeg: {
      NodeId ta = t(0);
      return ta == kNoNode ? kNoNode : neg(ta);
    }
    case Op::kTanh: {
      NodeId ta = t(0);
      if (ta == kNoNode) return kNoNode;
      return mul(sub(constant(1.0), square(id)), ta);
    }
    case Op::kExp: {
      NodeId ta = t(0);
      return ta == kNoNode ? kNoNode : mul(id, ta);
    }
    case Op::kLog: {
      NodeId ta = t(0);
      return ta == kNoNode ? kNoNode : div(ta, as[0]);
    }
    case Op::kSquare: {
      NodeId ta = t(0);
      if (ta == kNoNode) return kNoNode;
      return mul(constant(2.0), mul(as[0], ta));
    }
    case Op::kSoftplus: {
      NodeId ta = t(0);
      if (ta == kNoNode) return kNoNode;
      // d softplus / dx = sigmoid(x) = (1 + tanh(x/2)) / 2
      NodeId sig = mul(constant(0.5),
                       add(constant(1.0), tanh(mul(constant(0.5), as[0]))));
      return mul(sig, ta);
    }
    case Op::kSum: {
      std::vector<NodeId> terms;
      terms.reserve(n.arg_count);
      for (std::size_t i = 0; i < n.arg_count; ++i)
        if (t(i) != kNoNode) terms.push_back(t(i));
      if (terms.empty()) return kNoNode;
      return sum(terms);
    }
  }
  return kNoNode;
}

NodeId Graph::derive(NodeId output, NodeId input_leaf) {
  check_arg(output);
  check_arg(input_leaf);
  if (nodes_[input_leaf].op != Op::kInput)
    throw std::invalid_argument("Graph::derive: leaf is not an input node");
  std::vector<NodeId>& tg = tangents_[input_leaf];
  // Extend the cached tangent map up to `output`. The loop appends nodes
  // past `output`, so later calls resume where this one stopped.
  for (NodeId id = static_cast<NodeId>(tg.size()); id <= output; ++id)
    tg.push_back(tangent_of(id, input_leaf, tg));
  NodeId t = tg[output];
  return t == kNoNode ? constant(0.0) : t;
}

void Workspace::forward(const Graph& g, std::span<const double> inputs,
                        std::span<const double> params) {
  if (static_cast<int>(inputs.size()) < g.input_slot_count())
    throw BindingError("forward: " + std::to_string(inputs.size()) +
                       " input bindings for " +
                       std::to_string(g.input_slot_count()) + " slots");
  if (static_cast<int>(params.size()) < g.param_slot_count())
    throw BindingError("forward: " + std::to_string(params.size()) +
                       " parameter bindings for " +
                       std::to_string(g.param_slot_count()) + " slots");
  const std::size_t n = g.size();
  values_.resize(n);
  for (NodeId id = 0; id < n; ++id) {
    const Node& nd = g.node(id);
    const auto as = g.args(nd);
    double v = 0.0;
    switch (nd.op) {
      case Op::kInput: v = inputs[nd.slot]; break;
      case Op::kParam: v = params[nd.slot]; break;
      case Op::kConst: v = nd.constant; break;
      case Op::kAdd: v = values_[as[0]] + values_[as[1]]; break;
      case Op::kSub: v = values_[as[0]] - values_[as[1]]; break;
      case Op::kMul: v = values_[as[0]] * values_[as[1]]; break;
      case Op::kDiv: v = values_[as[0]] / values_[as[1]]; break;
      case Op::kNeg: v = -values_[as[0]]; break;
      case Op::kTanh: v = std::tanh(values_[as[0]]); break;
      case Op::kExp: v = std::exp(values_[as[0]]); break;
      case Op::kLog: v = std::log(values_[as[0]]); break;
      case Op::kSquare: v = values_[as[0]] * values_[as[0]]; break;
      case Op::kSoftplus: v = softplus_value(values_[as[0]]); break;
      case Op::kSum: {
        double s = 0.0;
        for (NodeId a : as) s += values_[a];
        v = s;
        break;
      }
    }
    if (!std::isfinite(v))
      throw NumericError(id, std::string("non-finite value at node ") +
                                 std::to_string(id) + " (" + op_name(nd.op) +
                                 ")");
    values_[id] = v;
  }
}

void Workspace::backward(const Graph& g,
                         std::span<const std::pair<NodeId, double>> seeds,
                         std::span<double> param_grad) {
  if (values_.size() != g.size())
    throw std::logic_error("backward: forward() has not been run");
  if (static_cast<int>(param_grad.size()) < g.param_slot_count())
    throw BindingError("backward: gradient buffer smaller than param slots");
  adjoints_.assign(g.size(), 0.0);
  NodeId top = 0;
  for (auto [node, seed] : seeds) {
    if (node >= g.size())
      throw std::invalid_argument("backward: seed node out of range");
    adjoints_[node] += seed;
    top = std::max(top, node);
  }
  for (NodeId id = top + 1; id-- > 0;) {
    const double a = adjoints_[id];
    if (a == 0.0) continue;
    const Node& nd = g.node(id);
    const auto as = g.args(nd);
    switch (nd.op) {
      case Op::kInput:
      case Op::kConst:
        break;
      case Op::kParam:
        param_grad[nd.slot] += a;
        break;
      case Op::kAdd:
        adjoints_[as[0]] += a;
        adjoints_[as[1]] += a;
        break;
      case Op::kSub:
        adjoints_[as[0]] += a;
        adjoints_[as[1]] -= a;
        break;
      case Op::kMul:
        adjoints_[as[0]] += a * values_[as[1]];
        adjoints_[as[1]] += a * values_[as[0]];
        break;
      case Op::kDiv:
        adjoints_[as[0]] += a / values_[as[1]];
        adjoints_[as[1]] -= a * values_[id] / values_[as[1]];
        break;
      case Op::kNeg:
        adjoints_[as[0]] -= a;
        break;
      case Op::kTanh:
        adjoints_[as[0]] += a * (1.0 - values_[id] * values_[id]);
        break;
      case Op::kExp:
        adjoints_[as[0]] += a * values_[id];
        break;
      case Op::kLog:
        adjoints_[as[0]] += a / values_[as[0]];
        break;
      case Op::kSquare:
        adjoints_[as[0]] += a * 2.0 * values_[as[0]];
        break;
      case Op::kSoftplus:
        adjoints_[as[0]] += a * sigmoid_value(values_[as[0]]);
        break;
      case Op::kSum:
        for (NodeId arg : as) adjoints_[arg] += a;
        break;
    }
  }
}

std::vector<double> eval_forward(const Graph& g, std::span<const double> inputs,
                                 const ParamStore& params) {
  Workspace ws;
  ws.forward(g, inputs, params.values());
  return std::vector<double>(ws.values().begin(), ws.values().end());
}

std::vector<double> grad_reverse(const Graph& g, NodeId output,
                                 std::span<const double> inputs,
                                 const ParamStore& params) {
  Workspace ws;
  ws.forward(g, inputs, params.values());
  std::vector<double> grad(params.size(), 0.0);
  const std::pair<NodeId, double> seed[] = {{output, 1.0}};
  ws.backward(g, seed, grad);
  return grad;
}

} // namespace gradvar
