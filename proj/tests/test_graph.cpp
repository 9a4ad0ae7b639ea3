#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstring>
#include <vector>

#include "gradvar/graph.hpp"
#include "gradvar/rng.hpp"

using namespace gradvar;

namespace {

double eval_node(const Graph& g, NodeId out, std::span<const double> xs,
                 std::span<const double> ps) {
  Workspace ws;
  ws.forward(g, xs, ps);
  return ws.value(out);
}

std::vector<double> reverse_grad(const Graph& g, NodeId out,
                                 std::span<const double> xs,
                                 std::span<const double> ps) {
  Workspace ws;
  ws.forward(g, xs, ps);
  std::vector<double> grad(g.param_slot_count(), 0.0);
  const std::pair<NodeId, double> seeds[] = {{out, 1.0}};
  ws.backward(g, seeds, grad);
  return grad;
}

double fd_wrt(const Graph& g, NodeId out, std::vector<double> xs,
              std::vector<double> ps, bool wrt_input, int j) {
  double& v = wrt_input ? xs[j] : ps[j];
  const double h = 1e-5 * std::max(1.0, std::abs(v));
  const double v0 = v;
  v = v0 + h;
  const double up = eval_node(g, out, xs, ps);
  v = v0 - h;
  const double dn = eval_node(g, out, xs, ps);
  return (up - dn) / (2.0 * h);
}

bool close_rel(double a, double b, double rel, double abs_floor) {
  return std::abs(a - b) <= rel * std::max(std::abs(a), std::abs(b)) + abs_floor;
}

/// Random graph over 2 inputs and 3 params, every op reachable, arguments
/// of unbounded-range ops wrapped so values stay in a finite-difference
/// friendly range.
struct RandomGraph {
  Graph g;
  std::vector<NodeId> inputs;
  NodeId out = kNoNode;
};

RandomGraph make_random_graph(std::uint64_t seed) {
  RandomGraph rg;
  Rng rng(seed);
  std::vector<NodeId> pool;
  for (int i = 0; i < 2; ++i) {
    rg.inputs.push_back(rg.g.input(i));
    pool.push_back(rg.inputs.back());
  }
  for (int j = 0; j < 3; ++j) pool.push_back(rg.g.param(j));
  pool.push_back(rg.g.constant(0.5));
  pool.push_back(rg.g.constant(-1.25));
  const int ops = 8 + static_cast<int>(rng.below(8));
  Graph& g = rg.g;
  for (int k = 0; k < ops; ++k) {
    auto pick = [&] { return pool[rng.below(pool.size())]; };
    NodeId r = kNoNode;
    switch (rng.below(11)) {
      case 0: r = g.add(pick(), pick()); break;
      case 1: r = g.sub(pick(), pick()); break;
      case 2: r = g.mul(pick(), pick()); break;
      case 3: r = g.div(pick(), g.add(g.softplus(pick()), g.constant(0.5))); break;
      case 4: r = g.neg(pick()); break;
      case 5: r = g.tanh(pick()); break;
      case 6: r = g.exp(g.mul(g.constant(2.0), g.tanh(pick()))); break;
      case 7: r = g.log(g.add(g.softplus(pick()), g.constant(0.1))); break;
      case 8: r = g.square(pick()); break;
      case 9: r = g.softplus(pick()); break;
      case 10: {
        const NodeId terms[] = {pick(), pick(), pick()};
        r = g.sum(terms);
        break;
      }
    }
    pool.push_back(r);
  }
  const NodeId tail[] = {pool[pool.size() - 1], pool[pool.size() - 2],
                         pool[pool.size() - 3]};
  rg.out = rg.g.sum(tail);
  return rg;
}

} // namespace

TEST_CASE("forward evaluation identities") {
  Graph g;
  NodeId x = g.input(0);
  NodeId sq = g.square(x);
  NodeId sp = g.softplus(g.constant(0.0));
  NodeId th = g.tanh(g.constant(0.0));
  const double xs[] = {3.0};
  Workspace ws;
  ws.forward(g, xs, {});
  CHECK(ws.value(sq) == 9.0);
  CHECK(ws.value(sp) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(ws.value(th) == 0.0);
}

TEST_CASE("reverse gradients, hand cases") {
  SUBCASE("theta * x") {
    Graph g;
    NodeId t = g.param(0);
    NodeId out = g.mul(t, g.input(0));
    const double xs[] = {2.0};
    const double ps[] = {0.7};
    auto grad = reverse_grad(g, out, xs, ps);
    CHECK(grad[0] == 2.0);
  }
  SUBCASE("theta squared") {
    Graph g;
    NodeId out = g.square(g.param(0));
    const double ps[] = {3.0};
    auto grad = reverse_grad(g, out, {}, ps);
    CHECK(grad[0] == 6.0);
  }
  SUBCASE("tanh(theta) at zero") {
    Graph g;
    NodeId out = g.tanh(g.param(0));
    const double ps[] = {0.0};
    auto grad = reverse_grad(g, out, {}, ps);
    CHECK(grad[0] == 1.0);
  }
}

TEST_CASE("input derivative nodes, hand cases") {
  SUBCASE("d(x^2)/dx at 3") {
    Graph g;
    NodeId x = g.input(0);
    NodeId d = g.derive(g.square(x), x);
    const double xs[] = {3.0};
    CHECK(eval_node(g, d, xs, {}) == 6.0);
  }
  SUBCASE("d tanh/dx at 0") {
    Graph g;
    NodeId x = g.input(0);
    NodeId d = g.derive(g.tanh(x), x);
    const double xs[] = {0.0};
    CHECK(eval_node(g, d, xs, {}) == 1.0);
  }
  SUBCASE("d(theta x + theta x^2)/dx") {
    Graph g;
    NodeId x = g.input(0);
    NodeId t = g.param(0);
    NodeId out = g.add(g.mul(t, x), g.mul(t, g.square(x)));
    NodeId d = g.derive(out, x);
    const double xs[] = {1.0};
    const double ps[] = {2.0};
    CHECK(eval_node(g, d, xs, ps) == 6.0);
  }
  SUBCASE("no path from input gives exact zero") {
    Graph g;
    NodeId x = g.input(0);
    NodeId out = g.square(g.param(0));
    NodeId d = g.derive(out, x);
    const double xs[] = {4.0};
    const double ps[] = {5.0};
    CHECK(eval_node(g, d, xs, ps) == 0.0);
    auto grad = reverse_grad(g, d, xs, ps);
    CHECK(grad[0] == 0.0);
  }
  SUBCASE("repeated derive returns the cached node") {
    Graph g;
    NodeId x = g.input(0);
    NodeId out = g.square(x);
    CHECK(g.derive(out, x) == g.derive(out, x));
  }
}

TEST_CASE("second derivatives via repeated derive") {
  Graph g;
  NodeId x = g.input(0);
  NodeId d2sq = g.derive(g.derive(g.square(x), x), x);
  NodeId d2th = g.derive(g.derive(g.tanh(x), x), x);
  NodeId d2sp = g.derive(g.derive(g.softplus(x), x), x);
  const double xs[] = {0.0};
  Workspace ws;
  ws.forward(g, xs, {});
  CHECK(ws.value(d2sq) == 2.0);
  CHECK(ws.value(d2th) == 0.0);                       // -2 tanh(0) sech^2(0)
  CHECK(ws.value(d2sp) == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("mixed second derivative is exact for a polynomial") {
  // out = theta x^2, d/dx = 2 theta x, d2/(dtheta dx) = 2x
  Graph g;
  NodeId x = g.input(0);
  NodeId t = g.param(0);
  NodeId d = g.derive(g.mul(t, g.square(x)), x);
  const double xs[] = {1.5};
  const double ps[] = {0.3};
  auto grad = reverse_grad(g, d, xs, ps);
  CHECK(grad[0] == 3.0);
}

TEST_CASE("softplus is stable at extreme inputs") {
  Graph g;
  NodeId x = g.input(0);
  NodeId sp = g.softplus(x);
  NodeId d = g.derive(sp, x);
  {
    const double xs[] = {800.0};
    Workspace ws;
    ws.forward(g, xs, {});
    CHECK(ws.value(sp) == 800.0);
    CHECK(ws.value(d) == 1.0);
  }
  {
    const double xs[] = {-800.0};
    Workspace ws;
    ws.forward(g, xs, {});
    CHECK(ws.value(sp) == 0.0);
    CHECK(ws.value(d) == 0.0);
  }
}

TEST_CASE("binding and numeric errors") {
  SUBCASE("missing input binding") {
    Graph g;
    g.input(0);
    g.input(1);
    Workspace ws;
    const double xs[] = {1.0};
    CHECK_THROWS_AS(ws.forward(g, xs, {}), BindingError);
  }
  SUBCASE("missing param binding") {
    Graph g;
    g.param(0);
    Workspace ws;
    CHECK_THROWS_AS(ws.forward(g, {}, {}), BindingError);
  }
  SUBCASE("non-finite intermediate carries the node id") {
    Graph g;
    NodeId x = g.input(0);
    NodeId l = g.log(x);
    g.add(l, g.constant(1.0));
    Workspace ws;
    const double xs[] = {-1.0};
    try {
      ws.forward(g, xs, {});
      FAIL("expected NumericError");
    } catch (const NumericError& e) {
      CHECK(e.node() == l);
    }
  }
  SUBCASE("division by zero is a numeric error") {
    Graph g;
    NodeId x = g.input(0);
    NodeId d = g.div(g.constant(1.0), x);
    Workspace ws;
    const double xs[] = {0.0};
    try {
      ws.forward(g, xs, {});
      FAIL("expected NumericError");
    } catch (const NumericError& e) {
      CHECK(e.node() == d);
    }
  }
  SUBCASE("derive rejects non-input leaves") {
    Graph g;
    NodeId t = g.param(0);
    NodeId out = g.square(t);
    CHECK_THROWS_AS(g.derive(out, t), std::invalid_argument);
  }
}

TEST_CASE("graphs are topologically ordered, including derive extensions") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    RandomGraph rg = make_random_graph(seed);
    rg.g.derive(rg.out, rg.inputs[0]);
    for (NodeId id = 0; id < rg.g.size(); ++id) {
      for (NodeId a : rg.g.args(rg.g.node(id))) CHECK(a < id);
    }
  }
}

TEST_CASE("evaluation is deterministic") {
  RandomGraph rg = make_random_graph(7);
  const double xs[] = {0.3, -1.1};
  const double ps[] = {0.9, -0.4, 1.7};
  Workspace w1, w2;
  w1.forward(rg.g, xs, ps);
  w2.forward(rg.g, xs, ps);
  auto v1 = w1.values();
  auto v2 = w2.values();
  REQUIRE(v1.size() == v2.size());
  CHECK(std::memcmp(v1.data(), v2.data(), v1.size() * sizeof(double)) == 0);
}

TEST_CASE("reverse gradients match finite differences on random graphs") {
  int tested = 0;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    RandomGraph rg = make_random_graph(seed);
    Rng rb(derive_seed(seed, 1));
    std::vector<double> xs = {rb.uniform(-2.0, 2.0), rb.uniform(-2.0, 2.0)};
    std::vector<double> ps = {rb.uniform(-2.0, 2.0), rb.uniform(-2.0, 2.0),
                              rb.uniform(-2.0, 2.0)};
    double out_val;
    try {
      out_val = eval_node(rg.g, rg.out, xs, ps);
    } catch (const NumericError&) {
      continue;
    }
    if (std::abs(out_val) > 1e4) continue; // FD would lose too many digits
    ++tested;
    auto grad = reverse_grad(rg.g, rg.out, xs, ps);
    for (int j = 0; j < 3; ++j) {
      const double fd = fd_wrt(rg.g, rg.out, xs, ps, false, j);
      CAPTURE(seed);
      CAPTURE(j);
      CHECK(close_rel(grad[j], fd, 1e-5, 1e-8));
    }
  }
  CHECK(tested >= 30);
}

TEST_CASE("derive matches finite differences of the output") {
  int tested = 0;
  for (std::uint64_t seed = 100; seed < 130; ++seed) {
    RandomGraph rg = make_random_graph(seed);
    NodeId d0 = rg.g.derive(rg.out, rg.inputs[0]);
    NodeId d1 = rg.g.derive(rg.out, rg.inputs[1]);
    Rng rb(derive_seed(seed, 2));
    std::vector<double> xs = {rb.uniform(-2.0, 2.0), rb.uniform(-2.0, 2.0)};
    std::vector<double> ps = {rb.uniform(-2.0, 2.0), rb.uniform(-2.0, 2.0),
                              rb.uniform(-2.0, 2.0)};
    Workspace ws;
    try {
      ws.forward(rg.g, xs, ps);
    } catch (const NumericError&) {
      continue;
    }
    if (std::abs(ws.value(rg.out)) > 1e4) continue;
    ++tested;
    const NodeId dnode[] = {d0, d1};
    for (int i = 0; i < 2; ++i) {
      const double fd = fd_wrt(rg.g, rg.out, xs, ps, true, i);
      CAPTURE(seed);
      CAPTURE(i);
      CHECK(close_rel(ws.value(dnode[i]), fd, 1e-5, 1e-8));
    }
  }
  CHECK(tested >= 20);
}

TEST_CASE("parameter gradients of derive nodes match second differences") {
  int tested = 0;
  for (std::uint64_t seed = 200; seed < 230; ++seed) {
    RandomGraph rg = make_random_graph(seed);
    NodeId d = rg.g.derive(rg.out, rg.inputs[0]);
    Rng rb(derive_seed(seed, 3));
    std::vector<double> xs = {rb.uniform(-2.0, 2.0), rb.uniform(-2.0, 2.0)};
    std::vector<double> ps = {rb.uniform(-2.0, 2.0), rb.uniform(-2.0, 2.0),
                              rb.uniform(-2.0, 2.0)};
    double dval;
    try {
      dval = eval_node(rg.g, d, xs, ps);
    } catch (const NumericError&) {
      continue;
    }
    if (std::abs(dval) > 1e4) continue;
    ++tested;
    auto grad = reverse_grad(rg.g, d, xs, ps);
    for (int j = 0; j < 3; ++j) {
      // central difference of the symbolic first derivative
      const double fd = fd_wrt(rg.g, d, xs, ps, false, j);
      CAPTURE(seed);
      CAPTURE(j);
      CHECK(close_rel(grad[j], fd, 1e-4, 1e-7));
    }
  }
  CHECK(tested >= 20);
}

TEST_CASE("sum builder edge cases") {
  Graph g;
  CHECK(eval_node(g, g.sum({}), {}, {}) == 0.0);
  NodeId x = g.input(0);
  const NodeId one[] = {x};
  CHECK(g.sum(one) == x);
  const NodeId terms[] = {x, x, g.constant(2.0), x};
  NodeId s = g.sum(terms);
  const double xs[] = {1.5};
  CHECK(eval_node(g, s, xs, {}) == 6.5);
  NodeId d = g.derive(s, x);
  CHECK(eval_node(g, d, xs, {}) == 3.0);
}
