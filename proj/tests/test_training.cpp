#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numbers>

#include "gradvar/training.hpp"

using namespace gradvar;

namespace {

Standardizer ident(int d) {
  Standardizer s;
  s.x_mean.assign(d, 0.0);
  s.x_std.assign(d, 1.0);
  return s;
}

ModelSpec small_spec(NoiseModel nm, int d = 1) {
  ModelSpec s;
  s.input_dim = d;
  s.hidden = {8, 8};
  s.noise_model = nm;
  return s;
}

// colored model with flat rho and pinned gamma, loss nodes attached
struct Rig {
  Model model;
  TrainingLoss loss;
};

Rig make_rig(double rho, double gamma, int d = 1) {
  ModelSpec spec = small_spec(NoiseModel::kColored, d);
  spec.gamma.learned = false;
  spec.gamma.fixed_value = gamma;
  Model m(spec, ident(d));
  m.init_params(5);
  m.params().layer("rho.b")[0] = softplus_inv(rho);
  TrainingLoss loss = build_training_loss(m, 1.0);
  return Rig{std::move(m), loss};
}

double eval_loss_node(Rig& rig, NodeId node, double x, double obs_e,
                      double obs_f) {
  Workspace ws;
  const double binds[] = {x, obs_e, obs_f};
  ws.forward(rig.model.graph(), binds, rig.model.params().values());
  return ws.value(node);
}

// head value on the loss-extended graph (observation bindings are inert)
double head_value(Rig& rig, NodeId node, double x) {
  return eval_loss_node(rig, node, x, 0.0, 0.0);
}

constexpr double kHalfLn2Pi = 0.9189385332046727;

Dataset toy_train(int n, std::uint64_t seed) {
  return generate_dataset(n, -1.0, 1.0, KernelSpec{0.2, 0.5, 1e-4}, seed);
}

} // namespace

TEST_CASE("learning rate schedule") {
  TrainConfig cfg;
  CHECK(lr_at(0, cfg) == 1e-4);
  CHECK(lr_at(1000, cfg) == doctest::Approx(0.96e-4).epsilon(1e-12));
  CHECK(lr_at(2000, cfg) == doctest::Approx(0.9216e-4).epsilon(1e-12));
}

TEST_CASE("energy NLL values") {
  Rig rig = make_rig(1.0, 4.0);
  const double x = 0.3;
  const double mu = head_value(rig, rig.model.heads().mu, x);
  SUBCASE("zero residual, unit variance") {
    CHECK(eval_loss_node(rig, rig.loss.nll_e, x, mu, 0.0) ==
          doctest::Approx(kHalfLn2Pi).epsilon(1e-12));
  }
  SUBCASE("unit residual adds one half") {
    CHECK(eval_loss_node(rig, rig.loss.nll_e, x, mu - 1.0, 0.0) ==
          doctest::Approx(0.5 + kHalfLn2Pi).epsilon(1e-12));
  }
  SUBCASE("variance 1/(2 pi) cancels the constant") {
    Rig r2 = make_rig(1.0 / std::sqrt(2.0 * std::numbers::pi), 4.0);
    const double mu2 = head_value(r2, r2.model.heads().mu, x);
    CHECK(eval_loss_node(r2, r2.loss.nll_e, x, mu2, 0.0) ==
          doctest::Approx(0.0).epsilon(1e-12).scale(1.0));
  }
}

TEST_CASE("force NLL values") {
  SUBCASE("unit variance, zero residual") {
    Rig rig = make_rig(1.0, 1.0); // v = gamma rho^2 = 1, flat rho
    const double x = -0.2;
    const double fm = head_value(rig, rig.model.heads().force_mean[0], x);
    CHECK(eval_loss_node(rig, rig.loss.nll_f[0], x, 0.0, fm) ==
          doctest::Approx(kHalfLn2Pi).epsilon(1e-12));
  }
  SUBCASE("three dimensions sum") {
    ModelSpec spec = small_spec(NoiseModel::kColored, 3);
    spec.gamma.learned = false;
    spec.gamma.fixed_value = 1.0;
    Model m(spec, ident(3));
    m.init_params(5);
    m.params().layer("rho.b")[0] = softplus_inv(1.0);
    TrainingLoss loss = build_training_loss(m, 1.0);
    NodeId sum = loss_nll_force(m.graph_mutable(), m.heads(),
                                std::vector<NodeId>(loss.obs_f));
    std::vector<double> binds = {0.1, -0.4, 0.7, 0.0, 0.0, 0.0, 0.0};
    Workspace ws;
    ws.forward(m.graph(), binds, m.params().values());
    for (int d = 0; d < 3; ++d)
      binds[4 + d] = ws.value(m.heads().force_mean[d]);
    ws.forward(m.graph(), binds, m.params().values());
    CHECK(ws.value(sum) == doctest::Approx(3.0 * kHalfLn2Pi).epsilon(1e-12));
  }
  SUBCASE("colored variance with residual") {
    Rig rig = make_rig(0.2, 4.0); // v = 4 * 0.04 = 0.16
    const double x = 0.6;
    const double fm = head_value(rig, rig.model.heads().force_mean[0], x);
    const double want =
        0.5 * (0.4 * 0.4 / 0.16 + std::log(0.16) + std::log(2.0 * std::numbers::pi));
    CHECK(want == doctest::Approx(0.502648).epsilon(1e-5));
    CHECK(eval_loss_node(rig, rig.loss.nll_f[0], x, 0.0, fm + 0.4) ==
          doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("NLL losses are unsupported for vanilla models") {
  Model m(small_spec(NoiseModel::kVanilla), ident(1));
  m.init_params(5);
  Graph& g = m.graph_mutable();
  const NodeId obs = g.input(1);
  CHECK_THROWS_AS(loss_nll_energy(g, m.heads(), obs), UnsupportedLoss);
  const NodeId obs_f[] = {obs};
  CHECK_THROWS_AS(loss_nll_force(g, m.heads(), obs_f), UnsupportedLoss);
}

TEST_CASE("beta weighting") {
  SUBCASE("weight values") {
    CHECK(beta_nll_weight(4.0, 0.5) == 2.0);
    CHECK(beta_nll_weight(7.3, 0.0) == 1.0);
    CHECK(beta_nll_weight(4.0, 1.0) == 4.0);
  }
  SUBCASE("beta=1 gradient w.r.t. the mean is the plain residual") {
    Rig rig = make_rig(0.7, 4.0); // sigma^2 = 0.49
    const double x = 0.25, obs = -1.3;
    Workspace ws;
    const double binds[] = {x, obs, 0.0};
    ws.forward(rig.model.graph(), binds, rig.model.params().values());
    const double mu = ws.value(rig.model.heads().mu);
    const double s2 = ws.value(rig.model.heads().energy_var);
    std::vector<double> grad(rig.model.params().size(), 0.0);
    const std::pair<NodeId, double> seeds[] = {
        {rig.loss.nll_e, beta_nll_weight(s2, 1.0)}};
    ws.backward(rig.model.graph(), seeds, grad);
    CHECK(ws.adjoint(rig.model.heads().mu) ==
          doctest::Approx(mu - obs).epsilon(1e-12));
  }
  SUBCASE("beta=0 training equals plain NLL training") {
    Dataset train = toy_train(16, 3);
    Dataset val = toy_train(8, 4);
    ModelSpec spec = small_spec(NoiseModel::kColored);
    spec.gamma.learned = false; // no phase-dependent gamma masking
    spec.gamma.fixed_value = 4.0;
    TrainConfig a;
    a.s1 = 0; a.s2 = 30; a.s3 = 0;
    a.beta_start = 0.0; a.beta_end = 0.0;
    a.val_interval = 10; a.seed = 9; a.lr0 = 1e-3;
    TrainConfig b = a;
    b.s2 = 0; b.s3 = 30;
    TrainResult ra = train_model(spec, a, train, val);
    TrainResult rb = train_model(spec, b, train, val);
    auto va = ra.model.params().values();
    auto vb = rb.model.params().values();
    REQUIRE(va.size() == vb.size());
    for (std::size_t i = 0; i < va.size(); ++i) CHECK(va[i] == vb[i]);
  }
}

TEST_CASE("Adam with zero gradient leaves parameters unchanged") {
  Adam adam(3);
  std::vector<double> p = {1.0, -2.0, 0.5};
  const std::vector<double> g = {0.0, 0.0, 0.0};
  adam.step(p, g, 0.1);
  adam.step(p, g, 0.1);
  CHECK(p[0] == 1.0);
  CHECK(p[1] == -2.0);
  CHECK(p[2] == 0.5);
}

TEST_CASE("config json defaults and round trip") {
  TrainConfig c = train_config_from_json(nlohmann::json::object());
  CHECK(c.s1 == 2000);
  CHECK(c.s2 == 1000);
  CHECK(c.s3 == 4000);
  CHECK(c.lr0 == 1e-4);
  CHECK(c.decay_base == 0.96);
  CHECK(c.decay_horizon == 1000.0);
  CHECK(c.val_interval == 50);
  CHECK(c.patience == 20);
  CHECK(c.lambda_f == 1.0);
  TrainConfig d = train_config_from_json(train_config_to_json(c));
  CHECK(train_config_to_json(d) == train_config_to_json(c));
  CHECK_THROWS(train_config_from_json(nlohmann::json{{"beta_start", 2.0}}));
  CHECK_THROWS(train_config_from_json(nlohmann::json{{"lr0", 0.0}}));
}

TEST_CASE("training is deterministic") {
  Dataset train = toy_train(16, 3);
  Dataset val = toy_train(8, 4);
  TrainConfig cfg;
  cfg.s1 = 60; cfg.s2 = 40; cfg.s3 = 80;
  cfg.val_interval = 20; cfg.seed = 11; cfg.lr0 = 1e-3;
  ModelSpec spec = small_spec(NoiseModel::kColored);
  TrainResult a = train_model(spec, cfg, train, val);
  TrainResult b = train_model(spec, cfg, train, val);
  CHECK(checkpoint_to_json(a.model, a.meta).dump() ==
        checkpoint_to_json(b.model, b.meta).dump());
}

TEST_CASE("phase 1 leaves the variance heads untouched") {
  Dataset train = toy_train(16, 3);
  Dataset val = toy_train(8, 4);
  TrainConfig cfg;
  cfg.s1 = 40; cfg.s2 = 0; cfg.s3 = 0;
  cfg.val_interval = 10; cfg.seed = 21; cfg.lr0 = 1e-3;
  ModelSpec spec = small_spec(NoiseModel::kColored);
  TrainResult r = train_model(spec, cfg, train, val);

  Model fresh(spec, fit_standardizer(train));
  fresh.init_params(cfg.seed);
  auto got_w = r.model.params().layer("rho.w");
  auto want_w = fresh.params().layer("rho.w");
  for (std::size_t i = 0; i < got_w.size(); ++i) CHECK(got_w[i] == want_w[i]);
  CHECK(r.model.params().layer("rho.b")[0] == fresh.params().layer("rho.b")[0]);
  CHECK(r.model.params().layer("gamma.g")[0] ==
        fresh.params().layer("gamma.g")[0]);
  // and the mean head did move
  bool moved = false;
  auto mw = r.model.params().layer("mu.w");
  auto fw = fresh.params().layer("mu.w");
  for (std::size_t i = 0; i < mw.size(); ++i) moved = moved || mw[i] != fw[i];
  CHECK(moved);
}

TEST_CASE("selected checkpoint has the best evaluated metric") {
  Dataset train = toy_train(16, 3);
  Dataset val = toy_train(8, 4);
  TrainConfig cfg;
  cfg.s1 = 100; cfg.s2 = 60; cfg.s3 = 300;
  cfg.val_interval = 20; cfg.seed = 2; cfg.lr0 = 2e-3;
  TrainResult r = train_model(small_spec(NoiseModel::kColored), cfg, train, val);
  const double best = r.meta.at("best_val_metric").get<double>();
  double min_seen = std::numeric_limits<double>::infinity();
  for (const auto& e : r.meta.at("val_history"))
    min_seen = std::min(min_seen, e.at("metric").get<double>());
  CHECK(best == min_seen);
  CHECK(r.meta.at("val_metric_name").get<std::string>() == "nll");
}

TEST_CASE("vanilla training runs phase 1 only and selects by MSE") {
  Dataset train = toy_train(16, 3);
  Dataset val = toy_train(8, 4);
  TrainConfig cfg;
  cfg.s1 = 50; cfg.s2 = 999; cfg.s3 = 999;
  cfg.val_interval = 10; cfg.seed = 4; cfg.lr0 = 1e-3;
  TrainResult r = train_model(small_spec(NoiseModel::kVanilla), cfg, train, val);
  CHECK(r.meta.at("steps_run").get<long long>() == 50);
  CHECK(r.meta.at("val_metric_name").get<std::string>() == "mse");
}

TEST_CASE("training config gamma override") {
  Dataset train = toy_train(16, 3);
  Dataset val = toy_train(8, 4);
  TrainConfig cfg;
  cfg.s1 = 10; cfg.s2 = 0; cfg.s3 = 0;
  cfg.val_interval = 10; cfg.seed = 4;
  cfg.gamma_mode = "fixed";
  cfg.gamma_value = 9.0;
  ModelSpec spec = small_spec(NoiseModel::kColored); // spec says learned
  TrainResult r = train_model(spec, cfg, train, val);
  CHECK_FALSE(r.model.spec().gamma.learned);
  CHECK(r.model.gamma_hat() == 9.0);
}

TEST_CASE("divergent training aborts with step diagnostics") {
  Dataset train = toy_train(16, 3);
  Dataset val = toy_train(8, 4);
  TrainConfig cfg;
  cfg.s1 = 0; cfg.s2 = 0; cfg.s3 = 10;
  cfg.val_interval = 50; cfg.seed = 1;
  cfg.lr0 = 1e60;
  try {
    train_model(small_spec(NoiseModel::kColored), cfg, train, val);
    FAIL("expected abort");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("step") != std::string::npos);
  }
}

TEST_CASE("toy curriculum drives the train energy error below the noise floor") {
  // 20-point toy set, phase ratio 2:1:4; the mean must fit to within twice
  // the generating noise variance alpha^2 = 0.04
  Dataset data = generate_dataset(30, -1.0, 1.0, KernelSpec{0.2, 0.5, 1e-4}, 7);
  Dataset train = data;
  train.rows.assign(data.rows.begin(), data.rows.begin() + 20);
  Dataset val = data;
  val.rows.assign(data.rows.begin() + 20, data.rows.end());

  ModelSpec spec;
  spec.input_dim = 1;
  spec.hidden = {16, 16};
  spec.noise_model = NoiseModel::kColored;
  TrainConfig cfg;
  cfg.s1 = 2000; cfg.s2 = 1000; cfg.s3 = 4000;
  cfg.batch = 20;
  cfg.seed = 1;
  TrainResult r = train_model(spec, cfg, train, val);

  double mse = 0.0;
  for (const DataRow& row : train.rows) {
    const double e = r.model.predict(row.x).energy_mean - row.energy;
    mse += e * e;
  }
  mse /= static_cast<double>(train.rows.size());
  CHECK(mse < 0.08);
}
