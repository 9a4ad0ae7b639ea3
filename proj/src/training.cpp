#include "gradvar/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "gradvar/rng.hpp"

namespace gradvar {

void TrainConfig::validate() const {
  if (s1 < 0 || s2 < 0 || s3 < 0)
    throw std::invalid_argument("train config: negative phase length");
  if (!(lr0 > 0.0)) throw std::invalid_argument("train config: lr0 must be > 0");
  if (!(decay_base > 0.0) || !(decay_horizon > 0.0))
    throw std::invalid_argument("train config: bad decay schedule");
  if (batch < 0) throw std::invalid_argument("train config: negative batch");
  auto in01 = [](double b) { return b >= 0.0 && b <= 1.0; };
  if (!in01(beta_start) || !in01(beta_end))
    throw std::invalid_argument("train config: beta must lie in [0,1]");
  if (!(lambda_f >= 0.0))
    throw std::invalid_argument("train config: lambda_f must be >= 0");
  if (val_interval < 1)
    throw std::invalid_argument("train config: val_interval must be >= 1");
  if (patience < 0) throw std::invalid_argument("train config: negative patience");
  if (!gamma_mode.empty() && gamma_mode != "learned" && gamma_mode != "fixed")
    throw std::invalid_argument("train config: gamma_mode must be learned|fixed");
  if (gamma_mode == "fixed" && !(gamma_value > 0.0))
    throw std::invalid_argument("train config: fixed gamma must be > 0");
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig d;
  TrainConfig c;
  c.s1 = j.value("s1", d.s1);
  c.s2 = j.value("s2", d.s2);
  c.s3 = j.value("s3", d.s3);
  c.lr0 = j.value("lr0", d.lr0);
  c.decay_base = j.value("decay_base", d.decay_base);
  c.decay_horizon = j.value("decay_horizon", d.decay_horizon);
  c.batch = j.value("batch", d.batch);
  c.beta_start = j.value("beta_start", d.beta_start);
  c.beta_end = j.value("beta_end", d.beta_end);
  c.lambda_f = j.value("lambda_f", d.lambda_f);
  c.val_interval = j.value("val_interval", d.val_interval);
  c.patience = j.value("patience", d.patience);
  c.seed = j.value("seed", d.seed);
  c.gamma_mode = j.value("gamma_mode", d.gamma_mode);
  c.gamma_value = j.value("gamma_value", d.gamma_value);
  c.validate();
  return c;
}

nlohmann::json train_config_to_json(const TrainConfig& c) {
  return nlohmann::json{
      {"s1", c.s1},
      {"s2", c.s2},
      {"s3", c.s3},
      {"lr0", c.lr0},
      {"decay_base", c.decay_base},
      {"decay_horizon", c.decay_horizon},
      {"batch", c.batch},
      {"beta_start", c.beta_start},
      {"beta_end", c.beta_end},
      {"lambda_f", c.lambda_f},
      {"val_interval", c.val_interval},
      {"patience", c.patience},
      {"seed", c.seed},
      {"gamma_mode", c.gamma_mode},
      {"gamma_value", c.gamma_value},
  };
}

double lr_at(long long step, const TrainConfig& cfg) {
  return cfg.lr0 *
         std::pow(cfg.decay_base, static_cast<double>(step) / cfg.decay_horizon);
}

namespace {

NodeId gaussian_nll_node(Graph& g, NodeId mean, NodeId var, NodeId obs) {
  const NodeId res2 = g.square(g.sub(obs, mean));
  const NodeId ln2pi = g.constant(std::log(2.0 * std::numbers::pi));
  return g.mul(g.constant(0.5),
               g.add(g.add(g.div(res2, var), g.log(var)), ln2pi));
}

} // namespace

NodeId loss_nll_energy(Graph& g, const BuiltHeads& h, NodeId obs_energy) {
  if (h.energy_var == kNoNode)
    throw UnsupportedLoss("energy NLL needs a variance head (vanilla model)");
  return gaussian_nll_node(g, h.mu, h.energy_var, obs_energy);
}

NodeId loss_nll_force(Graph& g, const BuiltHeads& h,
                      std::span<const NodeId> obs_force) {
  if (h.force_var.empty())
    throw UnsupportedLoss("force NLL needs force variances (vanilla model)");
  if (obs_force.size() != h.force_mean.size())
    throw std::invalid_argument("force NLL: observation dimension mismatch");
  std::vector<NodeId> terms(obs_force.size());
  for (std::size_t d = 0; d < obs_force.size(); ++d)
    terms[d] = gaussian_nll_node(g, h.force_mean[d], h.force_var[d], obs_force[d]);
  return g.sum(terms);
}

TrainingLoss build_training_loss(Model& model, double lambda_f) {
  Graph& g = model.graph_mutable();
  const BuiltHeads& h = model.heads();
  const int d = model.spec().input_dim;
  TrainingLoss loss;
  loss.obs_e = g.input(d);
  loss.obs_f.resize(d);
  for (int i = 0; i < d; ++i) loss.obs_f[i] = g.input(d + 1 + i);

  std::vector<NodeId> sq(d);
  for (int i = 0; i < d; ++i)
    sq[i] = g.square(g.sub(loss.obs_f[i], h.force_mean[i]));
  loss.mse = g.add(g.square(g.sub(loss.obs_e, h.mu)),
                   g.mul(g.constant(lambda_f), g.sum(sq)));

  if (model.spec().noise_model != NoiseModel::kVanilla) {
    loss.nll_e = loss_nll_energy(g, h, loss.obs_e);
    // per-dimension nodes so beta weights can differ; loss_nll_force is
    // their sum
    loss.nll_f.resize(d);
    for (int i = 0; i < d; ++i)
      loss.nll_f[i] = gaussian_nll_node(g, h.force_mean[i], h.force_var[i],
                                        loss.obs_f[i]);
  }
  return loss;
}

Adam::Adam(std::size_t n, double beta1, double beta2, double eps)
    : m_(n, 0.0), v_(n, 0.0), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::step(std::span<double> params, std::span<const double> grad,
                double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
    params[i] -= lr * (m_[i] / bc1) / (std::sqrt(v_[i] / bc2) + eps_);
  }
}

TrainResult train_model(const ModelSpec& spec0, const TrainConfig& cfg,
                        const Dataset& train, const Dataset& val) {
  cfg.validate();
  if (train.rows.empty() || val.rows.empty())
    throw std::invalid_argument("train_model: empty dataset");
  if (train.dim != spec0.input_dim || val.dim != spec0.input_dim)
    throw std::invalid_argument("train_model: dataset dimension mismatch");

  ModelSpec spec = spec0;
  if (cfg.gamma_mode == "learned") {
    spec.gamma.learned = true;
  } else if (cfg.gamma_mode == "fixed") {
    spec.gamma.learned = false;
    spec.gamma.fixed_value = cfg.gamma_value;
  }

  const Standardizer stdr = fit_standardizer(train);
  Model work(spec, stdr);
  work.init_params(cfg.seed);
  const TrainingLoss loss = build_training_loss(work, cfg.lambda_f);
  const BuiltHeads& h = work.heads();

  const bool vanilla = spec.noise_model == NoiseModel::kVanilla;
  const int d = spec.input_dim;
  const long long s1 = cfg.s1;
  const long long s2 = vanilla ? 0 : cfg.s2;
  const long long s3 = vanilla ? 0 : cfg.s3;
  const long long total = s1 + s2 + s3;
  const long long n = static_cast<long long>(train.rows.size());
  const long long bsz = (cfg.batch <= 0 || cfg.batch >= n) ? n : cfg.batch;

  long long gamma_slot = -1;
  if (work.params().has("gamma.g"))
    gamma_slot = static_cast<long long>(work.params().range("gamma.g").first);

  Workspace ws;
  Adam adam(work.params().size());
  std::vector<double> grad(work.params().size(), 0.0);
  std::vector<double> binds(2 * d + 1, 0.0);
  std::vector<std::pair<NodeId, double>> seeds;

  auto forward_row = [&](const DataRow& r) {
    for (int i = 0; i < d; ++i) binds[i] = r.x[i];
    binds[d] = r.energy;
    for (int i = 0; i < d; ++i) binds[d + 1 + i] = r.force[i];
    ws.forward(work.graph(), binds, work.params().values());
  };

  // selection metric: composite MSE for vanilla, plain NLL otherwise
  auto val_metric = [&]() {
    double acc = 0.0;
    for (const DataRow& r : val.rows) {
      forward_row(r);
      if (vanilla) {
        const double er = ws.value(h.mu) - r.energy;
        double s = er * er;
        for (int i = 0; i < d; ++i) {
          const double fr = ws.value(h.force_mean[i]) - r.force[i];
          s += cfg.lambda_f * fr * fr;
        }
        acc += s;
      } else {
        acc += ws.value(loss.nll_e);
        for (int i = 0; i < d; ++i) acc += ws.value(loss.nll_f[i]);
      }
    }
    return acc / static_cast<double>(val.rows.size());
  };

  std::vector<long long> order(n);
  std::iota(order.begin(), order.end(), 0);
  long long cursor = n;
  long long epoch = 0;
  auto next_batch = [&](std::vector<long long>& idx) {
    idx.resize(bsz);
    if (bsz == n) {
      std::iota(idx.begin(), idx.end(), 0);
      return;
    }
    for (long long b = 0; b < bsz; ++b) {
      if (cursor == n) {
        Rng shuffle_rng(derive_seed(cfg.seed, 50000 + epoch));
        for (long long i = n - 1; i > 0; --i)
          std::swap(order[i], order[shuffle_rng.below(i + 1)]);
        cursor = 0;
        ++epoch;
      }
      idx[b] = order[cursor++];
    }
  };

  std::vector<double> best_params(work.params().values().begin(),
                                  work.params().values().end());
  double best_metric = std::numeric_limits<double>::infinity();
  long long best_step = -1;
  long long since_improve = 0;
  bool stopped_early = false;
  long long steps_run = 0;
  nlohmann::json history = nlohmann::json::array();

  std::vector<long long> batch_idx;
  for (long long step = 0; step < total; ++step) {
    const int phase = step < s1 ? 1 : (step < s1 + s2 ? 2 : 3);
    double beta = cfg.beta_end;
    if (phase == 2 && s2 > 1) {
      const double t = static_cast<double>(step - s1) / static_cast<double>(s2 - 1);
      beta = cfg.beta_start + (cfg.beta_end - cfg.beta_start) * t;
    }

    next_batch(batch_idx);
    std::fill(grad.begin(), grad.end(), 0.0);
    double loss_acc = 0.0;
    const double invb = 1.0 / static_cast<double>(bsz);
    try {
      for (long long idx : batch_idx) {
        forward_row(train.rows[idx]);
        seeds.clear();
        if (phase == 1) {
          seeds.emplace_back(loss.mse, invb);
          loss_acc += ws.value(loss.mse) * invb;
        } else if (phase == 2) {
          const double we = beta_nll_weight(ws.value(h.energy_var), beta);
          seeds.emplace_back(loss.nll_e, we * invb);
          loss_acc += we * ws.value(loss.nll_e) * invb;
          for (int i = 0; i < d; ++i) {
            const double wf = beta_nll_weight(ws.value(h.force_var[i]), beta);
            seeds.emplace_back(loss.nll_f[i], wf * invb);
            loss_acc += wf * ws.value(loss.nll_f[i]) * invb;
          }
        } else {
          seeds.emplace_back(loss.nll_e, invb);
          loss_acc += ws.value(loss.nll_e) * invb;
          for (int i = 0; i < d; ++i) {
            seeds.emplace_back(loss.nll_f[i], invb);
            loss_acc += ws.value(loss.nll_f[i]) * invb;
          }
        }
        ws.backward(work.graph(), seeds, grad);
      }
    } catch (const NumericError& e) {
      throw std::runtime_error("training aborted: " + std::string(e.what()) +
                               " at step " + std::to_string(step) + " (phase " +
                               std::to_string(phase) + ")");
    }
    if (!std::isfinite(loss_acc))
      throw std::runtime_error("training aborted: non-finite loss at step " +
                               std::to_string(step) + " (phase " +
                               std::to_string(phase) + ")");
    // gamma trains in phase 3 only
    if (gamma_slot >= 0 && phase != 3) grad[gamma_slot] = 0.0;
    adam.step(work.params().values(), grad, lr_at(step, cfg));
    if (!work.params().all_finite())
      throw std::runtime_error(
          "training aborted: non-finite parameter after step " +
          std::to_string(step));
    steps_run = step + 1;

    if ((step + 1) % cfg.val_interval == 0 || step == total - 1) {
      double metric;
      try {
        metric = val_metric();
      } catch (const NumericError& e) {
        throw std::runtime_error("training aborted: " + std::string(e.what()) +
                                 " during validation after step " +
                                 std::to_string(step));
      }
      if (!std::isfinite(metric))
        throw std::runtime_error(
            "training aborted: non-finite validation metric after step " +
            std::to_string(step));
      history.push_back({{"step", step + 1}, {"metric", metric}});
      if (metric < best_metric) {
        best_metric = metric;
        best_step = step + 1;
        std::copy(work.params().values().begin(), work.params().values().end(),
                  best_params.begin());
        since_improve = 0;
      } else {
        ++since_improve;
      }
      // patience is armed only in the final phase: earlier plateaus are
      // expected while later phases still have new objectives to train
      if (phase == 3 && since_improve > cfg.patience) {
        stopped_early = true;
        break;
      }
    }
  }

  if (best_step < 0) {
    best_metric = val_metric();
    best_step = 0;
    history.push_back({{"step", 0}, {"metric", best_metric}});
  }

  Model out(spec, stdr);
  std::copy(best_params.begin(), best_params.end(),
            out.params().values().begin());

  nlohmann::json meta{
      {"seed", cfg.seed},
      {"noise_model", noise_model_name(spec.noise_model)},
      {"phases", {{"s1", s1}, {"s2", s2}, {"s3", s3}}},
      {"steps_run", steps_run},
      {"best_step", best_step},
      {"best_val_metric", best_metric},
      {"val_metric_name", vanilla ? "mse" : "nll"},
      {"stopped_early", stopped_early},
      {"val_history", history},
  };
  return TrainResult{std::move(out), std::move(meta)};
}

} // namespace gradvar
