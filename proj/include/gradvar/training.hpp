#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "gradvar/gpdata.hpp"
#include "gradvar/potential.hpp"

namespace gradvar {

/// Requested loss needs variance heads the noise model does not have.
class UnsupportedLoss : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

struct TrainConfig {
  long long s1 = 2000;
  long long s2 = 1000;
  long long s3 = 4000;
  double lr0 = 1e-4;
  double decay_base = 0.96;
  double decay_horizon = 1000.0;
  long long batch = 0; // 0 = full dataset every step
  double beta_start = 1.0;
  double beta_end = 0.0;
  double lambda_f = 1.0;
  long long val_interval = 50;
  long long patience = 20;
  std::uint64_t seed = 0;
  std::string gamma_mode; // "" keeps the ModelSpec; "learned"/"fixed" override
  double gamma_value = 4.0;

  void validate() const;
};

TrainConfig train_config_from_json(const nlohmann::json& j);
nlohmann::json train_config_to_json(const TrainConfig& cfg);

/// lr0 * base^(step / horizon).
double lr_at(long long step, const TrainConfig& cfg);

/// Gaussian NLL of the observed energy under the model's aleatoric variance:
/// 0.5 [(obs - mu)^2 / rho^2 + ln rho^2 + ln 2pi]. Throws UnsupportedLoss
/// for vanilla models.
NodeId loss_nll_energy(Graph& g, const BuiltHeads& h, NodeId obs_energy);

/// Sum over dimensions of the per-component force NLL with the model's
/// per-dimension force variance. Throws UnsupportedLoss for vanilla models.
NodeId loss_nll_force(Graph& g, const BuiltHeads& h,
                      std::span<const NodeId> obs_force);

/// Multiplier (sigma^2)^beta of the beta-NLL. The weight is applied outside
/// the graph, as the backward seed of the NLL term and as a factor on its
/// value, so no gradient flows through it.
inline double beta_nll_weight(double sigma2, double beta) {
  return std::pow(sigma2, beta);
}

/// Observation leaves plus loss nodes appended to a model's graph. Input
/// slot layout: x fills 0..D-1, the observed energy is slot D, observed
/// forces fill D+1..2D.
struct TrainingLoss {
  NodeId obs_e = kNoNode;
  std::vector<NodeId> obs_f;
  NodeId mse = kNoNode;
  NodeId nll_e = kNoNode;          // kNoNode for vanilla
  std::vector<NodeId> nll_f;       // empty for vanilla
};

TrainingLoss build_training_loss(Model& model, double lambda_f);

class Adam {
 public:
  explicit Adam(std::size_t n, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8);
  void step(std::span<double> params, std::span<const double> grad, double lr);

 private:
  std::vector<double> m_;
  std::vector<double> v_;
  double beta1_, beta2_, eps_;
  long long t_ = 0;
};

struct TrainResult {
  Model model;           // best validation snapshot
  nlohmann::json meta;   // seed, steps, best step/metric, validation history
};

/// Three-phase curriculum: s1 steps of MSE on energy and forces, s2 steps
/// of beta-NLL with beta sliding start->end, s3 steps of plain NLL. Vanilla
/// models run phase 1 only and select by MSE; the others select by NLL at
/// every validation point. Deterministic given cfg.seed.
TrainResult train_model(const ModelSpec& spec, const TrainConfig& cfg,
                        const Dataset& train, const Dataset& val);

} // namespace gradvar
