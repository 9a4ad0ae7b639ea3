#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "gradvar/gpdata.hpp"
#include "gradvar/graph.hpp"
#include "gradvar/param_store.hpp"

namespace gradvar {

enum class NoiseModel { kVanilla, kWhite, kColored };

const char* noise_model_name(NoiseModel m);
NoiseModel noise_model_from_string(const std::string& s);

/// gamma_hat = exp(g) with trainable g when learned; a pinned constant
/// otherwise. ell0 seeds the learned value at g0 = ln(1/ell0^2).
struct GammaMode {
  bool learned = true;
  double fixed_value = 4.0;
  double ell0 = 0.5;
};

struct ModelSpec {
  int input_dim = 1;
  std::vector<int> hidden = {64, 64};
  NoiseModel noise_model = NoiseModel::kColored;
  GammaMode gamma;

  void validate() const;
};

/// Per-feature affine input map and energy scale estimated from training
/// data; stored in the checkpoint so predictions stay in physical units.
struct Standardizer {
  std::vector<double> x_mean;
  std::vector<double> x_std;
  double e_mean = 0.0;
  double e_std = 1.0;
};

Standardizer fit_standardizer(const Dataset& ds);

/// Node ids of everything training and prediction read or seed.
/// Vanilla leaves the variance ids at kNoNode; omega is white-only and
/// gamma/drho_dx/force_var per-dimension are colored-only (force_var holds
/// omega^2 for white).
struct BuiltHeads {
  std::vector<NodeId> x;
  NodeId mu = kNoNode;
  NodeId rho = kNoNode;
  NodeId omega = kNoNode;
  NodeId gamma = kNoNode;
  NodeId energy_var = kNoNode;
  std::vector<NodeId> force_mean;
  std::vector<NodeId> drho_dx;
  std::vector<NodeId> force_var;
};

struct HeadsValue {
  double mu = 0.0;
  double rho = 0.0;
  double omega = 0.0;
};

/// Predictive moments in physical units. Aleatoric parts come from one
/// model; the epistemic parts stay zero until an ensemble fills them.
struct PredictiveDist {
  double energy_mean = 0.0;
  double energy_var_alea = 0.0;
  double energy_var_epis = 0.0;
  bool has_aleatoric = false;
  std::vector<double> force_mean;
  std::vector<double> force_var_alea;
  std::vector<double> force_var_epis;
};

/// Mean-variance network: standardized tanh trunk, scalar heads, physical
/// units restored inside the graph so force nodes are exact gradients of
/// the physical energy. The graph is immutable after construction.
class Model {
 public:
  Model(ModelSpec spec, Standardizer stdr);

  /// Glorot trunk weights, zero trunk biases, Glorot head weights, variance
  /// head biases at softplus^-1(1) so initial rho is one energy std.
  void init_params(std::uint64_t seed);

  const ModelSpec& spec() const { return spec_; }
  const Standardizer& standardizer() const { return std_; }
  const Graph& graph() const { return graph_; }
  /// For appending loss nodes before a training run starts; the graph must
  /// not change once evaluation begins.
  Graph& graph_mutable() { return graph_; }
  const BuiltHeads& heads() const { return heads_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  double gamma_hat() const;

  HeadsValue forward_heads(std::span<const double> x) const;
  PredictiveDist predict(std::span<const double> x) const;

  /// predict() computed from an already-run workspace (training hot path).
  PredictiveDist predict_from(const Workspace& ws) const;

 private:
  void build();

  ModelSpec spec_;
  Standardizer std_;
  Graph graph_;
  ParamStore params_;
  BuiltHeads heads_;
};

/// softplus^-1(y) = ln(e^y - 1), evaluated stably.
inline double softplus_inv(double y) {
  return y + std::log1p(-std::exp(-y));
}

nlohmann::json checkpoint_to_json(const Model& m,
                                  const nlohmann::json& training_meta);

struct Checkpoint {
  Model model;
  nlohmann::json training;
};

Checkpoint checkpoint_from_json(const nlohmann::json& j);
void save_checkpoint(const std::string& path, const Model& m,
                     const nlohmann::json& training_meta);
Checkpoint load_checkpoint(const std::string& path);

} // namespace gradvar
