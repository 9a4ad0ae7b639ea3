#include "gradvar/potential.hpp"

#include <algorithm>

#include <cmath>
#include <stdexcept>

#include "gradvar/io_util.hpp"
#include "gradvar/rng.hpp"

namespace gradvar {

const char* noise_model_name(NoiseModel m) {
  switch (m) {
    case NoiseModel::kVanilla: return "vanilla";
    case NoiseModel::kWhite: return "white";
    case NoiseModel::kColored: return "colored";
  }
  return "?";
}

NoiseModel noise_model_from_string(const std::string& s) {
  if (s == "vanilla") return NoiseModel::kVanilla;
  if (s == "white") return NoiseModel::kWhite;
  if (s == "colored") return NoiseModel::kColored;
  throw std::invalid_argument("unknown noise model '" + s + "'");
}

void ModelSpec::validate() const {
  if (input_dim < 1) throw std::invalid_argument("model: input_dim must be >= 1");
  if (hidden.empty())
    throw std::invalid_argument("model: need at least one hidden layer");
  for (int h : hidden)
    if (h < 1) throw std::invalid_argument("model: hidden sizes must be >= 1");
  if (noise_model == NoiseModel::kColored) {
    if (!gamma.learned && !(gamma.fixed_value > 0.0))
      throw std::invalid_argument("model: fixed gamma must be > 0");
    if (gamma.learned && !(gamma.ell0 > 0.0))
      throw std::invalid_argument("model: gamma ell0 must be > 0");
  }
}

Standardizer fit_standardizer(const Dataset& ds) {
  if (ds.rows.empty()) throw std::invalid_argument("standardizer: empty dataset");
  const int d = ds.dim;
  const double n = static_cast<double>(ds.rows.size());
  Standardizer s;
  s.x_mean.assign(d, 0.0);
  s.x_std.assign(d, 0.0);
  for (const DataRow& r : ds.rows) {
    for (int i = 0; i < d; ++i) s.x_mean[i] += r.x[i];
    s.e_mean += r.energy;
  }
  for (int i = 0; i < d; ++i) s.x_mean[i] /= n;
  s.e_mean /= n;
  double ev = 0.0;
  for (const DataRow& r : ds.rows) {
    for (int i = 0; i < d; ++i) {
      const double c = r.x[i] - s.x_mean[i];
      s.x_std[i] += c * c;
    }
    ev += (r.energy - s.e_mean) * (r.energy - s.e_mean);
  }
  for (int i = 0; i < d; ++i) {
    s.x_std[i] = std::sqrt(s.x_std[i] / n);
    if (s.x_std[i] < 1e-12) s.x_std[i] = 1.0; // constant feature: leave as-is
  }
  s.e_std = std::sqrt(ev / n);
  if (s.e_std < 1e-12) s.e_std = 1.0;
  return s;
}

Model::Model(ModelSpec spec, Standardizer stdr)
    : spec_(std::move(spec)), std_(std::move(stdr)) {
  spec_.validate();
  if (static_cast<int>(std_.x_mean.size()) != spec_.input_dim ||
      static_cast<int>(std_.x_std.size()) != spec_.input_dim)
    throw std::invalid_argument("model: standardizer dimension mismatch");
  build();
}

namespace {

// z_u = sum_i w[u*p+i] * in[i] + b[u]; weight layout is row-major by unit.
std::vector<NodeId> dense(Graph& g, std::size_t w0, std::size_t b0,
                          const std::vector<NodeId>& in, int q, bool act) {
  const int p = static_cast<int>(in.size());
  std::vector<NodeId> out(q);
  std::vector<NodeId> terms;
  for (int u = 0; u < q; ++u) {
    terms.clear();
    for (int i = 0; i < p; ++i)
      terms.push_back(g.mul(g.param(static_cast<int>(w0) + u * p + i), in[i]));
    terms.push_back(g.param(static_cast<int>(b0) + u));
    const NodeId z = g.sum(terms);
    out[u] = act ? g.tanh(z) : z;
  }
  return out;
}

} // namespace

void Model::build() {
  const int d = spec_.input_dim;
  int prev = d;
  for (std::size_t i = 0; i < spec_.hidden.size(); ++i) {
    const std::string pre = "trunk" + std::to_string(i);
    params_.allocate(pre + ".w", static_cast<std::size_t>(prev) * spec_.hidden[i]);
    params_.allocate(pre + ".b", spec_.hidden[i]);
    prev = spec_.hidden[i];
  }
  params_.allocate("mu.w", prev);
  params_.allocate("mu.b", 1);
  const bool has_rho = spec_.noise_model != NoiseModel::kVanilla;
  if (has_rho) {
    params_.allocate("rho.w", prev);
    params_.allocate("rho.b", 1);
  }
  if (spec_.noise_model == NoiseModel::kWhite) {
    params_.allocate("omega.w", prev);
    params_.allocate("omega.b", 1);
  }
  if (spec_.noise_model == NoiseModel::kColored && spec_.gamma.learned)
    params_.allocate("gamma.g", 1);

  Graph& g = graph_;
  heads_.x.resize(d);
  std::vector<NodeId> h(d);
  for (int i = 0; i < d; ++i) {
    heads_.x[i] = g.input(i);
    h[i] = g.mul(g.sub(heads_.x[i], g.constant(std_.x_mean[i])),
                 g.constant(1.0 / std_.x_std[i]));
  }
  for (std::size_t i = 0; i < spec_.hidden.size(); ++i) {
    const std::string pre = "trunk" + std::to_string(i);
    h = dense(g, params_.range(pre + ".w").first,
              params_.range(pre + ".b").first, h, spec_.hidden[i], true);
  }

  const NodeId mu_t = dense(g, params_.range("mu.w").first,
                            params_.range("mu.b").first, h, 1, false)[0];
  heads_.mu = g.add(g.mul(g.constant(std_.e_std), mu_t), g.constant(std_.e_mean));

  if (has_rho) {
    const NodeId rho_t = dense(g, params_.range("rho.w").first,
                               params_.range("rho.b").first, h, 1, false)[0];
    heads_.rho = g.mul(g.constant(std_.e_std), g.softplus(rho_t));
    heads_.energy_var = g.square(heads_.rho);
  }
  if (spec_.noise_model == NoiseModel::kWhite) {
    const NodeId omega_t = dense(g, params_.range("omega.w").first,
                                 params_.range("omega.b").first, h, 1, false)[0];
    // one omega for all spatial dimensions, in force units
    double inv2 = 0.0;
    for (int i = 0; i < d; ++i) inv2 += 1.0 / (std_.x_std[i] * std_.x_std[i]);
    const double omega_scale = std_.e_std * std::sqrt(inv2 / d);
    heads_.omega = g.mul(g.constant(omega_scale), g.softplus(omega_t));
  }
  if (spec_.noise_model == NoiseModel::kColored) {
    heads_.gamma = spec_.gamma.learned
                       ? g.exp(g.param(static_cast<int>(
                             params_.range("gamma.g").first)))
                       : g.constant(spec_.gamma.fixed_value);
  }

  heads_.force_mean.resize(d);
  for (int i = 0; i < d; ++i)
    heads_.force_mean[i] = g.neg(g.derive(heads_.mu, heads_.x[i]));

  if (spec_.noise_model == NoiseModel::kColored) {
    heads_.drho_dx.resize(d);
    heads_.force_var.resize(d);
    const NodeId grho2 = g.mul(heads_.gamma, g.square(heads_.rho));
    for (int i = 0; i < d; ++i) {
      heads_.drho_dx[i] = g.derive(heads_.rho, heads_.x[i]);
      heads_.force_var[i] = g.add(grho2, g.square(heads_.drho_dx[i]));
    }
  } else if (spec_.noise_model == NoiseModel::kWhite) {
    heads_.force_var.assign(d, g.square(heads_.omega));
  }
}

void Model::init_params(std::uint64_t seed) {
  int prev = spec_.input_dim;
  for (std::size_t i = 0; i < spec_.hidden.size(); ++i) {
    const std::string pre = "trunk" + std::to_string(i);
    Rng r(derive_seed(seed, i));
    const double lim = std::sqrt(6.0 / (prev + spec_.hidden[i]));
    for (double& w : params_.layer(pre + ".w")) w = r.uniform(-lim, lim);
    for (double& b : params_.layer(pre + ".b")) b = 0.0;
    prev = spec_.hidden[i];
  }
  {
    Rng r(derive_seed(seed, 1000));
    const double lim = std::sqrt(6.0 / (prev + 1));
    for (double& w : params_.layer("mu.w")) w = r.uniform(-lim, lim);
    params_.layer("mu.b")[0] = 0.0;
  }
  // variance heads start flat: rho = e_std and omega = omega_scale everywhere
  if (params_.has("rho.w")) {
    for (double& w : params_.layer("rho.w")) w = 0.0;
    params_.layer("rho.b")[0] = softplus_inv(1.0);
  }
  if (params_.has("omega.w")) {
    for (double& w : params_.layer("omega.w")) w = 0.0;
    params_.layer("omega.b")[0] = softplus_inv(1.0);
  }
  if (params_.has("gamma.g"))
    params_.layer("gamma.g")[0] = -2.0 * std::log(spec_.gamma.ell0);
}

double Model::gamma_hat() const {
  if (spec_.noise_model != NoiseModel::kColored)
    throw std::logic_error("gamma_hat: not a colored model");
  return spec_.gamma.learned ? std::exp(params_.layer("gamma.g")[0])
                             : spec_.gamma.fixed_value;
}

HeadsValue Model::forward_heads(std::span<const double> x) const {
  if (static_cast<int>(x.size()) != spec_.input_dim)
    throw std::invalid_argument("forward_heads: input dimension mismatch");
  Workspace ws;
  ws.forward(graph_, x, params_.values());
  HeadsValue v;
  v.mu = ws.value(heads_.mu);
  if (heads_.rho != kNoNode) v.rho = ws.value(heads_.rho);
  if (heads_.omega != kNoNode) v.omega = ws.value(heads_.omega);
  return v;
}

PredictiveDist Model::predict(std::span<const double> x) const {
  if (static_cast<int>(x.size()) != spec_.input_dim)
    throw std::invalid_argument("predict: input dimension mismatch");
  Workspace ws;
  ws.forward(graph_, x, params_.values());
  return predict_from(ws);
}

PredictiveDist Model::predict_from(const Workspace& ws) const {
  const int d = spec_.input_dim;
  PredictiveDist p;
  p.energy_mean = ws.value(heads_.mu);
  p.has_aleatoric = spec_.noise_model != NoiseModel::kVanilla;
  p.energy_var_alea = p.has_aleatoric ? ws.value(heads_.energy_var) : 0.0;
  p.force_mean.resize(d);
  p.force_var_alea.assign(d, 0.0);
  p.force_var_epis.assign(d, 0.0);
  for (int i = 0; i < d; ++i) {
    p.force_mean[i] = ws.value(heads_.force_mean[i]);
    if (p.has_aleatoric) p.force_var_alea[i] = ws.value(heads_.force_var[i]);
  }
  return p;
}

nlohmann::json checkpoint_to_json(const Model& m,
                                  const nlohmann::json& training_meta) {
  const ModelSpec& s = m.spec();
  nlohmann::json spec{
      {"input_dim", s.input_dim},
      {"hidden", s.hidden},
      {"noise_model", noise_model_name(s.noise_model)},
      {"gamma_mode", s.gamma.learned ? "learned" : "fixed"},
      {"gamma_value", s.gamma.fixed_value},
      {"gamma_ell0", s.gamma.ell0},
  };
  const Standardizer& st = m.standardizer();
  nlohmann::json stj{
      {"x_mean", st.x_mean},
      {"x_std", st.x_std},
      {"e_mean", st.e_mean},
      {"e_std", st.e_std},
  };
  nlohmann::json ranges = nlohmann::json::object();
  for (const auto& [name, r] : m.params().ranges())
    ranges[name] = {r.first, r.second};
  nlohmann::json j{
      {"format", "gradvar-checkpoint-v1"},
      {"spec", spec},
      {"standardizer", stj},
      {"params", {{"values", std::vector<double>(m.params().values().begin(),
                                                 m.params().values().end())},
                  {"ranges", ranges}}},
      {"training", training_meta},
  };
  if (s.noise_model == NoiseModel::kColored) j["gamma_hat"] = m.gamma_hat();
  return j;
}

Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "gradvar-checkpoint-v1")
    throw std::runtime_error("checkpoint: unrecognized format tag");
  const nlohmann::json& sj = j.at("spec");
  ModelSpec spec;
  spec.input_dim = sj.at("input_dim").get<int>();
  spec.hidden = sj.at("hidden").get<std::vector<int>>();
  spec.noise_model = noise_model_from_string(sj.at("noise_model").get<std::string>());
  spec.gamma.learned = sj.at("gamma_mode").get<std::string>() == "learned";
  spec.gamma.fixed_value = sj.at("gamma_value").get<double>();
  spec.gamma.ell0 = sj.at("gamma_ell0").get<double>();
  const nlohmann::json& tj = j.at("standardizer");
  Standardizer st;
  st.x_mean = tj.at("x_mean").get<std::vector<double>>();
  st.x_std = tj.at("x_std").get<std::vector<double>>();
  st.e_mean = tj.at("e_mean").get<double>();
  st.e_std = tj.at("e_std").get<double>();

  Model m(spec, st);
  const std::vector<double> vals =
      j.at("params").at("values").get<std::vector<double>>();
  if (vals.size() != m.params().size())
    throw std::runtime_error("checkpoint: parameter count mismatch");
  std::copy(vals.begin(), vals.end(), m.params().values().begin());
  if (!m.params().all_finite())
    throw std::runtime_error("checkpoint: non-finite parameter");
  return Checkpoint{std::move(m), j.value("training", nlohmann::json::object())};
}

void save_checkpoint(const std::string& path, const Model& m,
                     const nlohmann::json& training_meta) {
  write_file(path, checkpoint_to_json(m, training_meta).dump(2) + "\n");
}

Checkpoint load_checkpoint(const std::string& path) {
  return checkpoint_from_json(nlohmann::json::parse(read_file(path)));
}

} // namespace gradvar
