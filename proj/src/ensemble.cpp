#include "gradvar/ensemble.hpp"

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <stdexcept>
#include <utility>

#include "gradvar/io_util.hpp"

namespace gradvar {
namespace {

bool same_spec(const ModelSpec& a, const ModelSpec& b) {
  return a.input_dim == b.input_dim && a.hidden == b.hidden &&
         a.noise_model == b.noise_model &&
         a.gamma.learned == b.gamma.learned &&
         a.gamma.fixed_value == b.gamma.fixed_value &&
         a.gamma.ell0 == b.gamma.ell0;
}

bool same_standardizer(const Standardizer& a, const Standardizer& b) {
  return a.x_mean == b.x_mean && a.x_std == b.x_std && a.e_mean == b.e_mean &&
         a.e_std == b.e_std;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

} // namespace

Ensemble::Ensemble(std::vector<Checkpoint> members)
    : members_(std::move(members)) {
  if (members_.empty())
    throw std::invalid_argument("ensemble needs at least one member");
  const ModelSpec& spec0 = members_.front().model.spec();
  const Standardizer& std0 = members_.front().model.standardizer();
  for (std::size_t i = 1; i < members_.size(); ++i) {
    if (!same_spec(spec0, members_[i].model.spec()))
      throw std::invalid_argument("ensemble member " + std::to_string(i) +
                                  " has a different model spec");
    if (!same_standardizer(std0, members_[i].model.standardizer()))
      throw std::invalid_argument("ensemble member " + std::to_string(i) +
                                  " has different standardization constants");
  }
  // Canonical member order: sort by serialized content so identical
  // ensembles aggregate identically no matter how they were assembled.
  std::vector<std::pair<std::string, std::size_t>> keys;
  keys.reserve(members_.size());
  for (std::size_t i = 0; i < members_.size(); ++i)
    keys.emplace_back(
        checkpoint_to_json(members_[i].model, members_[i].training).dump(), i);
  std::sort(keys.begin(), keys.end());
  std::vector<Checkpoint> ordered;
  ordered.reserve(members_.size());
  for (const auto& [key, idx] : keys)
    ordered.push_back(std::move(members_[idx]));
  members_ = std::move(ordered);
}

PredictiveDist Ensemble::aggregate(std::span<const double> x) const {
  const std::size_t m = members_.size();
  const int dim = spec().input_dim;
  std::vector<PredictiveDist> preds;
  preds.reserve(m);
  for (const Checkpoint& c : members_) preds.push_back(c.model.predict(x));

  PredictiveDist out;
  out.has_aleatoric = preds.front().has_aleatoric;
  double mean = 0.0;
  double alea = 0.0;
  for (const PredictiveDist& p : preds) {
    mean += p.energy_mean;
    alea += p.energy_var_alea;
  }
  out.energy_mean = mean / static_cast<double>(m);
  out.energy_var_alea = alea / static_cast<double>(m);
  double epis = 0.0;
  for (const PredictiveDist& p : preds) {
    const double d = p.energy_mean - out.energy_mean;
    epis += d * d;
  }
  out.energy_var_epis = epis / static_cast<double>(m);

  out.force_mean.assign(dim, 0.0);
  out.force_var_alea.assign(dim, 0.0);
  out.force_var_epis.assign(dim, 0.0);
  for (int d = 0; d < dim; ++d) {
    double fm = 0.0;
    double fa = 0.0;
    for (const PredictiveDist& p : preds) {
      fm += p.force_mean[d];
      fa += p.force_var_alea[d];
    }
    out.force_mean[d] = fm / static_cast<double>(m);
    out.force_var_alea[d] = fa / static_cast<double>(m);
    double fe = 0.0;
    for (const PredictiveDist& p : preds) {
      const double dd = p.force_mean[d] - out.force_mean[d];
      fe += dd * dd;
    }
    out.force_var_epis[d] = fe / static_cast<double>(m);
  }
  return out;
}

std::string spec_fingerprint(const Model& m) {
  const ModelSpec& spec = m.spec();
  const Standardizer& s = m.standardizer();
  nlohmann::json j;
  j["input_dim"] = spec.input_dim;
  j["hidden"] = spec.hidden;
  j["noise_model"] = noise_model_name(spec.noise_model);
  j["gamma_mode"] = spec.gamma.learned ? "learned" : "fixed";
  j["gamma_value"] = spec.gamma.fixed_value;
  j["gamma_ell0"] = spec.gamma.ell0;
  j["x_mean"] = s.x_mean;
  j["x_std"] = s.x_std;
  j["e_mean"] = s.e_mean;
  j["e_std"] = s.e_std;
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a(j.dump())));
  return std::string(buf);
}

nlohmann::json manifest_to_json(const std::vector<std::string>& checkpoints,
                                const std::string& fingerprint) {
  nlohmann::json j;
  j["format"] = "gradvar-ensemble-v1";
  j["checkpoints"] = checkpoints;
  j["spec_fingerprint"] = fingerprint;
  return j;
}

void save_manifest(const std::string& path,
                   const std::vector<std::string>& checkpoint_paths,
                   const Model& reference) {
  write_file(path,
             manifest_to_json(checkpoint_paths, spec_fingerprint(reference))
                     .dump(2) +
                 "\n");
}

Ensemble load_ensemble(const std::string& manifest_path) {
  const nlohmann::json j = nlohmann::json::parse(read_file(manifest_path));
  if (!j.is_object() || j.value("format", "") != "gradvar-ensemble-v1")
    throw std::runtime_error("not an ensemble manifest: " + manifest_path);
  const auto& list = j.at("checkpoints");
  if (!list.is_array() || list.empty())
    throw std::runtime_error("manifest lists no checkpoints: " +
                             manifest_path);
  const std::string want = j.at("spec_fingerprint").get<std::string>();
  const std::filesystem::path base =
      std::filesystem::path(manifest_path).parent_path();
  std::vector<Checkpoint> members;
  members.reserve(list.size());
  for (const auto& entry : list) {
    std::filesystem::path p(entry.get<std::string>());
    if (p.is_relative()) p = base / p;
    members.push_back(load_checkpoint(p.string()));
    if (spec_fingerprint(members.back().model) != want)
      throw std::runtime_error("checkpoint does not match manifest spec: " +
                               p.string());
  }
  return Ensemble(std::move(members));
}

} // namespace gradvar
