#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "gradvar/potential.hpp"

namespace gradvar {

/// Deep ensemble over independently trained checkpoints sharing one
/// ModelSpec and one standardizer. Members are reordered by serialized
/// content at construction, so aggregation is bit-identical under any
/// permutation of the input list.
class Ensemble {
 public:
  explicit Ensemble(std::vector<Checkpoint> members);

  std::size_t size() const { return members_.size(); }
  const Checkpoint& member(std::size_t i) const { return members_[i]; }
  const ModelSpec& spec() const { return members_.front().model.spec(); }

  /// Predictive moments: means and aleatoric parts averaged over members,
  /// epistemic parts the population variance (divide by M) of the member
  /// means. Total variance is the exact sum aleatoric + epistemic.
  PredictiveDist aggregate(std::span<const double> x) const;

 private:
  std::vector<Checkpoint> members_;
};

/// Hex digest of the model spec and standardizer; a manifest binds to it so
/// a stale checkpoint mix is rejected at load time.
std::string spec_fingerprint(const Model& m);

nlohmann::json manifest_to_json(const std::vector<std::string>& checkpoints,
                                const std::string& fingerprint);

void save_manifest(const std::string& path,
                   const std::vector<std::string>& checkpoint_paths,
                   const Model& reference);

/// Loads every checkpoint named by the manifest. Relative paths resolve
/// against the manifest's own directory. Fingerprint mismatches throw.
Ensemble load_ensemble(const std::string& manifest_path);

} // namespace gradvar
