#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "gradvar/potential.hpp"

namespace gradvar {

/// Noise amplitude field sigma(x) with an analytic slope; the closed forms
/// under test need both.
struct SigmaField {
  enum Kind { kConstant, kQuadratic } kind = kConstant;
  double c = 0.2; // constant level; the quadratic is pinned to 0.1 + 0.05 x^2

  double value(double x) const;
  double slope(double x) const;
};

struct OracleConfig {
  int n_realizations = 100000;
  double ell = 0.5;
  double white_jitter = 1e-4; // variance of the jitter-only noise checks
  double h = 1e-3;            // default finite-difference step
  std::uint64_t seed = 1;
  SigmaField sigma;

  void validate() const;
};

struct McCheck {
  double empirical = 0.0;
  double closed_form = 0.0;
  double rel_error = 0.0;
};

/// Population variance over realizations of d/dx [sigma(x) eta(x)] at x0,
/// where unit-amplitude eta and its derivative are sampled jointly. Closed
/// form: sigma^2 / ell^2 + sigma'^2.
McCheck mc_force_variance(const OracleConfig& cfg, double x0);

/// Covariance of the noisy gradient at two points against the kernel
/// expansion sig'a sig'b k + sig'a sigb dk_db + siga sig'b dk_da
/// + siga sigb d2k; the parameter term is zero for deterministic sigma.
/// Coincident points reduce to the variance case.
McCheck mc_covariance(const OracleConfig& cfg, double xa, double xb);

/// Variance of the finite-difference quotient [eta(x+h) - eta(x)] / h under
/// jitter-only (uncorrelated) noise. Closed form 2 * jitter / h^2, which
/// diverges as h -> 0: the white-noise process has no derivative.
McCheck mc_white_fd_variance(const OracleConfig& cfg, double h);

/// Central finite differences of mu and rho over a grid of points (row
/// major, one point per input_dim values) against the graph derivative
/// nodes. Relative errors are scaled by max(1, |exact|, |fd|).
struct DerivativeAudit {
  double max_rel_mu = 0.0;
  double max_rel_rho = 0.0;
  bool has_rho = false;
};

DerivativeAudit audit_model_derivatives(Model& m, std::span<const double> grid,
                                        double h);

/// Monte-Carlo relative tolerance at n realizations: max(3 sqrt(2/n), 1%).
double oracle_tolerance(int n);

struct VerifyCheck {
  std::string name;
  double closed_form = 0.0;
  double empirical = 0.0;
  double tolerance = 0.0; // absolute bound on |empirical - closed_form|
  bool pass = false;
};

/// The full first-principles suite: force-variance closed forms, the
/// gradient covariance expansion at several separations, the white-noise
/// divergence law, and the stationary cross-derivative identity.
std::vector<VerifyCheck> run_verify_suite(int n, std::uint64_t seed);

nlohmann::json verify_to_json(std::span<const VerifyCheck> checks);

} // namespace gradvar
