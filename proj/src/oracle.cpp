#include "gradvar/oracle.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "gradvar/gpdata.hpp"
#include "gradvar/rng.hpp"

namespace gradvar {
namespace {

KernelSpec unit_kernel(double ell) {
  KernelSpec k;
  k.alpha = 1.0;
  k.ell = ell;
  k.jitter = 0.0;
  return k;
}

struct GradMoments {
  double mean = 0.0;
  double var = 0.0;
};

// One pass of n realizations of g = sigma' eta + sigma eta' at x0.
GradMoments sample_gradient_moments(const OracleConfig& cfg, double x0,
                                    std::uint64_t stream) {
  const KernelSpec k = unit_kernel(cfg.ell);
  const double s = cfg.sigma.value(x0);
  const double ds = cfg.sigma.slope(x0);
  const double xs[1] = {x0};
  const std::uint64_t base = derive_seed(cfg.seed, stream);
  double mean = 0.0;
  double m2 = 0.0;
  for (int i = 0; i < cfg.n_realizations; ++i) {
    const JointSample joint = sample_joint(xs, k, derive_seed(base, i));
    const double g = ds * joint.value[0] + s * joint.slope[0];
    const double d = g - mean;
    mean += d / static_cast<double>(i + 1);
    m2 += d * (g - mean);
  }
  return {mean, m2 / static_cast<double>(cfg.n_realizations)};
}

double rel_to_closed(double empirical, double closed) {
  return std::abs(empirical - closed) / std::max(std::abs(closed), 1e-300);
}

std::string fmt_sep(double sep) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", sep);
  return buf;
}

} // namespace

double SigmaField::value(double x) const {
  return kind == kConstant ? c : 0.1 + 0.05 * x * x;
}

double SigmaField::slope(double x) const {
  return kind == kConstant ? 0.0 : 0.1 * x;
}

void OracleConfig::validate() const {
  if (n_realizations < 100)
    throw std::invalid_argument("oracle needs at least 100 realizations");
  if (!(ell > 0.0)) throw std::invalid_argument("length scale must be positive");
  if (!(white_jitter > 0.0))
    throw std::invalid_argument("white-noise jitter must be positive");
  if (!(h > 0.0))
    throw std::invalid_argument("finite-difference step must be positive");
}

McCheck mc_force_variance(const OracleConfig& cfg, double x0) {
  cfg.validate();
  const GradMoments m = sample_gradient_moments(cfg, x0, 1);
  const double s = cfg.sigma.value(x0);
  const double ds = cfg.sigma.slope(x0);
  const double closed = s * s / (cfg.ell * cfg.ell) + ds * ds;
  return {m.var, closed, rel_to_closed(m.var, closed)};
}

McCheck mc_covariance(const OracleConfig& cfg, double xa, double xb) {
  cfg.validate();
  const KernelSpec k = unit_kernel(cfg.ell);
  const KernelBlock kb = kernel_block(k, xa, xb, xa == xb);
  const double sa = cfg.sigma.value(xa);
  const double dsa = cfg.sigma.slope(xa);
  const double sb = cfg.sigma.value(xb);
  const double dsb = cfg.sigma.slope(xb);
  const double closed =
      dsa * dsb * kb.k + dsa * sb * kb.dk_db + sa * dsb * kb.dk_da +
      sa * sb * kb.d2k;

  double empirical;
  if (xa == xb) {
    empirical = sample_gradient_moments(cfg, xa, 2).var;
  } else {
    const double xs[2] = {xa, xb};
    const std::uint64_t base = derive_seed(cfg.seed, 2);
    double mean_a = 0.0;
    double mean_b = 0.0;
    double comoment = 0.0;
    for (int i = 0; i < cfg.n_realizations; ++i) {
      const JointSample joint = sample_joint(xs, k, derive_seed(base, i));
      const double ga = dsa * joint.value[0] + sa * joint.slope[0];
      const double gb = dsb * joint.value[1] + sb * joint.slope[1];
      const double da = ga - mean_a;
      mean_a += da / static_cast<double>(i + 1);
      mean_b += (gb - mean_b) / static_cast<double>(i + 1);
      comoment += da * (gb - mean_b);
    }
    empirical = comoment / static_cast<double>(cfg.n_realizations);
  }
  return {empirical, closed, rel_to_closed(empirical, closed)};
}

McCheck mc_white_fd_variance(const OracleConfig& cfg, double h) {
  cfg.validate();
  if (!(h > 0.0))
    throw std::invalid_argument("finite-difference step must be positive");
  const double amp = std::sqrt(cfg.white_jitter);
  const std::uint64_t base =
      derive_seed(derive_seed(cfg.seed, 3), std::bit_cast<std::uint64_t>(h));
  double mean = 0.0;
  double m2 = 0.0;
  for (int i = 0; i < cfg.n_realizations; ++i) {
    Rng r(derive_seed(base, i));
    const double q = amp * (r.gaussian() - r.gaussian()) / h;
    const double d = q - mean;
    mean += d / static_cast<double>(i + 1);
    m2 += d * (q - mean);
  }
  const double empirical = m2 / static_cast<double>(cfg.n_realizations);
  const double closed = 2.0 * cfg.white_jitter / (h * h);
  return {empirical, closed, rel_to_closed(empirical, closed)};
}

DerivativeAudit audit_model_derivatives(Model& m, std::span<const double> grid,
                                        double h) {
  if (!(h > 0.0))
    throw std::invalid_argument("finite-difference step must be positive");
  const int dim = m.spec().input_dim;
  if (grid.empty() || grid.size() % static_cast<std::size_t>(dim) != 0)
    throw std::invalid_argument("grid size is not a multiple of input_dim");

  DerivativeAudit out;
  out.has_rho = m.heads().rho != kNoNode;
  std::vector<NodeId> drho(dim, kNoNode);
  if (out.has_rho) {
    for (int d = 0; d < dim; ++d)
      drho[d] = m.heads().drho_dx.empty()
                    ? m.graph_mutable().derive(m.heads().rho, m.heads().x[d])
                    : m.heads().drho_dx[d];
  }

  const auto rel = [](double fd, double exact) {
    const double scale = std::max({1.0, std::abs(fd), std::abs(exact)});
    return std::abs(fd - exact) / scale;
  };

  Workspace ws;
  std::vector<double> x(dim);
  for (std::size_t p = 0; p + dim <= grid.size(); p += dim) {
    for (int d = 0; d < dim; ++d) x[d] = grid[p + d];
    ws.forward(m.graph(), x, m.params().values());
    for (int d = 0; d < dim; ++d) {
      const double exact_mu = -ws.value(m.heads().force_mean[d]);
      const double exact_rho = out.has_rho ? ws.value(drho[d]) : 0.0;
      std::vector<double> hi = x;
      std::vector<double> lo = x;
      hi[d] += h;
      lo[d] -= h;
      const HeadsValue vh = m.forward_heads(hi);
      const HeadsValue vl = m.forward_heads(lo);
      out.max_rel_mu =
          std::max(out.max_rel_mu, rel((vh.mu - vl.mu) / (2.0 * h), exact_mu));
      if (out.has_rho)
        out.max_rel_rho = std::max(
            out.max_rel_rho, rel((vh.rho - vl.rho) / (2.0 * h), exact_rho));
    }
  }
  return out;
}

double oracle_tolerance(int n) {
  return std::max(3.0 * std::sqrt(2.0 / static_cast<double>(n)), 0.01);
}

std::vector<VerifyCheck> run_verify_suite(int n, std::uint64_t seed) {
  OracleConfig cfg;
  cfg.n_realizations = n;
  cfg.seed = seed;
  cfg.validate();
  const double rel = oracle_tolerance(n);
  std::vector<VerifyCheck> checks;
  const auto push = [&](std::string name, const McCheck& mc, double tol_abs) {
    VerifyCheck c;
    c.name = std::move(name);
    c.closed_form = mc.closed_form;
    c.empirical = mc.empirical;
    c.tolerance = tol_abs;
    c.pass = std::abs(mc.empirical - mc.closed_form) <= tol_abs;
    checks.push_back(std::move(c));
  };

  // Variance of the differentiated noise, constant and varying amplitude.
  {
    OracleConfig c = cfg;
    c.sigma = {SigmaField::kConstant, 0.2};
    const McCheck mc = mc_force_variance(c, 0.3);
    push("force-variance sigma=0.2", mc, rel * mc.closed_form);

    const GradMoments gm = sample_gradient_moments(c, 0.3, 4);
    VerifyCheck mean_check;
    mean_check.name = "gradient-noise mean";
    mean_check.closed_form = 0.0;
    mean_check.empirical = gm.mean;
    mean_check.tolerance =
        3.0 * std::sqrt(mc.closed_form / static_cast<double>(n));
    mean_check.pass = std::abs(gm.mean) <= mean_check.tolerance;
    checks.push_back(std::move(mean_check));
  }
  {
    OracleConfig c = cfg;
    c.sigma.kind = SigmaField::kQuadratic;
    const McCheck mc = mc_force_variance(c, 1.0);
    push("force-variance sigma=0.1+0.05x^2", mc, rel * mc.closed_form);
  }
  {
    OracleConfig c = cfg;
    c.sigma = {SigmaField::kConstant, 0.0};
    push("force-variance sigma=0", mc_force_variance(c, 0.0), 0.0);
  }

  // Gradient covariance against the kernel expansion. The closed form
  // crosses zero at separation ell, so tolerances are scaled by the larger
  // of |closed| and the coincident variance.
  {
    OracleConfig c = cfg;
    c.sigma = {SigmaField::kConstant, 0.2};
    const double var0 = 0.2 * 0.2 / (c.ell * c.ell);
    const double xa = -0.1;
    for (double sep : {0.0, 0.5 * c.ell, c.ell, 2.0 * c.ell}) {
      const McCheck mc = mc_covariance(c, xa, xa + sep);
      push("gradient-covariance sep=" + fmt_sep(sep), mc,
           rel * std::max(std::abs(mc.closed_form), var0));
    }
  }

  // White-noise divergence: variance of the difference quotient follows
  // 2 jitter / h^2, so shrinking h tenfold multiplies it by 100.
  {
    const McCheck a = mc_white_fd_variance(cfg, 1e-2);
    const McCheck b = mc_white_fd_variance(cfg, 1e-3);
    push("white-noise fd-variance h=1e-2", a, rel * a.closed_form);
    push("white-noise fd-variance h=1e-3", b, rel * b.closed_form);
    VerifyCheck ratio;
    ratio.name = "white-noise fd-variance ratio";
    ratio.closed_form = 100.0;
    ratio.empirical = b.empirical / a.empirical;
    ratio.tolerance = 20.0;
    ratio.pass = std::abs(ratio.empirical - 100.0) <= ratio.tolerance;
    checks.push_back(std::move(ratio));
  }

  // Stationary kernel: both first cross-derivatives vanish at coincidence,
  // which is why no cross term survives in the variance closed form.
  {
    const KernelBlock kb = kernel_block(unit_kernel(cfg.ell), 0.7, 0.7, false);
    VerifyCheck c;
    c.name = "stationary cross-derivative at zero separation";
    c.closed_form = 0.0;
    c.empirical = std::max(std::abs(kb.dk_db), std::abs(kb.dk_da));
    c.tolerance = 0.0;
    c.pass = c.empirical == 0.0;
    checks.push_back(std::move(c));
  }
  return checks;
}

nlohmann::json verify_to_json(std::span<const VerifyCheck> checks) {
  nlohmann::json arr = nlohmann::json::array();
  for (const VerifyCheck& c : checks) {
    nlohmann::json j;
    j["check"] = c.name;
    j["closed_form"] = c.closed_form;
    j["empirical"] = c.empirical;
    j["tolerance"] = c.tolerance;
    j["pass"] = c.pass;
    arr.push_back(j);
  }
  return arr;
}

} // namespace gradvar
